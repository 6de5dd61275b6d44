use super::{MeshError, SimplicialMesh};
use crate::geometry::{barycentric, distance, point_segment_distance, Point};

/// Barycentric coordinates at or above this are treated as inside and clamped to 0.
const BARY_TOL: f64 = 1e-12;

/// A located point: containing triangle and barycentric coordinates (sum 1, all ≥ 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub triangle: usize,
    pub bary: [f64; 3],
}

/// Uniform bucket grid over a rectangle. Each cell lists the triangles whose bounding
/// box meets it. Works for any point/triangle arrays, so the warp reuses it for
/// image-space triangles.
#[derive(Debug, Clone)]
pub struct TriangleGrid {
    min: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl TriangleGrid {
    /// Builds a grid over `[min, max]` with cell size close to the mean triangle diameter.
    pub fn new(points: &[Point], triangles: &[[usize; 3]], min: Point, max: Point) -> Self {
        let span_x = (max.x - min.x).max(f64::MIN_POSITIVE);
        let span_y = (max.y - min.y).max(f64::MIN_POSITIVE);
        let mean_diam = if triangles.is_empty() {
            span_x.max(span_y)
        } else {
            triangles
                .iter()
                .map(|t| {
                    let [a, b, c] = t.map(|v| points[v]);
                    distance(&a, &b).max(distance(&b, &c)).max(distance(&c, &a))
                })
                .sum::<f64>()
                / triangles.len() as f64
        };
        // keep the grid from exploding on very fine meshes of thin domains
        let max_cells = (4 * triangles.len()).max(16) as f64;
        let mut cell = mean_diam.max(f64::MIN_POSITIVE);
        if (span_x / cell).ceil() * (span_y / cell).ceil() > max_cells {
            cell = (span_x * span_y / max_cells).sqrt();
        }
        let nx = ((span_x / cell).ceil() as usize).max(1);
        let ny = ((span_y / cell).ceil() as usize).max(1);
        let mut grid = TriangleGrid { min, cell, nx, ny, cells: vec![Vec::new(); nx * ny] };
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|v| points[v]);
            let (i0, j0) = grid.cell_of(&Point::new(a.x.min(b.x).min(c.x), a.y.min(b.y).min(c.y)));
            let (i1, j1) = grid.cell_of(&Point::new(a.x.max(b.x).max(c.x), a.y.max(b.y).max(c.y)));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    grid.cells[j * nx + i].push(t as u32);
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: &Point) -> (usize, usize) {
        let i = ((p.x - self.min.x) / self.cell).floor();
        let j = ((p.y - self.min.y) / self.cell).floor();
        let clamp = |v: f64, n: usize| if v.is_nan() || v < 0.0 { 0 } else { (v as usize).min(n - 1) };
        (clamp(i, self.nx), clamp(j, self.ny))
    }

    pub fn candidates(&self, p: &Point) -> &[u32] {
        let (i, j) = self.cell_of(p);
        &self.cells[j * self.nx + i]
    }

    /// Triangle containing `p`, with clamped barycentrics. Among several candidates
    /// (points on shared edges) the one with the largest minimum coordinate wins.
    pub fn find(&self, points: &[Point], triangles: &[[usize; 3]], p: &Point) -> Option<Location> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in self.candidates(p) {
            let t = t as usize;
            let [a, b, c] = triangles[t].map(|v| points[v]);
            let bary = barycentric(p, &a, &b, &c);
            let worst = bary[0].min(bary[1]).min(bary[2]);
            if worst >= -BARY_TOL && best.is_none_or(|(_, _, w)| worst > w) {
                best = Some((t, bary, worst));
            }
        }
        best.map(|(triangle, bary, _)| Location { triangle, bary: clamp_bary(bary) })
    }

    /// Triangle closest to `p` in Euclidean distance; ties go to the lower index. The
    /// returned barycentrics are those of `p` itself and may be negative.
    pub fn nearest(&self, points: &[Point], triangles: &[[usize; 3]], p: &Point) -> (usize, [f64; 3]) {
        let (ci, cj) = self.cell_of(p);
        let mut best = (usize::MAX, f64::INFINITY);
        let max_ring = self.nx.max(self.ny);
        for r in 0..=max_ring {
            let (i0, i1) = (ci.saturating_sub(r), (ci + r).min(self.nx - 1));
            let (j0, j1) = (cj.saturating_sub(r), (cj + r).min(self.ny - 1));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let on_ring = i.abs_diff(ci) == r || j.abs_diff(cj) == r;
                    if !on_ring {
                        continue;
                    }
                    for &t in &self.cells[j * self.nx + i] {
                        let t = t as usize;
                        let d = point_triangle_distance(p, triangles[t].map(|v| points[v]));
                        if d < best.1 || (d == best.1 && t < best.0) {
                            best = (t, d);
                        }
                    }
                }
            }
            // anything in a farther ring is at least r cells away
            if best.0 != usize::MAX && best.1 <= r as f64 * self.cell {
                break;
            }
        }
        let t = best.0;
        let [a, b, c] = triangles[t].map(|v| points[v]);
        (t, barycentric(p, &a, &b, &c))
    }
}

fn point_triangle_distance(p: &Point, [a, b, c]: [Point; 3]) -> f64 {
    let bary = barycentric(p, &a, &b, &c);
    if bary.iter().all(|&l| l >= 0.0) {
        return 0.0;
    }
    point_segment_distance(p, &a, &b)
        .min(point_segment_distance(p, &b, &c))
        .min(point_segment_distance(p, &c, &a))
}

fn clamp_bary(bary: [f64; 3]) -> [f64; 3] {
    let clamped = bary.map(|l| l.max(0.0));
    let sum: f64 = clamped.iter().sum();
    clamped.map(|l| l / sum)
}

/// Point location on a source mesh.
#[derive(Debug, Clone)]
pub struct PointLocator<'a> {
    mesh: &'a SimplicialMesh,
    grid: TriangleGrid,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a SimplicialMesh) -> Self {
        let grid = TriangleGrid::new(
            mesh.vertices(),
            mesh.triangles(),
            Point::origin(),
            Point::new(mesh.width(), mesh.height()),
        );
        PointLocator { mesh, grid }
    }

    pub fn locate(&self, p: &Point) -> Result<Location, MeshError> {
        let eps = 1e-12 * self.mesh.width().max(self.mesh.height());
        if !(p.x >= -eps && p.y >= -eps && p.x <= self.mesh.width() + eps && p.y <= self.mesh.height() + eps) {
            return Err(MeshError::OutOfDomain { x: p.x, y: p.y });
        }
        let (verts, tris) = (self.mesh.vertices(), self.mesh.triangles());
        if let Some(loc) = self.grid.find(verts, tris, p) {
            return Ok(loc);
        }
        let (triangle, bary) = self.grid.nearest(verts, tris, p);
        Ok(Location { triangle, bary: clamp_bary(bary) })
    }
}

/// One-off point location. Build a [`PointLocator`] when locating many points.
pub fn locate_point(mesh: &SimplicialMesh, p: &Point) -> Result<Location, MeshError> {
    PointLocator::new(mesh).locate(p)
}
