use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LineEdge, MeshError, Polyline, SimplicialMesh};
use crate::geometry::{distance, incircle, orient, segments_cross, Point};
use crate::mask::{split_regions, Mask};

/// Seed used for interior jitter when none is given.
pub const DEFAULT_SEED: u64 = 0x0c0f_fee5_eed5;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshParams {
    /// Target spacing between neighboring vertices, in pixels.
    pub edge_length: f64,
    /// Seed of the interior jitter.
    pub seed: u64,
    /// Interior jitter amplitude as a fraction of the grid spacing.
    pub jitter: f64,
}

impl MeshParams {
    pub fn new(edge_length: f64) -> Self {
        MeshParams { edge_length, seed: DEFAULT_SEED, jitter: 0.25 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Builds a Delaunay triangulation of `[0, width] × [0, height]`.
///
/// Vertices are the four corners, boundary samples, polyline samples, the corners and
/// sides of each ROI component's bounding box, and a jittered interior grid. Polyline
/// segments are recovered as chains of mesh edges by midpoint splitting, so the result
/// stays Delaunay everywhere.
pub fn build_mesh(
    width: f64,
    height: f64,
    params: &MeshParams,
    masks: &[Mask],
    polylines: &[Polyline],
) -> Result<SimplicialMesh, MeshError> {
    if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
        return Err(MeshError::InvalidDimension { width, height });
    }
    let h = params.edge_length;
    if !(h > 0.0 && h <= width.min(height)) {
        return Err(MeshError::InvalidEdgeLength(h));
    }
    let scale = width.max(height);
    let tol = 1e-9 * scale;
    validate_polylines(width, height, tol, polylines)?;
    for m in masks {
        if m.width() as f64 != width || m.height() as f64 != height {
            return Err(MeshError::SizeMismatch(format!(
                "mask is {}x{}, domain is {width}x{height}",
                m.width(),
                m.height()
            )));
        }
    }

    let mut tri = Triangulator::new(width, height, tol);
    let nx = (width / h).ceil().max(1.0) as usize;
    let ny = (height / h).ceil().max(1.0) as usize;
    let dx = width / nx as f64;
    let dy = height / ny as f64;

    for i in 1..nx {
        let x = i as f64 * dx;
        tri.insert(Point::new(x, 0.0))?;
        tri.insert(Point::new(x, height))?;
    }
    for j in 1..ny {
        let y = j as f64 * dy;
        tri.insert(Point::new(0.0, y))?;
        tri.insert(Point::new(width, y))?;
    }

    // Polyline samples, spaced at most h / 2.
    let mut subsegments: Vec<(usize, usize, usize)> = Vec::new();
    for (j, line) in polylines.iter().enumerate() {
        for (a, b) in line.segments() {
            let n = (distance(a, b) / (0.5 * h)).ceil().max(1.0) as usize;
            let mut prev = tri.insert(*a)?;
            for k in 1..=n {
                let p = if k == n { *b } else { a + (b - a) * (k as f64 / n as f64) };
                let v = tri.insert(p)?;
                if v != prev {
                    subsegments.push((prev, v, j));
                }
                prev = v;
            }
        }
    }

    // Bounding-box outlines of ROI components.
    let mut anchors: Vec<Point> = Vec::new();
    for region in split_regions(masks) {
        let Some((x0, y0, x1, y1)) = region.bounding_box() else { continue };
        let (x0, y0, x1, y1) = (x0 as f64, y0 as f64, x1 as f64, y1 as f64);
        let sx = ((x1 - x0) / h).ceil().max(1.0) as usize;
        let sy = ((y1 - y0) / h).ceil().max(1.0) as usize;
        for i in 0..=sx {
            let x = x0 + (x1 - x0) * i as f64 / sx as f64;
            anchors.push(Point::new(x, y0));
            anchors.push(Point::new(x, y1));
        }
        for j in 1..sy {
            let y = y0 + (y1 - y0) * j as f64 / sy as f64;
            anchors.push(Point::new(x0, y));
            anchors.push(Point::new(x1, y));
        }
    }
    let near_boundary = |p: &Point, r: f64| p.x < r || p.y < r || p.x > width - r || p.y > height - r;
    let near_line = |p: &Point, r: f64| polylines.iter().any(|l| l.distance_to(p) < r);
    let mut kept_anchors: Vec<Point> = Vec::new();
    for p in anchors {
        let crowded = kept_anchors.iter().any(|q| distance(&p, q) < 0.35 * h);
        if !crowded && !near_boundary(&p, 0.35 * h) && !near_line(&p, 0.5 * h) {
            tri.insert(p)?;
            kept_anchors.push(p);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let amp = params.jitter.clamp(0.0, 0.45);
    for j in 1..ny {
        for i in 1..nx {
            let jx: f64 = rng.random_range(-1.0..=1.0);
            let jy: f64 = rng.random_range(-1.0..=1.0);
            let p = Point::new((i as f64 + amp * jx) * dx, (j as f64 + amp * jy) * dy);
            if near_line(&p, 0.5 * h) || kept_anchors.iter().any(|q| distance(&p, q) < 0.35 * h) {
                continue;
            }
            tri.insert(p)?;
        }
    }

    // Recover polyline subsegments as mesh edges.
    for _round in 0..40 {
        let edges = tri.edge_set();
        let missing: Vec<usize> = (0..subsegments.len())
            .filter(|&s| {
                let (a, b, _) = subsegments[s];
                !edges.contains(&(a.min(b), a.max(b)))
            })
            .collect();
        if missing.is_empty() {
            break;
        }
        for s in missing.into_iter().rev() {
            let (a, b, j) = subsegments[s];
            let mid = Point::from((tri.pts[a].coords + tri.pts[b].coords) * 0.5);
            let m = tri.insert(mid)?;
            if m == a || m == b {
                return Err(MeshError::DegenerateInput(format!("polyline {j} is too finely sampled to recover")));
            }
            subsegments[s] = (a, m, j);
            subsegments.push((m, b, j));
        }
    }
    let edges = tri.edge_set();
    if subsegments.iter().any(|&(a, b, _)| !edges.contains(&(a.min(b), a.max(b)))) {
        return Err(MeshError::DegenerateInput("could not recover polyline segments as mesh edges".into()));
    }

    let line_edges = subsegments
        .iter()
        .map(|&(a, b, line)| LineEdge { a: a.min(b), b: a.max(b), line })
        .collect();
    let Triangulator { pts, tris, .. } = tri;
    Ok(SimplicialMesh::from_parts(width, height, pts, tris)?.with_line_edges(line_edges))
}

fn validate_polylines(width: f64, height: f64, tol: f64, polylines: &[Polyline]) -> Result<(), MeshError> {
    for (j, line) in polylines.iter().enumerate() {
        if line.points.len() < 2 {
            return Err(MeshError::DegenerateInput(format!("polyline {j} has fewer than two points")));
        }
        for p in &line.points {
            if !(p.x >= -tol && p.y >= -tol && p.x <= width + tol && p.y <= height + tol) {
                return Err(MeshError::OutOfDomain { x: p.x, y: p.y });
            }
        }
        for (a, b) in line.segments() {
            if distance(a, b) <= tol {
                return Err(MeshError::DegenerateInput(format!("polyline {j} repeats a consecutive point")));
            }
        }
    }
    let segs: Vec<(usize, usize, &Point, &Point)> = polylines
        .iter()
        .enumerate()
        .flat_map(|(j, l)| l.segments().enumerate().map(move |(k, (a, b))| (j, k, a, b)))
        .collect();
    for (i, &(j1, k1, a, b)) in segs.iter().enumerate() {
        for &(j2, k2, c, d) in &segs[i + 1..] {
            if j1 == j2 && k1.abs_diff(k2) <= 1 {
                continue;
            }
            if segments_cross(a, b, c, d) {
                return Err(MeshError::DegenerateInput(format!("polylines {j1} and {j2} intersect")));
            }
        }
    }
    Ok(())
}

enum Found {
    Inside(usize),
    OnEdge(usize, usize),
    OnVertex(usize),
}

/// Incremental Delaunay triangulation of a rectangle with Lawson flips.
///
/// `nbr[t][k]` is the triangle across the edge opposite `tris[t][k]`.
struct Triangulator {
    pts: Vec<Point>,
    tris: Vec<[usize; 3]>,
    nbr: Vec<[usize; 3]>,
    last: usize,
    tol: f64,
}

impl Triangulator {
    fn new(width: f64, height: f64, tol: f64) -> Self {
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(width, 0.0),
            Point::new(width, height),
            Point::new(0.0, height),
        ];
        // [0,1,2] and [0,2,3]; shared edge (0,2).
        Triangulator {
            pts,
            tris: vec![[0, 1, 2], [0, 2, 3]],
            nbr: vec![[NONE, 1, NONE], [NONE, NONE, 0]],
            last: 0,
            tol,
        }
    }

    fn edge_set(&self) -> HashSet<(usize, usize)> {
        self.tris
            .iter()
            .flat_map(|t| (0..3).map(move |k| {
                let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                (a.min(b), a.max(b))
            }))
            .collect()
    }

    fn classify(&self, t: usize, p: &Point) -> Found {
        let tri = self.tris[t];
        for &v in &tri {
            if distance(&self.pts[v], p) <= self.tol {
                return Found::OnVertex(v);
            }
        }
        for k in 0..3 {
            let a = &self.pts[tri[(k + 1) % 3]];
            let b = &self.pts[tri[(k + 2) % 3]];
            if orient(a, b, p).abs() <= self.tol * distance(a, b) {
                return Found::OnEdge(t, k);
            }
        }
        Found::Inside(t)
    }

    fn locate(&self, p: &Point) -> Option<Found> {
        let mut t = self.last.min(self.tris.len() - 1);
        'walk: for _ in 0..4 * self.tris.len() + 16 {
            let tri = self.tris[t];
            for k in 0..3 {
                let a = &self.pts[tri[(k + 1) % 3]];
                let b = &self.pts[tri[(k + 2) % 3]];
                if orient(a, b, p) < -self.tol * distance(a, b) {
                    if self.nbr[t][k] == NONE {
                        return None;
                    }
                    t = self.nbr[t][k];
                    continue 'walk;
                }
            }
            return Some(self.classify(t, p));
        }
        // Walk did not settle; scan everything.
        (0..self.tris.len())
            .find(|&t| {
                let tri = self.tris[t];
                (0..3).all(|k| {
                    let a = &self.pts[tri[(k + 1) % 3]];
                    let b = &self.pts[tri[(k + 2) % 3]];
                    orient(a, b, p) >= -self.tol * distance(a, b)
                })
            })
            .map(|t| self.classify(t, p))
    }

    fn insert(&mut self, p: Point) -> Result<usize, MeshError> {
        let found = self.locate(&p).ok_or(MeshError::OutOfDomain { x: p.x, y: p.y })?;
        let v = match found {
            Found::OnVertex(v) => return Ok(v),
            Found::Inside(t) => {
                let v = self.push_point(p);
                self.split_triangle(t, v);
                v
            }
            Found::OnEdge(t, k) => {
                let v = self.push_point(p);
                self.split_edge(t, k, v);
                v
            }
        };
        Ok(v)
    }

    fn push_point(&mut self, p: Point) -> usize {
        self.pts.push(p);
        self.pts.len() - 1
    }

    fn replace_nbr(&mut self, t: usize, old: usize, new: usize) {
        if t == NONE {
            return;
        }
        for k in 0..3 {
            if self.nbr[t][k] == old {
                self.nbr[t][k] = new;
                return;
            }
        }
    }

    fn split_triangle(&mut self, t: usize, p: usize) {
        let [a, b, c] = self.tris[t];
        let [na, nb, nc] = self.nbr[t];
        let t0 = t;
        let t1 = self.tris.len();
        let t2 = t1 + 1;
        self.tris[t0] = [a, b, p];
        self.nbr[t0] = [t1, t2, nc];
        self.tris.push([b, c, p]);
        self.nbr.push([t2, t0, na]);
        self.tris.push([c, a, p]);
        self.nbr.push([t0, t1, nb]);
        self.replace_nbr(na, t, t1);
        self.replace_nbr(nb, t, t2);
        self.last = t0;
        self.legalize(vec![(t0, 2), (t1, 2), (t2, 2)]);
    }

    fn split_edge(&mut self, t: usize, k: usize, p: usize) {
        let a = self.tris[t][k];
        let x = self.tris[t][(k + 1) % 3];
        let y = self.tris[t][(k + 2) % 3];
        let u = self.nbr[t][k];
        let t_ya = self.nbr[t][(k + 1) % 3];
        let t_ax = self.nbr[t][(k + 2) % 3];
        let t0 = t;
        let t1 = self.tris.len();
        if u == NONE {
            self.tris[t0] = [a, x, p];
            self.nbr[t0] = [NONE, t1, t_ax];
            self.tris.push([a, p, y]);
            self.nbr.push([NONE, t_ya, t0]);
            self.replace_nbr(t_ya, t, t1);
            self.last = t0;
            self.legalize(vec![(t0, 2), (t1, 1)]);
            return;
        }
        let j = (0..3).find(|&j| self.nbr[u][j] == t).expect("neighbor links are symmetric");
        let b = self.tris[u][j];
        let u_xb = self.nbr[u][(j + 1) % 3];
        let u_by = self.nbr[u][(j + 2) % 3];
        let u0 = u;
        let u1 = t1 + 1;
        self.tris[t0] = [a, x, p];
        self.nbr[t0] = [u1, t1, t_ax];
        self.tris.push([a, p, y]);
        self.nbr.push([u0, t_ya, t0]);
        self.tris[u0] = [b, y, p];
        self.nbr[u0] = [t1, u1, u_by];
        self.tris.push([b, p, x]);
        self.nbr.push([t0, u_xb, u0]);
        self.replace_nbr(t_ya, t, t1);
        self.replace_nbr(u_xb, u, u1);
        self.last = t0;
        self.legalize(vec![(t0, 2), (t1, 1), (u0, 2), (u1, 1)]);
    }

    /// Restores the Delaunay property around a new vertex. Each stack entry names a
    /// triangle and the slot holding the new vertex; the opposite edge is tested.
    fn legalize(&mut self, mut stack: Vec<(usize, usize)>) {
        while let Some((t, k)) = stack.pop() {
            let u = self.nbr[t][k];
            if u == NONE {
                continue;
            }
            let p = self.tris[t][k];
            let x = self.tris[t][(k + 1) % 3];
            let y = self.tris[t][(k + 2) % 3];
            let j = (0..3).find(|&j| self.nbr[u][j] == t).expect("neighbor links are symmetric");
            let q = self.tris[u][j];
            let (pp, px, py, pq) = (self.pts[p], self.pts[x], self.pts[y], self.pts[q]);
            let len = distance(&px, &py);
            if incircle(&pp, &px, &py, &pq) <= 1e-10 * len.powi(4) {
                continue;
            }
            // Only flip convex quads.
            if orient(&pp, &px, &pq) <= 0.0 || orient(&pp, &pq, &py) <= 0.0 {
                continue;
            }
            let t_yp = self.nbr[t][(k + 1) % 3];
            let t_px = self.nbr[t][(k + 2) % 3];
            let u_xq = self.nbr[u][(j + 1) % 3];
            let u_qy = self.nbr[u][(j + 2) % 3];
            self.tris[t] = [p, x, q];
            self.nbr[t] = [u_xq, u, t_px];
            self.tris[u] = [p, q, y];
            self.nbr[u] = [u_qy, t_yp, t];
            self.replace_nbr(u_xq, u, t);
            self.replace_nbr(t_yp, t, u);
            stack.push((t, 0));
            stack.push((u, 0));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_one_domain() {
        let mesh = build_mesh(2.0, 1.0, &MeshParams::new(1.0), &[], &[]).unwrap();
        assert_eq!(mesh.num_vertices(), 6);
        assert_eq!(mesh.num_triangles(), 4);
        assert!((mesh.total_area() - 2.0).abs() < 1e-12);
        assert!(mesh.vertices().contains(&Point::new(1.0, 0.0)));
        assert!(mesh.vertices().contains(&Point::new(1.0, 1.0)));
        for t in 0..mesh.num_triangles() {
            assert!(mesh.triangle_area(t) > 0.0);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            build_mesh(0.0, 1.0, &MeshParams::new(1.0), &[], &[]),
            Err(MeshError::InvalidDimension { .. })
        ));
        assert!(matches!(
            build_mesh(10.0, 5.0, &MeshParams::new(6.0), &[], &[]),
            Err(MeshError::InvalidEdgeLength(_))
        ));
        let repeated = Polyline::new(vec![Point::new(1.0, 1.0), Point::new(1.0, 1.0), Point::new(3.0, 2.0)]);
        assert!(matches!(
            build_mesh(10.0, 5.0, &MeshParams::new(2.0), &[], &[repeated]),
            Err(MeshError::DegenerateInput(_))
        ));
        let crossing = [
            Polyline::new(vec![Point::new(1.0, 1.0), Point::new(9.0, 4.0)]),
            Polyline::new(vec![Point::new(1.0, 4.0), Point::new(9.0, 1.0)]),
        ];
        assert!(matches!(
            build_mesh(10.0, 5.0, &MeshParams::new(2.0), &[], &crossing),
            Err(MeshError::DegenerateInput(_))
        ));
    }

    #[test]
    fn same_seed_same_mesh() {
        let a = build_mesh(60.0, 40.0, &MeshParams::new(7.0), &[], &[]).unwrap();
        let b = build_mesh(60.0, 40.0, &MeshParams::new(7.0), &[], &[]).unwrap();
        let c = build_mesh(60.0, 40.0, &MeshParams::new(7.0).with_seed(9), &[], &[]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.vertices(), c.vertices());
    }
}
