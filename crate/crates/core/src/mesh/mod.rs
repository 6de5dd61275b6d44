//! Triangulations of the source image rectangle.
//!
//! A [`SimplicialMesh`] is an immutable CCW triangulation of `[0, width] × [0, height]`.
//! Meshes are produced by [`build_mesh`], refined by [`corner_chop`], queried with a
//! [`PointLocator`] and serialized with the `rtmesh` text format in [`io`].

mod build;
mod classify;
pub mod io;
mod locate;
mod subdivide;

use std::collections::HashMap;

use crate::geometry::{distance, orient, signed_area, Point};

pub use build::{build_mesh, MeshParams, DEFAULT_SEED};
pub use classify::{classify_vertices, Classification, VertexRole};
pub use locate::{locate_point, Location, PointLocator, TriangleGrid};
pub use subdivide::{corner_chop, corner_chop_classified};

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("invalid dimension {width} x {height}")]
    InvalidDimension { width: f64, height: f64 },
    #[error("target edge length {0} outside (0, min(width, height)]")]
    InvalidEdgeLength(f64),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("point ({x}, {y}) lies outside the domain")]
    OutOfDomain { x: f64, y: f64 },
    #[error("constraint regions overlap: {0}")]
    OverlapViolation(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("invalid mesh: {0}")]
    InvalidTopology(String),
    #[error("mesh parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A user-supplied polyline in source pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Point>,
}

impl Polyline {
    pub fn new(points: Vec<Point>) -> Self {
        Polyline { points }
    }

    pub fn segments(&self) -> impl Iterator<Item = (&Point, &Point)> {
        self.points.windows(2).map(|w| (&w[0], &w[1]))
    }

    pub fn distance_to(&self, p: &Point) -> f64 {
        self.segments()
            .map(|(a, b)| crate::geometry::point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A mesh edge that is part of polyline `line`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LineEdge {
    pub a: usize,
    pub b: usize,
    pub line: usize,
}

/// Per-edge adjacency: endpoints, and for each incident triangle the index of the
/// triangle and of its vertex opposite the edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeInfo {
    pub ends: [usize; 2],
    pub first: (usize, usize),
    pub second: Option<(usize, usize)>,
}

impl EdgeInfo {
    pub fn is_interior(&self) -> bool {
        self.second.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMesh {
    width: f64,
    height: f64,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    line_edges: Vec<LineEdge>,
}

impl SimplicialMesh {
    /// Validates and wraps raw geometry. Boundary flags are derived from edges that
    /// have a single incident triangle.
    pub fn from_parts(
        width: f64,
        height: f64,
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(MeshError::InvalidDimension { width, height });
        }
        if triangles.is_empty() {
            return Err(MeshError::InvalidTopology("mesh has no triangles".into()));
        }
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(MeshError::InvalidTopology(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::InvalidTopology(format!("triangle {t} repeats a vertex")));
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            if orient(&a, &b, &c) <= 0.0 {
                return Err(MeshError::InvalidTopology(format!("triangle {t} is not counter-clockwise")));
            }
        }
        let mut mesh = SimplicialMesh {
            width,
            height,
            vertices,
            triangles,
            boundary: Vec::new(),
            line_edges: Vec::new(),
        };
        let mut boundary = vec![false; n];
        for e in mesh.edge_topology() {
            if !e.is_interior() {
                boundary[e.ends[0]] = true;
                boundary[e.ends[1]] = true;
            }
        }
        mesh.boundary = boundary;
        Ok(mesh)
    }

    pub(crate) fn with_line_edges(mut self, mut edges: Vec<LineEdge>) -> Self {
        edges.sort();
        self.line_edges = edges;
        self
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn domain_area(&self) -> f64 {
        self.width * self.height
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn line_edges(&self) -> &[LineEdge] {
        &self.line_edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Sorted list of undirected edges `[lo, hi]`.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| {
                let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                [a.min(b), a.max(b)]
            }))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Edge adjacency, sorted by endpoints.
    pub fn edge_topology(&self) -> Vec<EdgeInfo> {
        let mut map: HashMap<[usize; 2], EdgeInfo> = HashMap::with_capacity(self.triangles.len() * 2);
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let key = [a.min(b), a.max(b)];
                map.entry(key)
                    .and_modify(|e| e.second = Some((t, tri[k])))
                    .or_insert(EdgeInfo { ends: key, first: (t, tri[k]), second: None });
            }
        }
        let mut edges: Vec<EdgeInfo> = map.into_values().collect();
        edges.sort_unstable_by_key(|e| e.ends);
        edges
    }

    /// Sorted one-ring neighbor lists.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for [a, b] in self.edges() {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        for list in &mut nbrs {
            list.sort_unstable();
        }
        nbrs
    }

    /// Largest sum of the two angles opposite an interior edge. A Delaunay mesh keeps
    /// this at or below π.
    pub fn max_opposite_angle_sum(&self) -> f64 {
        let angle = |apex: usize, a: usize, b: usize| {
            let u = self.vertices[a] - self.vertices[apex];
            let v = self.vertices[b] - self.vertices[apex];
            u.perp(&v).abs().atan2(u.dot(&v))
        };
        self.edge_topology()
            .iter()
            .filter_map(|e| {
                let (_, o1) = e.first;
                let (_, o2) = e.second?;
                Some(angle(o1, e.ends[0], e.ends[1]) + angle(o2, e.ends[0], e.ends[1]))
            })
            .fold(0.0, f64::max)
    }
}

/// Largest edge length over all triangles.
pub fn mesh_diameter(mesh: &SimplicialMesh) -> f64 {
    mesh.triangles()
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|v| mesh.vertices()[v]);
            distance(&a, &b).max(distance(&b, &c)).max(distance(&c, &a))
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_right_triangle() -> SimplicialMesh {
        SimplicialMesh::from_parts(
            1.0,
            1.0,
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn diameter_of_right_triangle_is_hypotenuse() {
        assert!((mesh_diameter(&unit_right_triangle()) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn two_triangle_square() {
        let mesh = SimplicialMesh::from_parts(
            1.0,
            1.0,
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        assert!((mesh_diameter(&mesh) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mesh.edges().len(), 5);
        assert!(mesh.boundary_flags().iter().all(|&b| b));
        assert!((mesh.max_opposite_angle_sum() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_clockwise_triangles() {
        let err = SimplicialMesh::from_parts(
            1.0,
            1.0,
            vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 0.0)],
            vec![[0, 1, 2]],
        );
        assert!(matches!(err, Err(MeshError::InvalidTopology(_))));
    }
}
