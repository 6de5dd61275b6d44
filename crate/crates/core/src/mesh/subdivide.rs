use std::collections::{HashMap, HashSet};

use super::{Classification, LineEdge, SimplicialMesh, VertexRole};
use crate::geometry::Point;

/// 1-to-4 midpoint subdivision. Original vertices keep their indices; edge midpoints
/// are appended in sorted edge order.
pub fn corner_chop(mesh: &SimplicialMesh) -> SimplicialMesh {
    chop(mesh).0
}

/// Subdivides and carries vertex roles over to the finer mesh.
///
/// A midpoint inherits a role only when both endpoints carry it and the edge lies in
/// that region: on the domain boundary, in a triangle whose three vertices belong to
/// the same ROI, or on a recovered polyline edge. Everything else becomes interior.
pub fn corner_chop_classified(mesh: &SimplicialMesh, classes: &Classification) -> (SimplicialMesh, Classification) {
    let (fine, edges, boundary_edges) = chop(mesh);
    let mut roi_edges: HashSet<[usize; 2]> = HashSet::new();
    for tri in mesh.triangles() {
        let r = classes.role(tri[0]);
        if matches!(r, VertexRole::Roi(_)) && tri.iter().all(|&v| classes.role(v) == r) {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                roi_edges.insert([a.min(b), a.max(b)]);
            }
        }
    }
    let line_edges: HashMap<[usize; 2], usize> = mesh.line_edges().iter().map(|e| ([e.a, e.b], e.line)).collect();

    let mut roles = classes.roles().to_vec();
    for edge in &edges {
        let (ra, rb) = (classes.role(edge[0]), classes.role(edge[1]));
        let inherited = if ra != rb {
            VertexRole::Interior
        } else {
            match ra {
                VertexRole::Boundary if boundary_edges.contains(edge) => VertexRole::Boundary,
                VertexRole::Roi(_) if roi_edges.contains(edge) => ra,
                VertexRole::Line(j) if line_edges.get(edge) == Some(&j) => ra,
                _ => VertexRole::Interior,
            }
        };
        roles.push(inherited);
    }
    let classes = Classification::from_roles(roles, classes.num_rois(), classes.num_lines());
    (fine, classes)
}

fn chop(mesh: &SimplicialMesh) -> (SimplicialMesh, Vec<[usize; 2]>, HashSet<[usize; 2]>) {
    let edges = mesh.edges();
    let n = mesh.num_vertices();
    let mut vertices = mesh.vertices().to_vec();
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::with_capacity(edges.len());
    for (k, e) in edges.iter().enumerate() {
        let (a, b) = (mesh.vertices()[e[0]], mesh.vertices()[e[1]]);
        vertices.push(Point::from((a.coords + b.coords) * 0.5));
        midpoint.insert(*e, n + k);
    }
    let mid = |a: usize, b: usize| midpoint[&[a.min(b), a.max(b)]];
    let mut triangles = Vec::with_capacity(mesh.num_triangles() * 4);
    for &[i, j, k] in mesh.triangles() {
        let (mij, mjk, mki) = (mid(i, j), mid(j, k), mid(k, i));
        triangles.push([mij, mjk, mki]);
        triangles.push([i, mij, mki]);
        triangles.push([mij, j, mjk]);
        triangles.push([mki, mjk, k]);
    }
    let boundary_edges: HashSet<[usize; 2]> = mesh
        .edge_topology()
        .into_iter()
        .filter(|e| !e.is_interior())
        .map(|e| e.ends)
        .collect();
    let line_edges = mesh
        .line_edges()
        .iter()
        .flat_map(|e| {
            let m = mid(e.a, e.b);
            [
                LineEdge { a: e.a.min(m), b: e.a.max(m), line: e.line },
                LineEdge { a: e.b.min(m), b: e.b.max(m), line: e.line },
            ]
        })
        .collect();
    let fine = SimplicialMesh::from_parts(mesh.width(), mesh.height(), vertices, triangles)
        .expect("midpoint subdivision preserves orientation")
        .with_line_edges(line_edges);
    (fine, edges, boundary_edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_diameter;

    #[test]
    fn single_triangle_splits_into_quarters() {
        let mesh = SimplicialMesh::from_parts(
            1.0,
            1.0,
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let fine = corner_chop(&mesh);
        assert_eq!(fine.num_triangles(), 4);
        for t in 0..4 {
            assert!((fine.triangle_area(t) - 0.125).abs() < 1e-15);
        }
        assert!((mesh_diameter(&fine) - 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_midpoints_stay_boundary() {
        let mesh = SimplicialMesh::from_parts(
            1.0,
            1.0,
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let classes = Classification::from_roles(vec![VertexRole::Boundary; 4], 0, 0);
        let (fine, fine_classes) = corner_chop_classified(&mesh, &classes);
        for (v, p) in fine.vertices().iter().enumerate() {
            let on_side = p.x == 0.0 || p.y == 0.0 || p.x == 1.0 || p.y == 1.0;
            let expected = if on_side { VertexRole::Boundary } else { VertexRole::Interior };
            assert_eq!(fine_classes.role(v), expected, "vertex {v} at {p:?}");
            assert_eq!(fine.boundary_flags()[v], on_side);
        }
    }
}
