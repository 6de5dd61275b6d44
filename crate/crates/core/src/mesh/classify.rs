use super::{MeshError, Polyline, SimplicialMesh};
use crate::geometry::{segment_touches_box, triangle_overlaps_box, Point};
use crate::mask::{split_regions, Mask};

/// Constraint role of a mesh vertex. Only `Interior` vertices are free in the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexRole {
    Interior,
    Boundary,
    Roi(usize),
    Line(usize),
}

impl VertexRole {
    pub fn is_constraint_region(self) -> bool {
        matches!(self, VertexRole::Roi(_) | VertexRole::Line(_))
    }
}

/// Vertex roles plus the free-first ordering used by the linear solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    roles: Vec<VertexRole>,
    order: Vec<usize>,
    position: Vec<usize>,
    n_free: usize,
    n_rois: usize,
    n_lines: usize,
}

impl Classification {
    pub fn from_roles(roles: Vec<VertexRole>, n_rois: usize, n_lines: usize) -> Self {
        let mut order: Vec<usize> = (0..roles.len()).filter(|&v| roles[v] == VertexRole::Interior).collect();
        let n_free = order.len();
        order.extend((0..roles.len()).filter(|&v| roles[v] != VertexRole::Interior));
        let mut position = vec![0; roles.len()];
        for (k, &v) in order.iter().enumerate() {
            position[v] = k;
        }
        Classification { roles, order, position, n_free, n_rois, n_lines }
    }

    pub fn roles(&self) -> &[VertexRole] {
        &self.roles
    }

    pub fn role(&self, v: usize) -> VertexRole {
        self.roles[v]
    }

    /// Vertex ids with free vertices first, then fixed ones.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Index of vertex `v` in [`Classification::order`].
    pub fn position(&self, v: usize) -> usize {
        self.position[v]
    }

    pub fn num_free(&self) -> usize {
        self.n_free
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.order[..self.n_free]
    }

    pub fn fixed_vertices(&self) -> &[usize] {
        &self.order[self.n_free..]
    }

    pub fn num_rois(&self) -> usize {
        self.n_rois
    }

    pub fn num_lines(&self) -> usize {
        self.n_lines
    }

    pub fn free_flags(&self) -> Vec<bool> {
        self.roles.iter().map(|&r| r == VertexRole::Interior).collect()
    }
}

/// Assigns each vertex one role with precedence Boundary > Roi > Line.
///
/// Every connected component of every mask is one ROI, numbered in mask order then
/// scan order. ROI `i` claims all vertices of triangles that overlap it with positive
/// area; when two ROIs claim a vertex the lower index keeps it. Line `j` claims the
/// vertices of its recovered mesh edges and any vertex lying on the polyline.
pub fn classify_vertices(
    mesh: &SimplicialMesh,
    masks: &[Mask],
    polylines: &[Polyline],
) -> Result<Classification, MeshError> {
    let regions = split_regions(masks);
    for m in masks {
        if m.width() as f64 != mesh.width() || m.height() as f64 != mesh.height() {
            return Err(MeshError::SizeMismatch(format!(
                "mask is {}x{}, mesh domain is {}x{}",
                m.width(),
                m.height(),
                mesh.width(),
                mesh.height()
            )));
        }
    }
    for (i, region) in regions.iter().enumerate() {
        if region.touches_border() {
            return Err(MeshError::OverlapViolation(format!("ROI {i} touches the image border")));
        }
        for (j, line) in polylines.iter().enumerate() {
            if line_touches_mask(line, region) {
                return Err(MeshError::OverlapViolation(format!("ROI {i} touches line {j}")));
            }
        }
    }

    let mut roles: Vec<VertexRole> = mesh
        .boundary_flags()
        .iter()
        .map(|&b| if b { VertexRole::Boundary } else { VertexRole::Interior })
        .collect();

    let bboxes: Vec<_> = regions.iter().map(|r| r.bounding_box()).collect();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let xmin = pts.iter().map(|p| p.x).fold(f64::MAX, f64::min);
        let xmax = pts.iter().map(|p| p.x).fold(f64::MIN, f64::max);
        let ymin = pts.iter().map(|p| p.y).fold(f64::MAX, f64::min);
        let ymax = pts.iter().map(|p| p.y).fold(f64::MIN, f64::max);
        for (i, region) in regions.iter().enumerate() {
            let Some((bx0, by0, bx1, by1)) = bboxes[i] else { continue };
            let x0 = (xmin.floor().max(0.0) as usize).max(bx0);
            let y0 = (ymin.floor().max(0.0) as usize).max(by0);
            let x1 = (xmax.ceil() as usize).min(bx1);
            let y1 = (ymax.ceil() as usize).min(by1);
            let hit = (y0..y1).any(|y| {
                (x0..x1).any(|x| {
                    region.get(x, y)
                        && triangle_overlaps_box(
                            [&pts[0], &pts[1], &pts[2]],
                            &Point::new(x as f64, y as f64),
                            &Point::new(x as f64 + 1.0, y as f64 + 1.0),
                        )
                })
            });
            if hit {
                for &v in tri {
                    if roles[v] == VertexRole::Interior {
                        roles[v] = VertexRole::Roi(i);
                    }
                }
            }
        }
    }

    let tol = 1e-9 * mesh.width().max(mesh.height());
    for e in mesh.line_edges() {
        for v in [e.a, e.b] {
            if roles[v] == VertexRole::Interior {
                roles[v] = VertexRole::Line(e.line);
            }
        }
    }
    for (v, p) in mesh.vertices().iter().enumerate() {
        if roles[v] != VertexRole::Interior {
            continue;
        }
        if let Some(j) = polylines.iter().position(|l| l.distance_to(p) <= tol) {
            roles[v] = VertexRole::Line(j);
        }
    }
    Ok(Classification::from_roles(roles, regions.len(), polylines.len()))
}

fn line_touches_mask(line: &Polyline, mask: &Mask) -> bool {
    line.segments().any(|(a, b)| {
        let x0 = (a.x.min(b.x).floor() as isize - 1).max(0) as usize;
        let y0 = (a.y.min(b.y).floor() as isize - 1).max(0) as usize;
        let x1 = ((a.x.max(b.x).ceil() as usize) + 1).min(mask.width());
        let y1 = ((a.y.max(b.y).ceil() as usize) + 1).min(mask.height());
        (y0..y1).any(|y| {
            (x0..x1).any(|x| {
                mask.get(x, y)
                    && segment_touches_box(
                        a,
                        b,
                        &Point::new(x as f64, y as f64),
                        &Point::new(x as f64 + 1.0, y as f64 + 1.0),
                    )
            })
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshParams};

    #[test]
    fn empty_constraints_leave_interior() {
        let mesh = build_mesh(40.0, 30.0, &MeshParams::new(5.0), &[], &[]).unwrap();
        let c = classify_vertices(&mesh, &[], &[]).unwrap();
        for (v, &b) in mesh.boundary_flags().iter().enumerate() {
            let expected = if b { VertexRole::Boundary } else { VertexRole::Interior };
            assert_eq!(c.role(v), expected);
        }
        assert_eq!(c.free_vertices().len(), mesh.boundary_flags().iter().filter(|&&b| !b).count());
    }

    #[test]
    fn border_mask_is_rejected() {
        let mesh = build_mesh(20.0, 20.0, &MeshParams::new(5.0), &[], &[]).unwrap();
        let mask = Mask::rect(20, 20, 0, 5, 4, 9);
        assert!(matches!(classify_vertices(&mesh, &[mask], &[]), Err(MeshError::OverlapViolation(_))));
    }

    #[test]
    fn line_through_mask_is_rejected() {
        let mask = Mask::rect(40, 20, 10, 5, 20, 15);
        let line = Polyline::new(vec![Point::new(2.0, 10.0), Point::new(38.0, 10.0)]);
        let mesh = build_mesh(40.0, 20.0, &MeshParams::new(5.0), &[], &[line.clone()]).unwrap();
        assert!(matches!(classify_vertices(&mesh, &[mask], &[line]), Err(MeshError::OverlapViolation(_))));
    }

    #[test]
    fn ordering_puts_free_vertices_first() {
        let mask = Mask::rect(50, 50, 20, 20, 30, 30);
        let mesh = build_mesh(50.0, 50.0, &MeshParams::new(5.0), &[mask.clone()], &[]).unwrap();
        let c = classify_vertices(&mesh, &[mask.clone()], &[]).unwrap();
        assert!(c.free_vertices().iter().all(|&v| c.role(v) == VertexRole::Interior));
        assert!(c.fixed_vertices().iter().all(|&v| c.role(v) != VertexRole::Interior));
        for (k, &v) in c.order().iter().enumerate() {
            assert_eq!(c.position(v), k);
        }
        assert_eq!(c, classify_vertices(&mesh, &[mask], &[]).unwrap());
    }
}
