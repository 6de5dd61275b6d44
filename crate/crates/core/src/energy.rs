//! Gradient coefficients, discrete conformal energy and the stiffness matrix.

use nalgebra::Matrix2;
use rayon::prelude::*;
use sprs::CsMat;

use crate::geometry::{Point, Vec2};
use crate::mesh::{Classification, SimplicialMesh};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnergyError {
    #[error("triangle {triangle} is degenerate (area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("map has {got} points, mesh has {expected} vertices")]
    SizeMismatch { expected: usize, got: usize },
    #[error("no free vertices: every vertex is constrained")]
    EmptyFreeSet,
}

/// Per-triangle coefficients such that `∂x u = Σ A_p u_p`, `∂y u = Σ B_p u_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCoeffs {
    a: Vec<[f64; 3]>,
    b: Vec<[f64; 3]>,
    area: Vec<f64>,
}

impl GradCoeffs {
    pub fn len(&self) -> usize {
        self.area.len()
    }

    pub fn is_empty(&self) -> bool {
        self.area.is_empty()
    }

    pub fn a(&self, t: usize) -> [f64; 3] {
        self.a[t]
    }

    pub fn b(&self, t: usize) -> [f64; 3] {
        self.b[t]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.area[t]
    }

    /// Jacobian `[[∂x u, ∂y u], [∂x v, ∂y v]]` of the map on triangle `t`.
    pub fn jacobian(&self, mesh: &SimplicialMesh, t: usize, map: &[Point]) -> Matrix2<f64> {
        let tri = mesh.triangles()[t];
        let (a, b) = (self.a[t], self.b[t]);
        let mut j = Matrix2::zeros();
        for k in 0..3 {
            let p = map[tri[k]];
            j[(0, 0)] += a[k] * p.x;
            j[(0, 1)] += b[k] * p.x;
            j[(1, 0)] += a[k] * p.y;
            j[(1, 1)] += b[k] * p.y;
        }
        j
    }
}

pub fn grad_coeffs(mesh: &SimplicialMesh) -> Result<GradCoeffs, EnergyError> {
    let threshold = 1e-14 * mesh.domain_area();
    let n = mesh.num_triangles();
    let mut out = GradCoeffs { a: Vec::with_capacity(n), b: Vec::with_capacity(n), area: Vec::with_capacity(n) };
    for t in 0..n {
        let [pi, pj, pk] = mesh.triangle_points(t);
        let cross = (pj - pi).perp(&(pk - pi));
        let area = 0.5 * cross.abs();
        if area < threshold {
            return Err(EnergyError::DegenerateTriangle { triangle: t, area });
        }
        let two_a = 2.0 * area;
        out.a.push([(pj.y - pk.y) / two_a, (pk.y - pi.y) / two_a, (pi.y - pj.y) / two_a]);
        out.b.push([(pk.x - pj.x) / two_a, (pi.x - pk.x) / two_a, (pj.x - pi.x) / two_a]);
        out.area.push(area);
    }
    Ok(out)
}

/// Conformal energy and the raw Dirichlet sum it is derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub conformal: f64,
    pub dirichlet: f64,
}

fn check_len(mesh: &SimplicialMesh, map: &[Point]) -> Result<(), EnergyError> {
    if map.len() != mesh.num_vertices() {
        return Err(EnergyError::SizeMismatch { expected: mesh.num_vertices(), got: map.len() });
    }
    Ok(())
}

/// `E^D = ½ Σ ‖∇f‖² area` and `E^C = E^D − target_area`.
pub fn discrete_energy(
    mesh: &SimplicialMesh,
    coeffs: &GradCoeffs,
    map: &[Point],
    target_area: f64,
) -> Result<Energy, EnergyError> {
    check_len(mesh, map)?;
    let dirichlet: f64 = (0..mesh.num_triangles())
        .map(|t| 0.5 * coeffs.jacobian(mesh, t, map).norm_squared() * coeffs.area(t))
        .sum();
    Ok(Energy { conformal: dirichlet - target_area, dirichlet })
}

/// Per-triangle `½[(∂x u − ∂y v)² + (∂y u + ∂x v)²]`.
pub fn energy_density(mesh: &SimplicialMesh, coeffs: &GradCoeffs, map: &[Point]) -> Result<Vec<f64>, EnergyError> {
    check_len(mesh, map)?;
    Ok((0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let j = coeffs.jacobian(mesh, t, map);
            let c1 = j[(0, 0)] - j[(1, 1)];
            let c2 = j[(0, 1)] + j[(1, 0)];
            0.5 * (c1 * c1 + c2 * c2)
        })
        .collect())
}

/// Orientation determinant `det ∇f` per triangle.
pub fn jacobian_determinants(mesh: &SimplicialMesh, coeffs: &GradCoeffs, map: &[Point]) -> Vec<f64> {
    (0..mesh.num_triangles()).map(|t| coeffs.jacobian(mesh, t, map).determinant()).collect()
}

/// Builds a CSR matrix from upper-triangle contributions `(i, j, v)` with `i ≤ j`.
/// Duplicates are summed in input order and mirrored, so the result is exactly symmetric.
pub(crate) fn symmetric_from_upper(n: usize, mut upper: Vec<(usize, usize, f64)>) -> CsMat<f64> {
    upper.sort_by_key(|&(i, j, _)| (i, j));
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(upper.len());
    for (i, j, v) in upper {
        match merged.last_mut() {
            Some(last) if last.0 == i && last.1 == j => last.2 += v,
            _ => merged.push((i, j, v)),
        }
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(i, j, v) in &merged {
        rows[i].push((j, v));
        if i != j {
            rows[j].push((i, v));
        }
    }
    csr_from_rows(n, rows)
}

pub(crate) fn csr_from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> CsMat<f64> {
    let nrows = rows.len();
    let mut indptr = Vec::with_capacity(nrows + 1);
    let mut indices = Vec::new();
    let mut data = Vec::new();
    indptr.push(0);
    for mut row in rows {
        row.sort_by_key(|&(c, _)| c);
        for (c, v) in row {
            indices.push(c);
            data.push(v);
        }
        indptr.push(indices.len());
    }
    CsMat::new((nrows, ncols), indptr, indices, data)
}

/// Full stiffness matrix `L_ij = Σ_τ area (A_i A_j + B_i B_j)` in mesh vertex order.
pub fn laplacian_matrix(mesh: &SimplicialMesh, coeffs: &GradCoeffs) -> CsMat<f64> {
    let mut upper = Vec::with_capacity(mesh.num_triangles() * 6);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (a, b, area) = (coeffs.a(t), coeffs.b(t), coeffs.area(t));
        for p in 0..3 {
            for q in p..3 {
                let (i, j) = (tri[p], tri[q]);
                let v = area * (a[p] * a[q] + b[p] * b[q]);
                upper.push((i.min(j), i.max(j), v));
            }
        }
    }
    symmetric_from_upper(mesh.num_vertices(), upper)
}

/// Independent cotangent-weight assembly: `L_ij = −½(cot α + cot β)`, diagonal equal to
/// minus the off-diagonal row sum.
pub fn cotangent_laplacian(mesh: &SimplicialMesh) -> CsMat<f64> {
    let mut upper = Vec::with_capacity(mesh.num_triangles() * 6);
    let pts = mesh.vertices();
    for tri in mesh.triangles() {
        for k in 0..3 {
            let (apex, i, j) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let u = pts[i] - pts[apex];
            let v = pts[j] - pts[apex];
            let half_cot = 0.5 * u.dot(&v) / u.perp(&v).abs();
            upper.push((i.min(j), i.max(j), -half_cot));
            upper.push((i, i, half_cot));
            upper.push((j, j, half_cot));
        }
    }
    symmetric_from_upper(mesh.num_vertices(), upper)
}

/// Sparse matrix-vector product.
pub fn spmv(m: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.cols(), x.len(), "dimension mismatch in spmv");
    let mut y = vec![0.0; m.rows()];
    if m.is_csr() {
        for (i, row) in m.outer_iterator().enumerate() {
            y[i] = row.iter().map(|(j, &v)| v * x[j]).sum();
        }
    } else {
        for (j, col) in m.outer_iterator().enumerate() {
            for (i, &v) in col.iter() {
                y[i] += v * x[j];
            }
        }
    }
    y
}

/// Energy gradient with respect to every vertex image: `∂E/∂f(v) = (L u, L v)`.
pub fn energy_gradient(laplacian: &CsMat<f64>, map: &[Point]) -> Vec<Vec2> {
    let u: Vec<f64> = map.iter().map(|p| p.x).collect();
    let v: Vec<f64> = map.iter().map(|p| p.y).collect();
    let (gu, gv) = (spmv(laplacian, &u), spmv(laplacian, &v));
    gu.into_iter().zip(gv).map(|(a, b)| Vec2::new(a, b)).collect()
}

/// The stiffness matrix with its free/fixed block split.
///
/// `L^a` indexes free vertices in [`SparseSymmetricSystem::free`] order and `L^b`
/// couples them to fixed vertices in [`SparseSymmetricSystem::fixed`] order.
#[derive(Debug, Clone)]
pub struct SparseSymmetricSystem {
    l: CsMat<f64>,
    la: CsMat<f64>,
    lb: CsMat<f64>,
    free: Vec<usize>,
    fixed: Vec<usize>,
}

impl SparseSymmetricSystem {
    /// Splits a full matrix by per-vertex free flags, preserving vertex order inside each block.
    pub fn from_laplacian(l: CsMat<f64>, free_flags: &[bool]) -> Result<Self, EnergyError> {
        let n = l.rows();
        assert_eq!(free_flags.len(), n, "free flags must cover every vertex");
        let free: Vec<usize> = (0..n).filter(|&v| free_flags[v]).collect();
        let fixed: Vec<usize> = (0..n).filter(|&v| !free_flags[v]).collect();
        if free.is_empty() {
            return Err(EnergyError::EmptyFreeSet);
        }
        let mut local = vec![0usize; n];
        for (k, &v) in free.iter().enumerate() {
            local[v] = k;
        }
        for (k, &v) in fixed.iter().enumerate() {
            local[v] = k;
        }
        let mut rows_a = vec![Vec::new(); free.len()];
        let mut rows_b = vec![Vec::new(); free.len()];
        for (i, row) in l.outer_iterator().enumerate() {
            if !free_flags[i] {
                continue;
            }
            for (j, &v) in row.iter() {
                if free_flags[j] {
                    rows_a[local[i]].push((local[j], v));
                } else {
                    rows_b[local[i]].push((local[j], v));
                }
            }
        }
        let la = csr_from_rows(free.len(), rows_a);
        let lb = csr_from_rows(fixed.len(), rows_b);
        Ok(SparseSymmetricSystem { l, la, lb, free, fixed })
    }

    /// Same matrix, new partition.
    pub fn repartition(&self, free_flags: &[bool]) -> Result<Self, EnergyError> {
        Self::from_laplacian(self.l.clone(), free_flags)
    }

    pub fn laplacian(&self) -> &CsMat<f64> {
        &self.l
    }

    pub fn la(&self) -> &CsMat<f64> {
        &self.la
    }

    pub fn lb(&self) -> &CsMat<f64> {
        &self.lb
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }
}

/// Assembles `L` and partitions it with interior vertices free.
pub fn assemble(
    mesh: &SimplicialMesh,
    coeffs: &GradCoeffs,
    classes: &Classification,
) -> Result<SparseSymmetricSystem, EnergyError> {
    SparseSymmetricSystem::from_laplacian(laplacian_matrix(mesh, coeffs), &classes.free_flags())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MMatrixReport {
    pub symmetric: bool,
    pub off_diag_nonpositive: bool,
    pub spd: bool,
}

impl MMatrixReport {
    pub fn is_stieltjes(&self) -> bool {
        self.symmetric && self.off_diag_nonpositive && self.spd
    }
}

/// Checks the Stieltjes conditions on `L^a`. Positive definiteness is decided by an
/// LDLᵀ factorization with every pivot required to be positive. Off-diagonal entries
/// within `1e-12` of the largest diagonal are treated as zero (cocircular quads).
pub fn verify_m_matrix(system: &SparseSymmetricSystem) -> MMatrixReport {
    let la = system.la();
    let symmetric = la.outer_iterator().enumerate().all(|(i, row)| {
        row.iter().all(|(j, &v)| la.get(j, i).is_some_and(|&w| w == v))
    });
    let scale = la.diag_iter().map(|d| d.map_or(0.0, |v| v.abs())).fold(0.0, f64::max);
    let off_diag_nonpositive = la
        .outer_iterator()
        .enumerate()
        .all(|(i, row)| row.iter().all(|(j, &v)| i == j || v <= 1e-12 * scale));
    let spd = symmetric && is_positive_definite(la);
    MMatrixReport { symmetric, off_diag_nonpositive, spd }
}

/// LDLᵀ with all pivots strictly positive.
pub fn is_positive_definite(m: &CsMat<f64>) -> bool {
    crate::linalg::Factor::new(m).is_some_and(|f| f.is_positive_definite())
}
