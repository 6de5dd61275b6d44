//! Sparse SPD solvers: an LDLᵀ factorization and a Jacobi-preconditioned conjugate
//! gradient used as an independent second backend.

use sprs::CsMat;
use sprs_ldl::{Ldl, LdlNumeric};

use crate::energy::spmv;

/// LDLᵀ factor of a symmetric matrix. The factorization crate needs at least two rows,
/// so 1×1 systems are handled directly.
pub enum Factor {
    Scalar(f64),
    Ldl(Box<LdlNumeric<f64, usize>>),
}

impl Factor {
    /// Factorizes `m`; `None` when a pivot is exactly zero.
    pub fn new(m: &CsMat<f64>) -> Option<Factor> {
        assert_eq!(m.rows(), m.cols(), "factorization needs a square matrix");
        match m.rows() {
            0 => None,
            1 => Some(Factor::Scalar(m.get(0, 0).copied().unwrap_or(0.0))),
            _ => {
                let csc = m.to_csc();
                Ldl::new().numeric(csc.view()).ok().map(|f| Factor::Ldl(Box::new(f)))
            }
        }
    }

    pub fn pivots(&self) -> Vec<f64> {
        match self {
            Factor::Scalar(d) => vec![*d],
            Factor::Ldl(f) => f.d().to_vec(),
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.pivots().iter().all(|&d| d > 0.0 && d.is_finite())
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            Factor::Scalar(d) => vec![rhs[0] / d],
            Factor::Ldl(f) => f.solve(&rhs.to_vec()),
        }
    }
}

/// Outcome of a conjugate-gradient run.
#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Jacobi-preconditioned CG for SPD `m`, stopping when `‖r‖₂ ≤ rel_tol·‖b‖₂`.
pub fn conjugate_gradient(m: &CsMat<f64>, b: &[f64], rel_tol: f64, max_iter: usize) -> CgResult {
    let n = b.len();
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| match m.get(i, i) {
            Some(&d) if d > 0.0 => 1.0 / d,
            _ => 1.0,
        })
        .collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return CgResult { x, iterations: 0, converged: true };
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let ap = spmv(m, &p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= rel_tol * b_norm {
            return CgResult { x, iterations: it + 1, converged: true };
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgResult { x, iterations: max_iter, converged: false }
}
