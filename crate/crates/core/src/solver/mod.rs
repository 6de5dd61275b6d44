//! Constrained minimization of the discrete conformal energy.
//!
//! Constrained vertices get fixed images from a [`ConstraintSet`]; the free ones solve
//! `L^a f_a = −L^b f_b`. [`init_params`] estimates the constraint parameters when the
//! caller has none, and [`bijection_correct`] relaxes constraints around flipped
//! triangles until the map preserves orientation.

mod correct;
mod init;

use serde::{Deserialize, Serialize};

use crate::energy::{jacobian_determinants, spmv, EnergyError, GradCoeffs, SparseSymmetricSystem};
use crate::geometry::Point;
use crate::linalg::{conjugate_gradient, Factor};
use crate::mesh::{Classification, SimplicialMesh, VertexRole};

pub use correct::{bijection_correct, correction_bound, Correction, CorrectionOptions};
pub use init::{fallback_params, init_params, InitOutcome, InitSystem};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("invalid resize ratio {0}")]
    InvalidRatio(f64),
    #[error("missing parameter: {0}")]
    MissingParameter(String),
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("least-squares initialization gave a non-positive scale (r_O = {r_o}, line scales {line_scales:?})")]
    NonPositiveScale { r_o: f64, line_scales: Vec<[f64; 2]> },
    #[error("{} triangles still flipped after relaxing every constraint ({iterations} solves)", flipped.len())]
    NoConvergence { flipped: Vec<usize>, iterations: usize },
}

/// Anisotropic scale and shift of one line structure: `f(x, y) = (sx·x + tx, sy·y + ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    pub scale: [f64; 2],
    pub shift: [f64; 2],
}

/// Side of the source rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Top,
    Left,
    Right,
}

/// Position of a point on the rectangle outline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySpot {
    Corner,
    Side(Side),
}

/// Classifies a point of `∂([0,a]×[0,b])`; `None` when it is not on the outline.
pub fn boundary_spot(p: &Point, a: f64, b: f64) -> Option<BoundarySpot> {
    let tol = 1e-9 * a.max(b);
    let (x0, x1) = (p.x.abs() <= tol, (p.x - a).abs() <= tol);
    let (y0, y1) = (p.y.abs() <= tol, (p.y - b).abs() <= tol);
    match (x0 || x1, y0 || y1) {
        (true, true) => Some(BoundarySpot::Corner),
        (false, true) => Some(BoundarySpot::Side(if y0 { Side::Bottom } else { Side::Top })),
        (true, false) => Some(BoundarySpot::Side(if x0 { Side::Left } else { Side::Right })),
        (false, false) => None,
    }
}

/// Boundary condition as piecewise-linear maps per side.
///
/// Bottom and top map `x ∈ [0,a]` to `x' ∈ [0,wa]`; left and right map `y ∈ [0,b]` to
/// `y' ∈ [0,b]`. Each list holds `[s, s']` breakpoints from `[0, 0]` to the side's end,
/// strictly increasing in both coordinates. An empty list means the linear map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryMap {
    pub bottom: Vec<[f64; 2]>,
    pub top: Vec<[f64; 2]>,
    pub left: Vec<[f64; 2]>,
    pub right: Vec<[f64; 2]>,
}

impl BoundaryMap {
    pub fn linear() -> Self {
        BoundaryMap::default()
    }

    pub fn side(&self, side: Side) -> &[[f64; 2]] {
        match side {
            Side::Bottom => &self.bottom,
            Side::Top => &self.top,
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut Vec<[f64; 2]> {
        match side {
            Side::Bottom => &mut self.bottom,
            Side::Top => &mut self.top,
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }

    /// Checks endpoints and strict monotonicity for a domain `a × b` and ratio `w`.
    pub fn validate(&self, a: f64, b: f64, w: f64) -> Result<(), SolverError> {
        let tol = 1e-9 * a.max(b);
        for side in [Side::Bottom, Side::Top, Side::Left, Side::Right] {
            let pts = self.side(side);
            if pts.is_empty() {
                continue;
            }
            let (len, img) = side_extent(side, a, b, w);
            let bad = |msg: &str| Err(SolverError::InvalidConstraints(format!("{side:?} boundary map: {msg}")));
            let (first, last) = (pts[0], pts[pts.len() - 1]);
            if pts.len() < 2 || first[0].abs() > tol || first[1].abs() > tol {
                return bad("must start at [0, 0]");
            }
            if (last[0] - len).abs() > tol || (last[1] - img).abs() > tol {
                return bad(&format!("must end at [{len}, {img}]"));
            }
            if pts.windows(2).any(|p| !(p[1][0] > p[0][0] && p[1][1] > p[0][1])) {
                return bad("breakpoints must be strictly increasing");
            }
        }
        Ok(())
    }

    /// Image of a boundary point, or `None` for points off the outline.
    pub fn eval(&self, p: &Point, a: f64, b: f64, w: f64) -> Option<Point> {
        let spot = boundary_spot(p, a, b)?;
        let tol = 1e-9 * a.max(b);
        let snap = |v: f64, end: f64, img: f64| if v.abs() <= tol { 0.0 } else if (v - end).abs() <= tol { img } else { v };
        Some(match spot {
            BoundarySpot::Corner => Point::new(snap(p.x, a, w * a), snap(p.y, b, b)),
            BoundarySpot::Side(side) => {
                let (_, img) = side_extent(side, a, b, w);
                let s = match side {
                    Side::Bottom | Side::Top => p.x,
                    Side::Left | Side::Right => p.y,
                };
                let pts = self.side(side);
                let t = if pts.is_empty() {
                    let (len, _) = side_extent(side, a, b, w);
                    s * img / len
                } else {
                    interpolate(pts, s)
                };
                match side {
                    Side::Bottom => Point::new(t, 0.0),
                    Side::Top => Point::new(t, b),
                    Side::Left => Point::new(0.0, t),
                    Side::Right => Point::new(w * a, t),
                }
            }
        })
    }
}

/// Source length and image length of a side.
fn side_extent(side: Side, a: f64, b: f64, w: f64) -> (f64, f64) {
    match side {
        Side::Bottom | Side::Top => (a, w * a),
        Side::Left | Side::Right => (b, b),
    }
}

fn interpolate(pts: &[[f64; 2]], s: f64) -> f64 {
    let k = pts.partition_point(|p| p[0] <= s).clamp(1, pts.len() - 1);
    let (p, q) = (pts[k - 1], pts[k]);
    let t = ((s - p[0]) / (q[0] - p[0])).clamp(0.0, 1.0);
    p[1] + t * (q[1] - p[1])
}

/// Least-squares projection of `values` onto nondecreasing sequences (pool adjacent violators).
pub fn isotonic(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
        }
    }
    blocks.into_iter().flat_map(|(m, n)| std::iter::repeat_n(m, n)).collect()
}

/// Builds a strictly monotone side map from raw `(s, s')` samples that include both
/// endpoints. Non-monotone samples are projected with [`isotonic`]; ties left by the
/// projection are broken by blending a tiny fraction of the linear map.
pub(crate) fn monotone_side(samples: &mut [[f64; 2]], len: f64, img: f64) -> Vec<[f64; 2]> {
    samples.sort_by(|p, q| p[0].total_cmp(&q[0]));
    let raw: Vec<f64> = samples.iter().map(|p| p[1].clamp(0.0, img)).collect();
    let mut vals = isotonic(&raw);
    let n = vals.len();
    vals[0] = 0.0;
    vals[n - 1] = img;
    let strict = |v: &[f64]| v.windows(2).all(|p| p[1] > p[0]);
    if !strict(&vals) {
        let lambda = 1e-6;
        for (k, v) in vals.iter_mut().enumerate() {
            *v = (1.0 - lambda) * *v + lambda * samples[k][0] * img / len;
        }
    }
    samples.iter().zip(vals).map(|(p, v)| [p[0], v]).collect()
}

/// All constraint parameters of the warp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// Shared ROI scale.
    pub r_o: f64,
    /// Translation per ROI.
    #[serde(default)]
    pub t_o: Vec<[f64; 2]>,
    #[serde(default)]
    pub lines: Vec<LineParams>,
    #[serde(default)]
    pub g: BoundaryMap,
}

impl ConstraintSet {
    /// Identity-like parameters for `n_rois` ROIs and `n_lines` lines at ratio `w`.
    pub fn identity(n_rois: usize, n_lines: usize, w: f64) -> Self {
        ConstraintSet {
            r_o: 1.0,
            t_o: vec![[0.0, 0.0]; n_rois],
            lines: vec![LineParams { scale: [w, 1.0], shift: [0.0, 0.0] }; n_lines],
            g: BoundaryMap::linear(),
        }
    }

    pub fn validate(&self, a: f64, b: f64, w: f64) -> Result<(), SolverError> {
        if !(self.r_o > 0.0 && self.r_o.is_finite()) {
            return Err(SolverError::InvalidConstraints(format!("r_O must be positive, got {}", self.r_o)));
        }
        for (j, l) in self.lines.iter().enumerate() {
            if !(l.scale[0] > 0.0 && l.scale[1] > 0.0) {
                return Err(SolverError::InvalidConstraints(format!("line {j} scale must be positive, got {:?}", l.scale)));
            }
        }
        self.g.validate(a, b, w)
    }
}

/// Per-vertex image positions of a piecewise-affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMap {
    pub positions: Vec<Point>,
}

impl SimplicialMap {
    pub fn identity(mesh: &SimplicialMesh) -> Self {
        SimplicialMap { positions: mesh.vertices().to_vec() }
    }

    pub fn is_orientation_preserving(&self, mesh: &SimplicialMesh, coeffs: &GradCoeffs) -> bool {
        check_orientation(mesh, coeffs, self).is_empty()
    }
}

fn check_ratio(w: f64) -> Result<(), SolverError> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(SolverError::InvalidRatio(w))
    }
}

/// Image of every constrained vertex; `None` for interior vertices.
pub fn apply_constraints(
    mesh: &SimplicialMesh,
    classes: &Classification,
    constraints: &ConstraintSet,
    w: f64,
) -> Result<Vec<Option<Point>>, SolverError> {
    check_ratio(w)?;
    let (a, b) = (mesh.width(), mesh.height());
    mesh.vertices()
        .iter()
        .enumerate()
        .map(|(v, p)| match classes.role(v) {
            VertexRole::Interior => Ok(None),
            VertexRole::Boundary => constraints
                .g
                .eval(p, a, b, w)
                .map(Some)
                .ok_or_else(|| SolverError::InvalidConstraints(format!("boundary vertex {v} at {p:?} is off the outline"))),
            VertexRole::Roi(i) => {
                let t = constraints.t_o.get(i).ok_or_else(|| SolverError::MissingParameter(format!("t_O[{i}]")))?;
                Ok(Some(Point::new(constraints.r_o * p.x + t[0], constraints.r_o * p.y + t[1])))
            }
            VertexRole::Line(j) => {
                let l = constraints.lines.get(j).ok_or_else(|| SolverError::MissingParameter(format!("line {j}")))?;
                Ok(Some(Point::new(l.scale[0] * p.x + l.shift[0], l.scale[1] * p.y + l.shift[1])))
            }
        })
        .collect()
}

/// Linear solver used by [`solve_minimizer_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Ldl,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub backend: Backend,
    /// Accept when `‖L^a f_a + L^b f_b‖∞ ≤ residual_tol · ‖L^b f_b‖∞`.
    pub residual_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { backend: Backend::Ldl, residual_tol: 1e-8 }
    }
}

/// Solves `L^a f_a = −L^b f_b` with a sparse LDLᵀ factorization.
///
/// `targets` holds an image for every fixed vertex of `system` (entries of free
/// vertices are ignored).
pub fn solve_minimizer(system: &SparseSymmetricSystem, targets: &[Option<Point>]) -> Result<SimplicialMap, SolverError> {
    solve_minimizer_with(system, targets, &SolveOptions::default())
}

pub fn solve_minimizer_with(
    system: &SparseSymmetricSystem,
    targets: &[Option<Point>],
    options: &SolveOptions,
) -> Result<SimplicialMap, SolverError> {
    let n = system.laplacian().rows();
    if targets.len() != n {
        return Err(EnergyError::SizeMismatch { expected: n, got: targets.len() }.into());
    }
    let mut fb_u = Vec::with_capacity(system.fixed().len());
    let mut fb_v = Vec::with_capacity(system.fixed().len());
    for &v in system.fixed() {
        let p = targets[v].ok_or_else(|| SolverError::MissingParameter(format!("image of fixed vertex {v}")))?;
        fb_u.push(p.x);
        fb_v.push(p.y);
    }
    let rhs_u: Vec<f64> = spmv(system.lb(), &fb_u).into_iter().map(|x| -x).collect();
    let rhs_v: Vec<f64> = spmv(system.lb(), &fb_v).into_iter().map(|x| -x).collect();

    let (fa_u, fa_v) = match options.backend {
        Backend::Ldl => {
            let factor = Factor::new(system.la())
                .filter(|f| f.is_positive_definite())
                .ok_or_else(|| SolverError::SingularSystem("L^a is not positive definite".into()))?;
            (factor.solve(&rhs_u), factor.solve(&rhs_v))
        }
        Backend::ConjugateGradient => {
            let max_iter = 20 * system.num_free() + 100;
            let ru = conjugate_gradient(system.la(), &rhs_u, 1e-13, max_iter);
            let rv = conjugate_gradient(system.la(), &rhs_v, 1e-13, max_iter);
            if !(ru.converged && rv.converged) {
                return Err(SolverError::SingularSystem("conjugate gradient did not converge".into()));
            }
            (ru.x, rv.x)
        }
    };

    for (fa, rhs) in [(&fa_u, &rhs_u), (&fa_v, &rhs_v)] {
        let scale = rhs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let res = spmv(system.la(), fa).iter().zip(rhs).fold(0.0f64, |m, (l, r)| m.max((l - r).abs()));
        if !(res <= options.residual_tol * scale) && !(scale == 0.0 && res == 0.0) {
            return Err(SolverError::SingularSystem(format!("residual {res:e} exceeds tolerance for rhs scale {scale:e}")));
        }
    }

    let mut positions = vec![Point::origin(); n];
    for (k, &v) in system.free().iter().enumerate() {
        positions[v] = Point::new(fa_u[k], fa_v[k]);
    }
    for (k, &v) in system.fixed().iter().enumerate() {
        positions[v] = Point::new(fb_u[k], fb_v[k]);
    }
    Ok(SimplicialMap { positions })
}

/// Triangles whose image has `det ∇f ≤ 0`.
pub fn check_orientation(mesh: &SimplicialMesh, coeffs: &GradCoeffs, map: &SimplicialMap) -> Vec<usize> {
    jacobian_determinants(mesh, coeffs, &map.positions)
        .iter()
        .enumerate()
        .filter(|&(_, &d)| !(d > 0.0))
        .map(|(t, _)| t)
        .collect()
}
