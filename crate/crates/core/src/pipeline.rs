//! End-to-end retargeting: mesh, constraints, solve, correction, resampling.

use serde::{Deserialize, Serialize};

use crate::energy::{discrete_energy, energy_density, grad_coeffs, laplacian_matrix, EnergyError, GradCoeffs, SparseSymmetricSystem};
use crate::geometry::Point;
use crate::mask::Mask;
use crate::mesh::{build_mesh, classify_vertices, Classification, MeshError, MeshParams, Polyline, SimplicialMesh};
use crate::roi::{compute_saliency, threshold_rois, RoiError, SaliencyMap};
use crate::solver::{
    apply_constraints, bijection_correct, check_orientation, fallback_params, init_params, solve_minimizer_with, ConstraintSet,
    CorrectionOptions, SimplicialMap, SolveOptions, SolverError,
};
use crate::warp::{build_target_index, render_density, resample, Raster, WarpError};

pub const DEFAULT_SEED: u64 = crate::mesh::DEFAULT_SEED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// ROIs are proposed from the saliency map in addition to any supplied masks.
    Auto,
    #[default]
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub solver_residual: f64,
    pub max_correction_iterations: Option<usize>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { solver_residual: 1e-8, max_correction_iterations: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetargetSpec {
    /// Width ratio `w` of target to source.
    pub ratio: f64,
    /// Target mesh edge length in pixels.
    pub edge_length: f64,
    /// Saliency fraction used in auto mode.
    pub fraction: f64,
    pub mode: Mode,
    pub tolerances: Tolerances,
    pub seed: u64,
}

impl Default for RetargetSpec {
    fn default() -> Self {
        RetargetSpec {
            ratio: 1.0,
            edge_length: 16.0,
            fraction: 0.25,
            mode: Mode::Manual,
            tolerances: Tolerances::default(),
            seed: DEFAULT_SEED,
        }
    }
}

impl RetargetSpec {
    pub fn with_ratio(ratio: f64) -> Self {
        RetargetSpec { ratio, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), RetargetError> {
        if !(self.ratio > 0.0 && self.ratio.is_finite()) {
            return Err(RetargetError::InvalidSpec(format!("ratio must be positive, got {}", self.ratio)));
        }
        if !(self.edge_length >= 2.0 && self.edge_length.is_finite()) {
            return Err(RetargetError::InvalidSpec(format!("edge_length must be at least 2, got {}", self.edge_length)));
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(RetargetError::InvalidSpec(format!("fraction must lie in (0, 1), got {}", self.fraction)));
        }
        if !(self.tolerances.solver_residual > 0.0) {
            return Err(RetargetError::InvalidSpec("solver_residual must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RetargetError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Warp(#[from] WarpError),
    #[error(transparent)]
    Roi(#[from] RoiError),
}

/// Coarse failure category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad input or constraints that cannot be satisfied as given.
    Constraint,
    /// The numerical pipeline failed on valid input.
    Solver,
    /// I/O or decoding problems.
    Other,
}

impl RetargetError {
    pub fn kind(&self) -> FailureKind {
        match self {
            RetargetError::InvalidSpec(_) | RetargetError::Roi(_) => FailureKind::Constraint,
            RetargetError::Mesh(MeshError::Io(_) | MeshError::Parse { .. }) => FailureKind::Other,
            RetargetError::Mesh(_) => FailureKind::Constraint,
            RetargetError::Energy(EnergyError::SizeMismatch { .. }) => FailureKind::Constraint,
            RetargetError::Energy(_) => FailureKind::Solver,
            RetargetError::Solver(
                SolverError::InvalidConstraints(_) | SolverError::MissingParameter(_) | SolverError::InvalidRatio(_),
            ) => FailureKind::Constraint,
            RetargetError::Solver(SolverError::Energy(EnergyError::SizeMismatch { .. })) => FailureKind::Constraint,
            RetargetError::Solver(_) => FailureKind::Solver,
            RetargetError::Warp(WarpError::FlippedTriangle(_)) => FailureKind::Solver,
            RetargetError::Warp(_) => FailureKind::Other,
        }
    }
}

/// Summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub conformal_energy: f64,
    pub dirichlet_energy: f64,
    pub flipped_initial: usize,
    pub correction_iterations: usize,
    pub n_c_bound: usize,
    pub per_triangle_density: Vec<f64>,
    pub seed: u64,
    pub ratio: f64,
    pub num_vertices: usize,
    pub num_triangles: usize,
    pub num_rois: usize,
    pub num_lines: usize,
    pub r_o: f64,
    /// True when least-squares initialization failed and fallback parameters were used.
    pub fallback_params: bool,
}

/// Everything produced by [`retarget`].
#[derive(Debug, Clone)]
pub struct RetargetOutput {
    pub mesh: SimplicialMesh,
    pub classes: Classification,
    pub coeffs: GradCoeffs,
    pub constraints: ConstraintSet,
    pub map: SimplicialMap,
    pub density: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Computes an orientation-preserving map from `[0,width]×[0,height]` onto
/// `[0, ratio·width]×[0,height]`.
///
/// Missing constraint parameters are initialized by least squares; when that yields a
/// non-positive scale the fallback parameters are used instead.
pub fn retarget(
    spec: &RetargetSpec,
    width: f64,
    height: f64,
    masks: &[Mask],
    polylines: &[Polyline],
    constraints: Option<ConstraintSet>,
) -> Result<RetargetOutput, RetargetError> {
    spec.validate()?;
    let w = spec.ratio;
    let params = MeshParams::new(spec.edge_length).with_seed(spec.seed);
    let mesh = build_mesh(width, height, &params, masks, polylines)?;
    let classes = classify_vertices(&mesh, masks, polylines)?;
    let coeffs = grad_coeffs(&mesh)?;
    let laplacian = laplacian_matrix(&mesh, &coeffs);

    let mut fallback = false;
    let constraints = match constraints {
        Some(c) => {
            c.validate(width, height, w)?;
            c
        }
        None => match init_params(&mesh, &classes, w) {
            Ok(out) => out.constraints,
            Err(SolverError::NonPositiveScale { .. }) => {
                fallback = true;
                fallback_params(&mesh, &classes, w)
            }
            Err(e) => return Err(e.into()),
        },
    };

    let targets = apply_constraints(&mesh, &classes, &constraints, w)?;
    let solve = SolveOptions { residual_tol: spec.tolerances.solver_residual, ..Default::default() };
    let initial = match SparseSymmetricSystem::from_laplacian(laplacian.clone(), &classes.free_flags()) {
        Ok(system) => solve_minimizer_with(&system, &targets, &solve)?,
        // nothing to solve for: the constraints are the map
        Err(EnergyError::EmptyFreeSet) => SimplicialMap {
            positions: targets.iter().map(|t| t.expect("every vertex is constrained")).collect(),
        },
        Err(e) => return Err(e.into()),
    };
    let flipped_initial = check_orientation(&mesh, &coeffs, &initial).len();
    let options = CorrectionOptions { max_iterations: spec.tolerances.max_correction_iterations, solve };
    let corrected = bijection_correct(&mesh, &coeffs, &laplacian, &classes, &targets, initial, options)?;

    let energy = discrete_energy(&mesh, &coeffs, &corrected.map.positions, w * width * height)?;
    let density = energy_density(&mesh, &coeffs, &corrected.map.positions)?;
    let diagnostics = Diagnostics {
        conformal_energy: energy.conformal,
        dirichlet_energy: energy.dirichlet,
        flipped_initial,
        correction_iterations: corrected.iterations,
        n_c_bound: corrected.n_c,
        per_triangle_density: density.clone(),
        seed: spec.seed,
        ratio: w,
        num_vertices: mesh.num_vertices(),
        num_triangles: mesh.num_triangles(),
        num_rois: classes.num_rois(),
        num_lines: classes.num_lines(),
        r_o: constraints.r_o,
        fallback_params: fallback,
    };
    Ok(RetargetOutput { mesh, classes, coeffs, constraints, map: corrected.map, density, diagnostics })
}

/// Output of [`retarget_image`].
#[derive(Debug, Clone)]
pub struct ImageRetarget {
    pub image: Raster,
    pub density: Raster,
    pub saliency: Option<SaliencyMap>,
    /// All ROI masks used, supplied ones first.
    pub masks: Vec<Mask>,
    pub result: RetargetOutput,
}

/// Proposes ROI masks from saliency, dropping proposals that touch a supplied mask
/// or polyline (they would violate region disjointness).
pub fn auto_masks(
    saliency: &SaliencyMap,
    fraction: f64,
    supplied: &[Mask],
    polylines: &[Polyline],
) -> Result<Vec<Mask>, RetargetError> {
    let proposals = match threshold_rois(saliency, fraction) {
        Ok(m) => m,
        Err(RoiError::NoComponents) => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let (w, h) = (saliency.width(), saliency.height());
    Ok(proposals
        .into_iter()
        .filter(|m| {
            let near = |x: usize, y: usize| {
                let xs = x.saturating_sub(1)..(x + 2).min(w);
                xs.clone().any(|nx| (y.saturating_sub(1)..(y + 2).min(h)).any(|ny| supplied.iter().any(|s| s.get(nx, ny))))
            };
            let touches_mask = (0..h).any(|y| (0..w).any(|x| m.get(x, y) && near(x, y)));
            let touches_line = polylines.iter().any(|l| {
                (0..h).any(|y| {
                    (0..w).any(|x| {
                        m.get(x, y) && l.distance_to(&Point::new(x as f64 + 0.5, y as f64 + 0.5)) <= 1.5
                    })
                })
            });
            !touches_mask && !touches_line
        })
        .collect())
}

/// Retargets a raster: optional saliency ROIs, [`retarget`], inverse resampling and the
/// energy-density image.
pub fn retarget_image(
    image: &Raster,
    spec: &RetargetSpec,
    masks: &[Mask],
    polylines: &[Polyline],
    constraints: Option<ConstraintSet>,
) -> Result<ImageRetarget, RetargetError> {
    spec.validate()?;
    let mut all_masks = masks.to_vec();
    let saliency = match spec.mode {
        Mode::Auto => {
            let s = compute_saliency(image);
            all_masks.extend(auto_masks(&s, spec.fraction, masks, polylines)?);
            Some(s)
        }
        Mode::Manual => None,
    };
    let result = retarget(spec, image.width() as f64, image.height() as f64, &all_masks, polylines, constraints)?;
    let index = build_target_index(&result.mesh, &result.map)?;
    let out = resample(image, &index, &result.mesh)?;
    let density = render_density(&index, &result.density, image.height());
    Ok(ImageRetarget { image: out, density, saliency, masks: all_masks, result })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ratio_is_identity() {
        let out = retarget(&RetargetSpec { edge_length: 8.0, ..RetargetSpec::with_ratio(1.0) }, 64.0, 48.0, &[], &[], None).unwrap();
        assert!(out.diagnostics.conformal_energy.abs() < 1e-9);
        for (p, q) in out.mesh.vertices().iter().zip(&out.map.positions) {
            assert!((p - q).norm() < 1e-8);
        }
    }

    #[test]
    fn stretch_energy() {
        let w = 0.75;
        let out = retarget(&RetargetSpec { edge_length: 8.0, ..RetargetSpec::with_ratio(w) }, 64.0, 48.0, &[], &[], None).unwrap();
        let expected = 0.5 * (1.0 - w) * (1.0 - w) * 64.0 * 48.0;
        assert!((out.diagnostics.conformal_energy - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn spec_validation() {
        assert!(RetargetSpec::with_ratio(0.0).validate().is_err());
        assert!(RetargetSpec { edge_length: 1.0, ..Default::default() }.validate().is_err());
        let err = retarget(&RetargetSpec::with_ratio(-1.0), 10.0, 10.0, &[], &[], None).unwrap_err();
        assert_eq!(err.kind(), FailureKind::Constraint);
    }

    #[test]
    fn spec_defaults_fill_missing_fields() {
        use serde::de::value::{Error, MapDeserializer};
        let fields = MapDeserializer::<_, Error>::new(std::iter::once(("ratio", 0.5)));
        let spec = RetargetSpec::deserialize(fields).unwrap();
        assert_eq!(spec.ratio, 0.5);
        assert_eq!(spec.fraction, 0.25);
        assert_eq!(spec.seed, DEFAULT_SEED);
        assert_eq!(spec.mode, Mode::Manual);
    }
}
