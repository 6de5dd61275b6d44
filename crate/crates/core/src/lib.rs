//! Mesh-based image retargeting by discrete conformal energy minimization.
//!
//! The source image rectangle is triangulated, a piecewise-affine map onto the target
//! rectangle is found by solving a sparse Laplacian system with ROI, line and boundary
//! constraints, flipped triangles are repaired by relaxing constraints locally, and the
//! image is resampled through the inverse map.

pub mod energy;
pub mod geometry;
pub mod linalg;
pub mod mask;
pub mod mesh;
pub mod pipeline;
pub mod roi;
pub mod solver;
pub mod warp;

pub use energy::{assemble, discrete_energy, energy_density, grad_coeffs, EnergyError, GradCoeffs, SparseSymmetricSystem};
pub use geometry::{Point, Vec2};
pub use mask::Mask;
pub use mesh::{build_mesh, classify_vertices, corner_chop, mesh_diameter, MeshError, MeshParams, Polyline, SimplicialMesh};
pub use pipeline::{retarget, retarget_image, Diagnostics, FailureKind, ImageRetarget, Mode, RetargetError, RetargetOutput, RetargetSpec, Tolerances};
pub use roi::{compute_saliency, threshold_rois, SaliencyMap};
pub use solver::{bijection_correct, init_params, solve_minimizer, ConstraintSet, SimplicialMap, SolverError};
pub use warp::{Raster, TargetMeshIndex};
