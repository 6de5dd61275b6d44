use sprs::CsMat;

use super::{check_orientation, solve_minimizer_with, SimplicialMap, SolveOptions, SolverError};
use crate::energy::{GradCoeffs, SparseSymmetricSystem};
use crate::geometry::Point;
use crate::mesh::{Classification, SimplicialMesh, VertexRole};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CorrectionOptions {
    /// Stop with `NoConvergence` after this many solves even if constraints remain.
    pub max_iterations: Option<usize>,
    pub solve: SolveOptions,
}

/// Result of [`bijection_correct`].
#[derive(Debug, Clone)]
pub struct Correction {
    pub map: SimplicialMap,
    /// Number of relaxed solves performed; 0 when the input was already valid.
    pub iterations: usize,
    /// Upper bound on `iterations` implied by the growth of the relaxation sets.
    pub n_c: usize,
    /// Size of each relaxation set used, in order.
    pub relaxed_sizes: Vec<usize>,
}

fn grow(set: &mut [bool], nbrs: &[Vec<usize>]) {
    let current: Vec<usize> = (0..set.len()).filter(|&v| set[v]).collect();
    for v in current {
        for &u in &nbrs[v] {
            set[u] = true;
        }
    }
}

fn seed_set(mesh: &SimplicialMesh, flipped: &[usize]) -> Vec<bool> {
    let mut set = vec![false; mesh.num_vertices()];
    for &t in flipped {
        for &v in &mesh.triangles()[t] {
            set[v] = true;
        }
    }
    set
}

/// `n_c = min{n ≥ 1 : every ROI/line vertex lies in N^n} + 1`, where `N^0` are the
/// vertices of the flipped triangles and each step adds the one-ring.
pub fn correction_bound(mesh: &SimplicialMesh, classes: &Classification, flipped: &[usize]) -> usize {
    let nbrs = mesh.vertex_neighbors();
    let constrained: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| classes.role(v).is_constraint_region()).collect();
    let mut set = seed_set(mesh, flipped);
    let mut n = 0;
    loop {
        grow(&mut set, &nbrs);
        n += 1;
        if constrained.iter().all(|&v| set[v]) || n > mesh.num_vertices() {
            return n + 1;
        }
    }
}

/// Relaxes ROI and line constraints around flipped triangles until the map preserves
/// orientation.
///
/// Step `k` frees every ROI/line vertex in `N^k` and re-solves; boundary vertices stay
/// pinned. `N^0` holds the vertices of the triangles flipped by `initial`, and
/// `N^{k+1}` adds the one-ring of `N^k`. Once every ROI/line vertex is free the solve is
/// the boundary-only harmonic map; flips surviving that step are reported as
/// `NoConvergence`.
pub fn bijection_correct(
    mesh: &SimplicialMesh,
    coeffs: &GradCoeffs,
    laplacian: &CsMat<f64>,
    classes: &Classification,
    targets: &[Option<Point>],
    initial: SimplicialMap,
    options: CorrectionOptions,
) -> Result<Correction, SolverError> {
    let flipped = check_orientation(mesh, coeffs, &initial);
    if flipped.is_empty() {
        return Ok(Correction { map: initial, iterations: 0, n_c: 0, relaxed_sizes: Vec::new() });
    }
    let n_c = correction_bound(mesh, classes, &flipped);
    let nbrs = mesh.vertex_neighbors();
    let mut relax = seed_set(mesh, &flipped);
    let mut relaxed_sizes = Vec::new();
    let mut iterations = 0;
    loop {
        let free: Vec<bool> = (0..mesh.num_vertices())
            .map(|v| match classes.role(v) {
                VertexRole::Interior => true,
                VertexRole::Boundary => false,
                VertexRole::Roi(_) | VertexRole::Line(_) => relax[v],
            })
            .collect();
        let sys = SparseSymmetricSystem::from_laplacian(laplacian.clone(), &free)?;
        let map = solve_minimizer_with(&sys, targets, &options.solve)?;
        iterations += 1;
        relaxed_sizes.push(relax.iter().filter(|&&b| b).count());
        let still = check_orientation(mesh, coeffs, &map);
        if still.is_empty() {
            return Ok(Correction { map, iterations, n_c, relaxed_sizes });
        }
        let all_relaxed = (0..mesh.num_vertices()).all(|v| !classes.role(v).is_constraint_region() || relax[v]);
        if all_relaxed || options.max_iterations.is_some_and(|m| iterations >= m) {
            return Err(SolverError::NoConvergence { flipped: still, iterations });
        }
        grow(&mut relax, &nbrs);
    }
}
