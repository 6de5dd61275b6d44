use nalgebra::{DMatrix, DVector};
use sprs::CsMat;

use super::{boundary_spot, check_ratio, monotone_side, side_extent, BoundaryMap, BoundarySpot, ConstraintSet, LineParams, Side, SimplicialMap, SolverError};
use crate::energy::{csr_from_rows, grad_coeffs, laplacian_matrix, spmv, symmetric_from_upper};
use crate::geometry::Point;
use crate::linalg::Factor;
use crate::mesh::{Classification, SimplicialMesh, VertexRole};

/// Column of the least-squares system: a vertex unknown or a constraint parameter.
#[derive(Debug, Clone, Copy)]
enum Col {
    Y(usize),
    P(usize),
}

/// One image coordinate of a vertex as `Σ coef·unknown + constant`.
#[derive(Debug, Clone, Default)]
struct Affine {
    terms: Vec<(Col, f64)>,
    constant: f64,
}

/// The overdetermined linear system `[A_y | A_p] [y; p] ≈ c` and its least-squares
/// solution. `y` are vertex unknowns (free images and boundary slides), `p` the
/// constraint parameters.
#[derive(Debug, Clone)]
pub struct InitSystem {
    pub ay: CsMat<f64>,
    pub ap: DMatrix<f64>,
    pub rhs: Vec<f64>,
    pub y: Vec<f64>,
    pub p: Vec<f64>,
}

impl InitSystem {
    pub fn residual(&self) -> Vec<f64> {
        let mut r = spmv(&self.ay, &self.y);
        let ap_p = &self.ap * DVector::from_column_slice(&self.p);
        for (i, ri) in r.iter_mut().enumerate() {
            *ri += ap_p[i] - self.rhs[i];
        }
        r
    }

    /// `‖Aᵀ(Az − c)‖∞ / ‖Aᵀc‖∞`, zero at an exact least-squares optimum.
    pub fn normal_residual(&self) -> f64 {
        let at = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; self.ay.cols() + self.ap.ncols()];
            for (i, row) in self.ay.outer_iterator().enumerate() {
                for (j, &a) in row.iter() {
                    out[j] += a * v[i];
                }
            }
            let g = self.ap.transpose() * DVector::from_column_slice(v);
            for k in 0..self.ap.ncols() {
                out[self.ay.cols() + k] = g[k];
            }
            out
        };
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scale = inf(&at(&self.rhs));
        let g = inf(&at(&self.residual()));
        if scale == 0.0 {
            g
        } else {
            g / scale
        }
    }
}

/// Initialized parameters with the least-squares map they came from.
#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub constraints: ConstraintSet,
    pub map: SimplicialMap,
    pub system: InitSystem,
}

/// Estimates `r_O`, `t_O`, line parameters and the boundary map by least squares.
///
/// Rows ask for vanishing energy gradient at every non-boundary vertex, and for a
/// vanishing tangential gradient at each non-corner boundary vertex, which may slide
/// along its side of the target rectangle. Corners are pinned. ROI and line vertices
/// are tied to their affine parameters. Directions the data leaves undetermined (for
/// instance the vertical scale of a horizontal line) are resolved towards
/// `r_O = min(w, 1)`, `R = diag(w, 1)` and zero translation.
pub fn init_params(mesh: &SimplicialMesh, classes: &Classification, w: f64) -> Result<InitOutcome, SolverError> {
    check_ratio(w)?;
    let (a, b) = (mesh.width(), mesh.height());
    let coeffs = grad_coeffs(mesh)?;
    let l = laplacian_matrix(mesh, &coeffs);
    let n = mesh.num_vertices();
    let (n_rois, n_lines) = (classes.num_rois(), classes.num_lines());

    // parameter columns: [r_O?] [t_i x, t_i y]* [sx, sy, tx, ty]*
    let r_col = 0;
    let t_base = usize::from(n_rois > 0);
    let line_base = t_base + 2 * n_rois;
    let np = line_base + 4 * n_lines;
    let mut prior = vec![0.0; np];
    if n_rois > 0 {
        prior[r_col] = w.min(1.0);
    }
    for j in 0..n_lines {
        prior[line_base + 4 * j] = w;
        prior[line_base + 4 * j + 1] = 1.0;
    }

    let mut ny = 0;
    let mut coords: Vec<[Affine; 2]> = Vec::with_capacity(n);
    let mut spots: Vec<Option<BoundarySpot>> = Vec::with_capacity(n);
    for (v, p) in mesh.vertices().iter().enumerate() {
        let known = |c: f64| Affine { terms: vec![], constant: c };
        let mut next = || {
            ny += 1;
            Affine { terms: vec![(Col::Y(ny - 1), 1.0)], constant: 0.0 }
        };
        let mut spot = None;
        let pair = match classes.role(v) {
            VertexRole::Interior => [next(), next()],
            VertexRole::Boundary => {
                spot = boundary_spot(p, a, b);
                match spot {
                    None => {
                        return Err(SolverError::InvalidConstraints(format!("boundary vertex {v} at {p:?} is off the outline")))
                    }
                    Some(BoundarySpot::Corner) => {
                        let img = super::BoundaryMap::linear().eval(p, a, b, w).expect("corner is on the outline");
                        [known(img.x), known(img.y)]
                    }
                    Some(BoundarySpot::Side(Side::Bottom)) => [next(), known(0.0)],
                    Some(BoundarySpot::Side(Side::Top)) => [next(), known(b)],
                    Some(BoundarySpot::Side(Side::Left)) => [known(0.0), next()],
                    Some(BoundarySpot::Side(Side::Right)) => [known(w * a), next()],
                }
            }
            VertexRole::Roi(i) => [
                Affine { terms: vec![(Col::P(r_col), p.x), (Col::P(t_base + 2 * i), 1.0)], constant: 0.0 },
                Affine { terms: vec![(Col::P(r_col), p.y), (Col::P(t_base + 2 * i + 1), 1.0)], constant: 0.0 },
            ],
            VertexRole::Line(j) => {
                let c = line_base + 4 * j;
                [
                    Affine { terms: vec![(Col::P(c), p.x), (Col::P(c + 2), 1.0)], constant: 0.0 },
                    Affine { terms: vec![(Col::P(c + 1), p.y), (Col::P(c + 3), 1.0)], constant: 0.0 },
                ]
            }
        };
        coords.push(pair);
        spots.push(spot);
    }

    // rows: (vertex, component) pairs whose stationarity is asked for
    let mut row_keys: Vec<(usize, usize)> = Vec::new();
    for v in 0..n {
        match (classes.role(v), spots[v]) {
            (VertexRole::Boundary, Some(BoundarySpot::Side(Side::Bottom | Side::Top))) => row_keys.push((v, 0)),
            (VertexRole::Boundary, Some(BoundarySpot::Side(Side::Left | Side::Right))) => row_keys.push((v, 1)),
            (VertexRole::Boundary, _) => {}
            _ => {
                row_keys.push((v, 0));
                row_keys.push((v, 1));
            }
        }
    }
    let nr = row_keys.len();
    let mut ay_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nr];
    let mut ap = DMatrix::<f64>::zeros(nr, np);
    let mut rhs = vec![0.0; nr];
    for (r, &(v, comp)) in row_keys.iter().enumerate() {
        for (k, &lvk) in l.outer_view(v).expect("row in range").iter() {
            let f = &coords[k][comp];
            rhs[r] -= lvk * f.constant;
            for &(col, coef) in &f.terms {
                match col {
                    Col::Y(c) => ay_rows[r].push((c, lvk * coef)),
                    Col::P(c) => ap[(r, c)] += lvk * coef,
                }
            }
        }
    }

    // normal equations, eliminating the vertex unknowns with a sparse factorization
    let mut upper = Vec::new();
    let mut ayt_ap = DMatrix::<f64>::zeros(ny, np);
    let mut ayt_c = vec![0.0; ny];
    for (r, row) in ay_rows.iter().enumerate() {
        for &(i, vi) in row {
            for &(j, vj) in row {
                if i <= j {
                    upper.push((i, j, vi * vj));
                }
            }
            ayt_c[i] += vi * rhs[r];
            for c in 0..np {
                ayt_ap[(i, c)] += vi * ap[(r, c)];
            }
        }
    }
    let ay = csr_from_rows(ny, ay_rows);
    let (y, p) = if ny == 0 {
        let s = ap.transpose() * &ap;
        let q = ap.transpose() * DVector::from_column_slice(&rhs);
        (Vec::new(), solve_parameters(&s, &q, &prior))
    } else {
        let kyy = symmetric_from_upper(ny, upper);
        let factor = Factor::new(&kyy)
            .filter(|f| f.is_positive_definite())
            .ok_or_else(|| SolverError::SingularSystem("vertex block of the initialization system".into()))?;
        let kinv_c = factor.solve(&ayt_c);
        let mut x = DMatrix::<f64>::zeros(ny, np);
        for c in 0..np {
            let col: Vec<f64> = ayt_ap.column(c).iter().copied().collect();
            x.set_column(c, &DVector::from_vec(factor.solve(&col)));
        }
        let s = ap.transpose() * &ap - ayt_ap.transpose() * &x;
        let q = ap.transpose() * DVector::from_column_slice(&rhs) - ayt_ap.transpose() * DVector::from_column_slice(&kinv_c);
        let p = solve_parameters(&s, &q, &prior);
        let pv = DVector::from_column_slice(&p);
        let z = DVector::from_column_slice(&ayt_c) - &ayt_ap * pv;
        (factor.solve(z.as_slice()), p)
    };

    let eval = |f: &Affine| {
        f.constant
            + f.terms
                .iter()
                .map(|&(col, coef)| coef * match col {
                    Col::Y(c) => y[c],
                    Col::P(c) => p[c],
                })
                .sum::<f64>()
    };
    let positions: Vec<Point> = coords.iter().map(|[u, v]| Point::new(eval(u), eval(v))).collect();

    let r_o = if n_rois > 0 { p[r_col] } else { w.min(1.0) };
    let t_o = (0..n_rois).map(|i| [p[t_base + 2 * i], p[t_base + 2 * i + 1]]).collect();
    let lines: Vec<LineParams> = (0..n_lines)
        .map(|j| {
            let c = line_base + 4 * j;
            LineParams { scale: [p[c], p[c + 1]], shift: [p[c + 2], p[c + 3]] }
        })
        .collect();
    if r_o <= 0.0 || lines.iter().any(|l| l.scale[0] <= 0.0 || l.scale[1] <= 0.0) || !r_o.is_finite() {
        return Err(SolverError::NonPositiveScale { r_o, line_scales: lines.iter().map(|l| l.scale).collect() });
    }

    let mut g = BoundaryMap::linear();
    for side in [Side::Bottom, Side::Top, Side::Left, Side::Right] {
        let (len, img) = side_extent(side, a, b, w);
        let mut samples = vec![[0.0, 0.0], [len, img]];
        for v in 0..n {
            if spots[v] == Some(BoundarySpot::Side(side)) && classes.role(v) == VertexRole::Boundary {
                let (src, dst) = (mesh.vertices()[v], positions[v]);
                samples.push(match side {
                    Side::Bottom | Side::Top => [src.x, dst.x],
                    Side::Left | Side::Right => [src.y, dst.y],
                });
            }
        }
        *g.side_mut(side) = monotone_side(&mut samples, len, img);
    }

    Ok(InitOutcome {
        constraints: ConstraintSet { r_o, t_o, lines, g },
        map: SimplicialMap { positions },
        system: InitSystem { ay, ap, rhs, y, p },
    })
}

/// Minimum-norm solution of `S p = q` around `prior`, after symmetric diagonal scaling.
fn solve_parameters(s: &DMatrix<f64>, q: &DVector<f64>, prior: &[f64]) -> Vec<f64> {
    let np = prior.len();
    if np == 0 {
        return Vec::new();
    }
    let p0 = DVector::from_column_slice(prior);
    let d: Vec<f64> = (0..np).map(|k| if s[(k, k)] > 0.0 { s[(k, k)].sqrt() } else { 1.0 }).collect();
    let scaled = DMatrix::from_fn(np, np, |i, j| s[(i, j)] / (d[i] * d[j]));
    let r = q - s * &p0;
    let r_scaled = DVector::from_fn(np, |i, _| r[i] / d[i]);
    let svd = scaled.svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |m, &x| m.max(x));
    let delta = svd.solve(&r_scaled, 1e-10 * sigma_max).expect("both factors were computed");
    (0..np).map(|k| prior[k] + delta[k] / d[k]).collect()
}

/// Parameters used when least squares gives a non-positive scale: `r_O = min(w, 1)`,
/// `R = diag(w, 1)`, translations that keep each region's vertex centroid at its
/// uniformly stretched position, and a linear boundary map.
pub fn fallback_params(mesh: &SimplicialMesh, classes: &Classification, w: f64) -> ConstraintSet {
    let r_o = w.min(1.0);
    let centroid = |pred: &dyn Fn(VertexRole) -> bool| {
        let (mut sum, mut count) = (Point::origin().coords, 0usize);
        for (v, p) in mesh.vertices().iter().enumerate() {
            if pred(classes.role(v)) {
                sum += p.coords;
                count += 1;
            }
        }
        (count > 0).then(|| Point::from(sum / count as f64))
    };
    let t_o = (0..classes.num_rois())
        .map(|i| match centroid(&|r| r == VertexRole::Roi(i)) {
            Some(c) => [w * c.x - r_o * c.x, c.y - r_o * c.y],
            None => [0.0, 0.0],
        })
        .collect();
    let lines = (0..classes.num_lines()).map(|_| LineParams { scale: [w, 1.0], shift: [0.0, 0.0] }).collect();
    ConstraintSet { r_o, t_o, lines, g: BoundaryMap::linear() }
}
