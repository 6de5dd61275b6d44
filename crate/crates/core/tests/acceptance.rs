//! Acceptance criteria, one PASS/FAIL line each.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use retarget_core::energy::{cotangent_laplacian, energy_gradient, is_positive_definite, laplacian_matrix, verify_m_matrix};
use retarget_core::geometry::{Point, Vec2};
use retarget_core::mesh::{mesh_diameter, Classification};
use retarget_core::pipeline::{retarget, retarget_image, RetargetSpec};
use retarget_core::roi::{close, threshold_rois, top_fraction_mask, RoiError};
use retarget_core::solver::{apply_constraints, check_orientation, SimplicialMap};
use retarget_core::{
    assemble, build_mesh, classify_vertices, corner_chop, discrete_energy, grad_coeffs, solve_minimizer, ConstraintSet, Mask,
    MeshParams, Polyline, SaliencyMap, SimplicialMesh,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Sample {
    mesh: SimplicialMesh,
    classes: Classification,
}

/// Twenty-four meshes of at most 400 vertices with varied sizes, seeds and constraints.
fn random_meshes() -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut out = Vec::new();
    for i in 0..24 {
        let (w, h) = (rng.random_range(40.0..120.0f64).round(), rng.random_range(30.0..90.0f64).round());
        let mut params = MeshParams::new(rng.random_range(7.0..12.0)).with_seed(rng.random());
        params.jitter = rng.random_range(0.0..0.4);
        let (wi, hi) = (w as usize, h as usize);
        let masks = if i % 3 == 1 { vec![Mask::rect(wi, hi, wi / 3, hi / 3, wi / 2, hi / 2)] } else { Vec::new() };
        let lines = if i % 3 == 2 {
            vec![Polyline::new(vec![Point::new(0.2 * w, 0.75 * h), Point::new(0.8 * w, 0.7 * h)])]
        } else {
            Vec::new()
        };
        let mesh = build_mesh(w, h, &params, &masks, &lines).expect("mesh");
        let classes = classify_vertices(&mesh, &masks, &lines).expect("classes");
        out.push(Sample { mesh, classes });
    }
    out
}

fn cotangent_equivalence() -> Outcome {
    let meshes = random_meshes();
    let mut worst = 0.0f64;
    for (k, s) in meshes.iter().enumerate() {
        ensure(s.mesh.num_vertices() <= 400, || format!("mesh {k} has {} vertices", s.mesh.num_vertices()))?;
        let l = common::to_dense(&laplacian_matrix(&s.mesh, &grad_coeffs(&s.mesh).unwrap()));
        let oracle = common::dense_cotangent(&s.mesh);
        let lib_cot = common::to_dense(&cotangent_laplacian(&s.mesh));
        let err = (&l - &oracle).amax().max((&lib_cot - &oracle).amax());
        ensure(err <= 1e-10, || format!("mesh {k}: max entry difference {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("{} meshes, max entry difference {worst:.2e}", meshes.len()))
}

fn stieltjes() -> Outcome {
    let meshes = random_meshes();
    let mut passed = 0;
    for (k, s) in meshes.iter().enumerate() {
        let sys = assemble(&s.mesh, &grad_coeffs(&s.mesh).unwrap(), &s.classes).unwrap();
        let la = common::to_dense(sys.la());
        ensure(la == la.transpose(), || format!("mesh {k}: L^a not symmetric"))?;
        let pos: Vec<Option<usize>> = {
            let mut p = vec![None; s.mesh.num_vertices()];
            for (r, &v) in sys.free().iter().enumerate() {
                p[v] = Some(r);
            }
            p
        };
        let angle_sum = s.mesh.max_opposite_angle_sum();
        ensure(angle_sum <= std::f64::consts::PI + 1e-9, || format!("mesh {k}: opposite angles sum to {angle_sum}"))?;
        for e in s.mesh.edge_topology().iter().filter(|e| e.is_interior()) {
            if let (Some(i), Some(j)) = (pos[e.ends[0]], pos[e.ends[1]]) {
                ensure(la[(i, j)] <= 0.0, || format!("mesh {k}: L^a[{i},{j}] = {}", la[(i, j)]))?;
            }
        }
        let report = verify_m_matrix(&sys);
        ensure(report.is_stieltjes(), || format!("mesh {k}: {report:?}"))?;
        ensure(is_positive_definite(sys.la()), || format!("mesh {k}: sparse LDL rejected L^a"))?;
        ensure(la.clone().cholesky().is_some(), || format!("mesh {k}: dense Cholesky rejected L^a"))?;
        passed += 1;
    }
    Ok(format!("{passed}/{} meshes Stieltjes", meshes.len()))
}

fn oracle_equivalence() -> Outcome {
    let cases: [(f64, f64, f64, bool, bool, f64); 6] = [
        (60.0, 40.0, 8.0, false, false, 0.7),
        (60.0, 40.0, 8.0, true, false, 0.75),
        (50.0, 50.0, 9.0, true, true, 1.3),
        (70.0, 30.0, 7.0, false, true, 0.5),
        (40.0, 40.0, 6.0, true, false, 0.9),
        (64.0, 48.0, 9.0, true, true, 0.6),
    ];
    let mut worst = 0.0f64;
    for (k, &(a, b, h, roi, line, w)) in cases.iter().enumerate() {
        let masks = if roi { vec![Mask::rect(a as usize, b as usize, (a * 0.4) as usize, (b * 0.4) as usize, (a * 0.6) as usize, (b * 0.6) as usize)] } else { Vec::new() };
        let lines = if line { vec![Polyline::new(vec![Point::new(0.15 * a, 0.15 * b), Point::new(0.85 * a, 0.2 * b)])] } else { Vec::new() };
        let mesh = build_mesh(a, b, &MeshParams::new(h).with_seed(k as u64), &masks, &lines).unwrap();
        let classes = classify_vertices(&mesh, &masks, &lines).unwrap();
        ensure(classes.num_free() <= 60, || format!("case {k}: {} free vertices", classes.num_free()))?;
        let mut c = ConstraintSet::identity(classes.num_rois(), classes.num_lines(), w);
        c.r_o = 0.8;
        for t in &mut c.t_o {
            *t = [w * a * 0.5 - 0.8 * a * 0.5, 0.1 * b];
        }
        for l in &mut c.lines {
            l.scale = [w * 0.9, 1.1];
            l.shift = [1.0, -0.05 * b];
        }
        let targets = apply_constraints(&mesh, &classes, &c, w).unwrap();
        let sys = assemble(&mesh, &grad_coeffs(&mesh).unwrap(), &classes).unwrap();
        let map = solve_minimizer(&sys, &targets).unwrap();

        let kmat = common::stiffness_by_polarization(&mesh);
        let free = classes.free_flags();
        for axis in 0..2 {
            let fixed: Vec<f64> = targets.iter().map(|t| t.map_or(0.0, |p| p[axis])).collect();
            let oracle = common::dense_minimize(&kmat, &free, &fixed);
            let err = map.positions.iter().zip(&oracle).map(|(p, o)| (p[axis] - o).abs()).fold(0.0, f64::max);
            ensure(err <= 1e-8, || format!("case {k} axis {axis}: ‖Δ‖∞ = {err:e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(format!("{} systems, ‖Δ‖∞ ≤ {worst:.2e}", cases.len()))
}

fn closed_form_energy() -> Outcome {
    let mut worst = 0.0f64;
    for seed in [1u64, 2, 3] {
        let mesh = build_mesh(1.0, 1.0, &MeshParams::new(0.1).with_seed(seed), &[], &[]).unwrap();
        let coeffs = grad_coeffs(&mesh).unwrap();
        for w in [0.5, 0.75, 1.0, 1.5] {
            let map: Vec<Point> = mesh.vertices().iter().map(|p| Point::new(w * p.x, p.y)).collect();
            let e = discrete_energy(&mesh, &coeffs, &map, w).unwrap().conformal;
            let expected = 0.5 * (1.0 - w) * (1.0 - w);
            let err = (e - expected).abs();
            ensure(err <= 1e-9, || format!("seed {seed} w={w}: E^C = {e}, expected {expected}"))?;
            worst = worst.max(err);
        }
        for theta in [0.0, 0.3, 1.0, 2.5, -0.7] {
            let (s, c) = f64::sin_cos(theta);
            let map: Vec<Point> = mesh.vertices().iter().map(|p| Point::new(c * p.x - s * p.y + 3.0, s * p.x + c * p.y - 1.0)).collect();
            let e = discrete_energy(&mesh, &coeffs, &map, 1.0).unwrap().conformal;
            ensure(e.abs() <= 1e-9, || format!("seed {seed} rotation {theta}: E^C = {e}"))?;
            worst = worst.max(e.abs());
        }
    }
    Ok(format!("max error {worst:.2e}"))
}

fn stationarity() -> Outcome {
    let mesh = build_mesh(30.0, 20.0, &MeshParams::new(3.5), &[], &[]).unwrap();
    let coeffs = grad_coeffs(&mesh).unwrap();
    let l = laplacian_matrix(&mesh, &coeffs);
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut worst = 0.0f64;
    let mut maps = 0;
    while maps < 50 {
        let w = rng.random_range(0.4..1.6);
        let amp = rng.random_range(0.1..1.0);
        let map: Vec<Point> = mesh
            .vertices()
            .iter()
            .map(|p| Point::new(w * p.x + amp * rng.random_range(-1.0..1.0), p.y + amp * rng.random_range(-1.0..1.0)))
            .collect();
        if !(SimplicialMap { positions: map.clone() }).is_orientation_preserving(&mesh, &coeffs) {
            continue;
        }
        maps += 1;
        let target = w * 600.0;
        let grad = energy_gradient(&l, &map);
        let step = 1e-6 * 30.0;
        let mut fd = vec![Vec2::zeros(); map.len()];
        let mut probe = map.clone();
        for v in 0..map.len() {
            for axis in 0..2 {
                probe[v][axis] = map[v][axis] + step;
                let up = discrete_energy(&mesh, &coeffs, &probe, target).unwrap().conformal;
                probe[v][axis] = map[v][axis] - step;
                let down = discrete_energy(&mesh, &coeffs, &probe, target).unwrap().conformal;
                probe[v][axis] = map[v][axis];
                fd[v][axis] = (up - down) / (2.0 * step);
            }
        }
        let scale = grad.iter().map(|g| g.amax()).fold(0.0, f64::max);
        let err = grad.iter().zip(&fd).map(|(g, f)| (g - f).amax()).fold(0.0, f64::max) / scale;
        ensure(err <= 1e-4, || format!("map {maps}: relative error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("50 maps, max relative error {worst:.2e}"))
}

fn bijection_correction() -> Outcome {
    let specs: [(f64, f64, f64, f64, f64, f64, bool); 12] = [
        (100.0, 60.0, 12.0, 0.3, 0.7, 0.6, false),
        (100.0, 60.0, 12.0, 0.25, 0.6, 0.5, false),
        (100.0, 60.0, 14.0, 0.2, 0.5, 0.5, false),
        (80.0, 80.0, 12.0, 0.3, 0.6, 0.6, false),
        (120.0, 60.0, 14.0, 0.3, 0.5, 0.4, false),
        (90.0, 50.0, 10.0, 0.25, 0.55, 0.5, true),
        (100.0, 70.0, 13.0, 0.2, 0.7, 0.5, false),
        (70.0, 50.0, 10.0, 0.3, 0.6, 0.5, true),
        (110.0, 60.0, 12.0, 0.15, 0.4, 0.5, false),
        (100.0, 60.0, 11.0, 0.3, 0.8, 0.6, false),
        (60.0, 60.0, 10.0, 0.3, 0.6, 0.6, false),
        (100.0, 50.0, 12.0, 0.25, 0.65, 0.5, true),
    ];
    let mut max_iter_ratio = String::new();
    for (k, &(a, b, h, w, fw, fh, line)) in specs.iter().enumerate() {
        let (ai, bi) = (a as usize, b as usize);
        let (mw, mh) = ((fw * a) as usize, (fh * b) as usize);
        let x0 = (ai - mw) / 2;
        let y0 = if line { (bi - mh) / 2 + 4 } else { (bi - mh) / 2 };
        let mask = Mask::rect(ai, bi, x0, y0, x0 + mw, y0 + mh);
        let lines = if line { vec![Polyline::new(vec![Point::new(0.1 * a, 3.0), Point::new(0.9 * a, 3.0)])] } else { Vec::new() };
        let mut c = ConstraintSet::identity(1, lines.len(), w);
        c.t_o[0] = [0.5 * w * a - 0.5 * a, 0.0];
        let spec = RetargetSpec { edge_length: h, seed: k as u64, ..RetargetSpec::with_ratio(w) };
        let out = retarget(&spec, a, b, &[mask], &lines, Some(c)).map_err(|e| format!("spec {k}: {e}"))?;
        let d = &out.diagnostics;
        ensure(out.mesh.num_triangles() <= 500, || format!("spec {k}: {} triangles", out.mesh.num_triangles()))?;
        ensure(d.flipped_initial > 0, || format!("spec {k}: initial map has no flips"))?;
        ensure(check_orientation(&out.mesh, &out.coeffs, &out.map).is_empty(), || format!("spec {k}: flips remain"))?;
        ensure(d.correction_iterations <= d.n_c_bound, || {
            format!("spec {k}: {} iterations > n_c {}", d.correction_iterations, d.n_c_bound)
        })?;
        let overlap = common::max_image_overlap(&out.mesh, &out.map.positions);
        ensure(overlap <= 1e-9 * w * a * b, || format!("spec {k}: image triangles overlap by {overlap:e}"))?;
        max_iter_ratio.push_str(&format!(" {}/{}", d.correction_iterations, d.n_c_bound));
    }
    Ok(format!("{} specs repaired, iterations/n_c:{max_iter_ratio}", specs.len()))
}

fn smooth_map(p: &Point, w: f64) -> (Point, [[f64; 2]; 2]) {
    use std::f64::consts::PI;
    let eps = 0.05;
    let (sx, cx) = (PI * p.x).sin_cos();
    let (sy, cy) = (PI * p.y).sin_cos();
    let (s2x, c2x) = (2.0 * PI * p.x).sin_cos();
    let u = w * p.x + eps * sx * sy;
    let v = p.y + eps * s2x * sy;
    let jac = [[w + eps * PI * cx * sy, eps * PI * sx * cy], [eps * 2.0 * PI * c2x * sy, 1.0 + eps * PI * s2x * cy]];
    (Point::new(u, v), jac)
}

fn subdivision_convergence() -> Outcome {
    let w = 0.8;
    let gl = common::gauss_legendre(40);
    let mut dirichlet = 0.0;
    for &(x, wx) in &gl {
        for &(y, wy) in &gl {
            let (_, j) = smooth_map(&Point::new(x, y), w);
            dirichlet += wx * wy * 0.5 * (j[0][0].powi(2) + j[0][1].powi(2) + j[1][0].powi(2) + j[1][1].powi(2));
        }
    }
    let exact = dirichlet - w;
    let mut mesh = build_mesh(1.0, 1.0, &MeshParams::new(0.25), &[], &[]).unwrap();
    let mut errors = Vec::new();
    let mut diameters = Vec::new();
    for _ in 0..=3 {
        let coeffs = grad_coeffs(&mesh).unwrap();
        let map: Vec<Point> = mesh.vertices().iter().map(|p| smooth_map(p, w).0).collect();
        errors.push((discrete_energy(&mesh, &coeffs, &map, w).unwrap().conformal - exact).abs());
        diameters.push(mesh_diameter(&mesh));
        mesh = corner_chop(&mesh);
    }
    ensure(errors.windows(2).all(|e| e[1] < e[0]), || format!("errors not decreasing: {errors:?}"))?;
    for k in 1..diameters.len() {
        let d = (diameters[k] - 0.5 * diameters[k - 1]).abs();
        ensure(d <= 1e-12, || format!("level {k}: diameter {} vs half of {}", diameters[k], diameters[k - 1]))?;
    }
    Ok(format!("|E_k − E| = {}", errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")))
}

fn end_to_end() -> Outcome {
    let src = common::texture(96, 64, 3).quantized();
    let spec = RetargetSpec { edge_length: 8.0, ..RetargetSpec::with_ratio(1.0) };
    let same = retarget_image(&src, &spec, &[], &[], None).map_err(|e| e.to_string())?;
    let diff = same.image.quantized().max_abs_diff(&src);
    ensure(diff <= 1.0 / 255.0 + 1e-6, || format!("ratio 1: max diff {diff}"))?;

    let (x0, y0, x1, y1) = (36usize, 22usize, 60usize, 42usize);
    let mask = Mask::rect(96, 64, x0, y0, x1, y1);
    let spec = RetargetSpec { edge_length: 8.0, ..RetargetSpec::with_ratio(0.75) };
    let res = retarget_image(&src, &spec, &[mask], &[], None).map_err(|e| e.to_string())?;
    ensure(res.image.width() == 72, || format!("output width {}", res.image.width()))?;
    let r = res.result.constraints.r_o;
    let t = res.result.constraints.t_o[0];
    let out = res.image.quantized();
    let wa = 0.75 * 96.0;
    let (mut sum, mut count) = (0.0f64, 0usize);
    let mut oracle = [0.0f32; 4];
    for y in 0..out.height() {
        for x in 0..out.width() {
            let p = Point::new((x as f64 + 0.5) * wa / out.width() as f64, y as f64 + 0.5);
            let q = Point::new((p.x - t[0]) / r, (p.y - t[1]) / r);
            let inside = q.x >= x0 as f64 + 1.0 && q.x <= x1 as f64 - 1.0 && q.y >= y0 as f64 + 1.0 && q.y <= y1 as f64 - 1.0;
            if !inside {
                continue;
            }
            src.sample_bilinear(q.x - 0.5, q.y - 0.5, &mut oracle);
            for c in 0..3 {
                sum += (out.get(x, y, c) - oracle[c]).abs() as f64;
                count += 1;
            }
        }
    }
    ensure(count > 0, || "no ROI pixels in output".into())?;
    let mean = sum / count as f64;
    ensure(mean <= 2.0 / 255.0, || format!("ratio 0.75: ROI mean abs diff {mean:.5} (r_O = {r:.4})"))?;
    Ok(format!("ratio 1 max diff {:.5}; ratio 0.75 ROI mean diff {mean:.5} over {} px, r_O = {r:.4}", diff, count / 3))
}

fn saliency_rule() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let sizes = [(40usize, 30usize), (64, 64), (17, 23), (100, 10), (55, 41)];
    for (k, &(w, h)) in sizes.iter().enumerate() {
        let n = w * h;
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let scores: Vec<f32> = if k % 2 == 0 {
            order.iter().map(|&i| i as f32 / n as f32).collect()
        } else {
            // radial blob: rank by distance to the centre, ties broken by the permutation
            let dist = |i: usize| ((i % w) as f64 - w as f64 / 2.0).hypot((i / w) as f64 - h as f64 / 2.0);
            let mut by_dist: Vec<usize> = (0..n).collect();
            by_dist.sort_by(|&i, &j| dist(j).total_cmp(&dist(i)).then(order[i].cmp(&order[j])));
            let mut s = vec![0.0f32; n];
            for (rank, &i) in by_dist.iter().enumerate() {
                s[i] = rank as f32 / n as f32;
            }
            s
        };
        let mut sorted: Vec<(f32, usize)> = scores.iter().copied().zip(0..).collect();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let distinct = sorted.windows(2).all(|p| p[0].0 != p[1].0);
        ensure(distinct, || format!("raster {k}: scores not distinct"))?;
        let top = n / 4;
        let mut expected = vec![false; n];
        for &(_, i) in &sorted[..top] {
            expected[i] = true;
        }
        let sal = SaliencyMap::from_scores(w, h, scores);
        let got = top_fraction_mask(&sal, 0.25).map_err(|e| e.to_string())?;
        ensure(got.data() == expected.as_slice(), || format!("raster {k}: selection differs from top quartile"))?;
        let closed = close(&Mask::from_vec(w, h, expected));
        match threshold_rois(&sal, 0.25) {
            Ok(masks) => {
                for m in &masks {
                    ensure((0..n).all(|i| !m.data()[i] || closed.data()[i]), || format!("raster {k}: ROI outside closed selection"))?;
                }
            }
            Err(RoiError::NoComponents) => {}
            Err(e) => return Err(format!("raster {k}: {e}")),
        }
    }
    Ok(format!("{} rasters, exact top-quartile selection", sizes.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("cotangent equivalence", cotangent_equivalence),
        ("stieltjes property", stieltjes),
        ("oracle equivalence", oracle_equivalence),
        ("closed-form energy", closed_form_energy),
        ("stationarity", stationarity),
        ("bijection correction", bijection_correction),
        ("subdivision convergence", subdivision_convergence),
        ("end-to-end", end_to_end),
        ("saliency rule", saliency_rule),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
