//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use retarget_core::geometry::Point;
use retarget_core::mesh::SimplicialMesh;

/// Dense Laplacian from interior angles: `L_ij = -½(cot α + cot β)`, diagonal = minus row sum.
pub fn dense_cotangent(mesh: &SimplicialMesh) -> DMatrix<f64> {
    let n = mesh.num_vertices();
    let mut l = DMatrix::zeros(n, n);
    for tri in mesh.triangles() {
        for k in 0..3 {
            let (i, j, o) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let p = mesh.vertices();
            let (a, b) = (p[i] - p[o], p[j] - p[o]);
            let angle = (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos();
            let w = 0.5 / angle.tan();
            l[(i, j)] -= w;
            l[(j, i)] -= w;
            l[(i, i)] += w;
            l[(j, j)] += w;
        }
    }
    l
}

pub fn to_dense(m: &sprs::CsMat<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.rows(), m.cols());
    for (v, (i, j)) in m.iter() {
        d[(i, j)] += *v;
    }
    d
}

/// Gradient of the piecewise-linear interpolant of scalar values on one triangle.
pub fn pl_gradient(p: [Point; 3], f: [f64; 3]) -> [f64; 2] {
    let m = nalgebra::Matrix2::new(p[1].x - p[0].x, p[1].y - p[0].y, p[2].x - p[0].x, p[2].y - p[0].y);
    let rhs = nalgebra::Vector2::new(f[1] - f[0], f[2] - f[0]);
    let g = m.lu().solve(&rhs).expect("non-degenerate triangle");
    [g.x, g.y]
}

/// `½ Σ area |∇u|²` for one scalar field, computed triangle by triangle.
pub fn dirichlet_scalar(mesh: &SimplicialMesh, u: &[f64]) -> f64 {
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let g = pl_gradient(mesh.triangle_points(t), tri.map(|v| u[v]));
            0.5 * mesh.triangle_area(t) * (g[0] * g[0] + g[1] * g[1])
        })
        .sum()
}

/// Dense stiffness matrix recovered from the energy by polarization on basis vectors.
pub fn stiffness_by_polarization(mesh: &SimplicialMesh) -> DMatrix<f64> {
    let n = mesh.num_vertices();
    let mut k = DMatrix::zeros(n, n);
    let nbrs = mesh.vertex_neighbors();
    let mut e = vec![0.0; n];
    let mut diag = vec![0.0; n];
    for i in 0..n {
        e[i] = 1.0;
        diag[i] = 2.0 * dirichlet_scalar(mesh, &e);
        e[i] = 0.0;
    }
    for i in 0..n {
        k[(i, i)] = diag[i];
        for &j in &nbrs[i] {
            if j > i {
                e[i] = 1.0;
                e[j] = 1.0;
                let both = 2.0 * dirichlet_scalar(mesh, &e);
                e[i] = 0.0;
                e[j] = 0.0;
                let off = 0.5 * (both - diag[i] - diag[j]);
                k[(i, j)] = off;
                k[(j, i)] = off;
            }
        }
    }
    k
}

/// Minimizes `½ xᵀ K x` over the free entries with the rest fixed, by dense LU.
pub fn dense_minimize(k: &DMatrix<f64>, free: &[bool], fixed_values: &[f64]) -> Vec<f64> {
    let n = k.nrows();
    let fi: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
    let xi: Vec<usize> = (0..n).filter(|&i| !free[i]).collect();
    let kaa = DMatrix::from_fn(fi.len(), fi.len(), |r, c| k[(fi[r], fi[c])]);
    let rhs = DVector::from_fn(fi.len(), |r, _| -xi.iter().map(|&j| k[(fi[r], j)] * fixed_values[j]).sum::<f64>());
    let sol = kaa.lu().solve(&rhs).expect("free block is nonsingular");
    let mut out = fixed_values.to_vec();
    for (r, &i) in fi.iter().enumerate() {
        out[i] = sol[r];
    }
    out
}

fn clip(poly: &[Point], a: Point, b: Point) -> Vec<Point> {
    let side = |p: &Point| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sp, sq) = (side(&p), side(&q));
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp >= 0.0) != (sq >= 0.0) {
            let t = sp / (sp - sq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

fn polygon_area(poly: &[Point]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

/// Area of the intersection of two CCW triangles (Sutherland–Hodgman).
pub fn triangle_overlap(s: [Point; 3], c: [Point; 3]) -> f64 {
    let mut poly = s.to_vec();
    for k in 0..3 {
        if poly.is_empty() {
            return 0.0;
        }
        poly = clip(&poly, c[k], c[(k + 1) % 3]);
    }
    if poly.len() < 3 {
        0.0
    } else {
        polygon_area(&poly).abs()
    }
}

/// Largest pairwise overlap area between image triangles, brute force.
pub fn max_image_overlap(mesh: &SimplicialMesh, map: &[Point]) -> f64 {
    let tris: Vec<[Point; 3]> = mesh.triangles().iter().map(|t| t.map(|v| map[v])).collect();
    let mut worst = 0.0f64;
    for i in 0..tris.len() {
        for j in i + 1..tris.len() {
            worst = worst.max(triangle_overlap(tris[i], tris[j]));
        }
    }
    worst
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

/// Deterministic texture with detail at several scales, values in `[0, 1]`.
pub fn texture(w: usize, h: usize, channels: usize) -> retarget_core::Raster {
    retarget_core::Raster::from_fn(w, h, channels, |x, y, c| {
        let (x, y) = (x as f32, y as f32);
        let v = 0.5
            + 0.25 * (0.21 * x + 0.13 * y + c as f32).sin()
            + 0.15 * (0.05 * x * (1.0 + c as f32 * 0.3)).cos() * (0.07 * y).sin()
            + 0.1 * ((0.9 * x).sin() * (0.8 * y).cos());
        v.clamp(0.0, 1.0)
    })
}
