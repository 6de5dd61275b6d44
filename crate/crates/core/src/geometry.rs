//! Small planar predicates shared by the mesh, solver and warp code.

use nalgebra::{Point2, Vector2};

pub type Point = Point2<f64>;
pub type Vec2 = Vector2<f64>;

/// Twice the signed area of `(a, b, c)`; positive when counter-clockwise.
#[inline]
pub fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[inline]
pub fn signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * orient(a, b, c)
}

/// Positive when `d` lies strictly inside the circumcircle of the CCW triangle `(a, b, c)`.
pub fn incircle(a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Barycentric coordinates of `p` with respect to `(a, b, c)`. Not clamped.
pub fn barycentric(p: &Point, a: &Point, b: &Point, c: &Point) -> [f64; 3] {
    let det = orient(a, b, c);
    let la = orient(p, b, c) / det;
    let lb = orient(a, p, c) / det;
    [la, lb, 1.0 - la - lb]
}

pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// True when the open segments `(a, b)` and `(c, d)` cross at a single interior point.
pub fn segments_cross(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// True when the closed segment `(a, b)` touches the closed axis-aligned box.
pub fn segment_touches_box(a: &Point, b: &Point, min: &Point, max: &Point) -> bool {
    // Liang-Barsky clip of the parametric segment against the box.
    let d = b - a;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for (p, q) in [
        (-d.x, a.x - min.x),
        (d.x, max.x - a.x),
        (-d.y, a.y - min.y),
        (d.y, max.y - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// True when the triangle and the box share a region of positive area.
///
/// Separating-axis test over the two box axes and the three triangle edge
/// normals; touching along an edge or at a corner does not count.
pub fn triangle_overlaps_box(tri: [&Point; 3], min: &Point, max: &Point) -> bool {
    let scale = (max.x - min.x).max(max.y - min.y);
    let eps = 1e-12 * scale.max(1.0);
    let (txmin, txmax) = tri.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
    let (tymin, tymax) = tri.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    if txmax <= min.x + eps || txmin >= max.x - eps || tymax <= min.y + eps || tymin >= max.y - eps {
        return false;
    }
    let corners = [
        Point::new(min.x, min.y),
        Point::new(max.x, min.y),
        Point::new(max.x, max.y),
        Point::new(min.x, max.y),
    ];
    for k in 0..3 {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        let c = tri[(k + 2) % 3];
        let edge = b - a;
        let normal = Vec2::new(edge.y, -edge.x);
        let len = normal.norm();
        if len == 0.0 {
            return false;
        }
        let normal = normal / len;
        let tri_proj = [(a - a).dot(&normal), (c - a).dot(&normal)];
        let (tlo, thi) = (tri_proj[0].min(tri_proj[1]), tri_proj[0].max(tri_proj[1]));
        let (blo, bhi) = corners.iter().fold((f64::MAX, f64::MIN), |(lo, hi), q| {
            let s = (q - a).dot(&normal);
            (lo.min(s), hi.max(s))
        });
        if thi <= blo + eps || bhi <= tlo + eps {
            return false;
        }
    }
    true
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    (b - a).norm()
}
