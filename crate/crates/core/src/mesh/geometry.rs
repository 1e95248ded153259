//! Tolerance-based planar predicates and polygon utilities.

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Relative factor applied to a length scale (usually the domain diameter)
/// to obtain the absolute geometric tolerance used by on-boundary and
/// collinearity tests.
pub const GEO_REL_TOL: f64 = 1e-9;

#[inline]
pub fn pt(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

#[inline]
pub fn cross(a: &Point, b: &Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Twice the signed area of the triangle (o, a, b); positive when CCW.
#[inline]
pub fn orient(o: &Point, a: &Point, b: &Point) -> f64 {
    cross(&(a - o), &(b - o))
}

pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        s += cross(&poly[i], &poly[(i + 1) % n]);
    }
    0.5 * s
}

/// Shoelace area (positive for CCW input) and area-weighted centroid.
pub fn centroid_area(poly: &[Point]) -> Result<(Point, f64)> {
    if poly.len() < 3 {
        return Err(Error::DegeneratePolygon(0.0));
    }
    // shift to the first vertex for accuracy on small, far-away polygons
    let o = poly[0];
    let n = poly.len();
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = poly[i] - o;
        let q = poly[(i + 1) % n] - o;
        let c = cross(&p, &q);
        a2 += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    let area = 0.5 * a2;
    let scale = diameter(poly);
    if area.abs() <= 1e-14 * scale * scale || !area.is_finite() {
        return Err(Error::DegeneratePolygon(area));
    }
    Ok((o + Point::new(cx / (3.0 * a2), cy / (3.0 * a2)), area))
}

/// Largest pairwise vertex distance.
pub fn diameter(points: &[Point]) -> f64 {
    let mut d2: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d2 = d2.max((points[i] - points[j]).norm_squared());
        }
    }
    d2.sqrt()
}

pub fn bbox(points: &[Point]) -> (Point, Point) {
    let mut lo = Point::repeat(f64::INFINITY);
    let mut hi = Point::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

pub fn dist_point_segment(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_squared();
    if l2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / l2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from `p` to the closed boundary of `poly`.
pub fn dist_to_boundary(p: &Point, poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| dist_point_segment(p, &poly[i], &poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Closest point on the closed boundary of `poly`.
pub fn project_to_boundary(p: &Point, poly: &[Point]) -> Point {
    let n = poly.len();
    let mut best = poly[0];
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let a = poly[i];
        let ab = poly[(i + 1) % n] - a;
        let l2 = ab.norm_squared();
        let t = if l2 > 0.0 { ((p - a).dot(&ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
        let q = a + ab * t;
        let d = (p - q).norm();
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

/// `v` sits on the straight segment prev→next and the polygon passes
/// through it without turning back.
pub fn is_straight_through(prev: &Point, v: &Point, next: &Point, tol: f64) -> bool {
    let chord = next - prev;
    let len = chord.norm();
    if len <= tol {
        return false;
    }
    let off = cross(&chord, &(v - prev)).abs() / len;
    off <= tol && (v - prev).dot(&chord) > 0.0 && (next - v).dot(&chord) > 0.0
}

/// Convex hull in CCW order starting from the lexicographic minimum.
/// Points lying on hull edges are not reported as hull vertices.
pub fn convex_hull(points: &[Point]) -> Result<Vec<Point>> {
    Ok(convex_hull_indices(points)?.into_iter().map(|i| points[i]).collect())
}

/// Index form of [`convex_hull`].
pub fn convex_hull_indices(points: &[Point]) -> Result<Vec<usize>> {
    if points.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "convex hull of {} points",
            points.len()
        )));
    }
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        let (p, q) = (points[a], points[b]);
        p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y))
    });
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    let scale = {
        let (lo, hi) = bbox(points);
        (hi - lo).norm()
    };
    let eps = 1e-14 * scale * scale;

    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> =
            if pass == 0 { Box::new(idx.iter()) } else { Box::new(idx.iter().rev()) };
        for &i in iter {
            while hull.len() >= start + 2 {
                let a = points[hull[hull.len() - 2]];
                let b = points[hull[hull.len() - 1]];
                if orient(&a, &b, &points[i]) <= eps {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(i);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(Error::DegenerateInput("all points collinear".into()));
    }
    Ok(hull)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLocation {
    Inside,
    OnBoundary,
    Outside,
}

/// Classifies `p` against a simple polygon; anything within `tol` of an
/// edge is reported as on the boundary.
pub fn point_in_polygon(p: &Point, poly: &[Point], tol: f64) -> PointLocation {
    if dist_to_boundary(p, poly) <= tol {
        return PointLocation::OnBoundary;
    }
    let n = poly.len();
    let mut winding = 0i32;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if a.y <= p.y {
            if b.y > p.y && orient(&a, &b, p) > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && orient(&a, &b, p) < 0.0 {
            winding -= 1;
        }
    }
    if winding != 0 {
        PointLocation::Inside
    } else {
        PointLocation::Outside
    }
}

/// tan(θ/2) for the signed angle θ between `a` and `b`, choosing the
/// half-angle identity that avoids cancellation.
fn tan_half_angle(a: &Point, b: &Point) -> f64 {
    let s = cross(a, b);
    let c = a.dot(b);
    let r = a.norm() * b.norm();
    if c >= 0.0 {
        s / (r + c)
    } else {
        (r - c) / s
    }
}

/// Floater mean value coordinates of `p` with respect to the polygon
/// vertices. The weights sum to one and reproduce `p` linearly.
pub fn mean_value_coordinates(p: &Point, poly: &[Point], tol: f64) -> Result<Vec<f64>> {
    let n = poly.len();
    if n < 3 {
        return Err(Error::DegenerateInput("polygon with fewer than 3 vertices".into()));
    }
    let d: Vec<Point> = poly.iter().map(|v| v - p).collect();
    if let Some(i) = d.iter().position(|v| v.norm() <= tol) {
        return Err(Error::OnVertex(i));
    }
    if point_in_polygon(p, poly, 0.0) != PointLocation::Inside {
        return Err(Error::OutsidePolygon);
    }
    let t: Vec<f64> = (0..n).map(|i| tan_half_angle(&d[i], &d[(i + 1) % n])).collect();
    let mut w: Vec<f64> = (0..n)
        .map(|i| (t[(i + n - 1) % n] + t[i]) / d[i].norm())
        .collect();
    let sum: f64 = w.iter().sum();
    if !sum.is_finite() || sum == 0.0 {
        return Err(Error::DegenerateInput("mean value weights do not normalise".into()));
    }
    w.iter_mut().for_each(|x| *x /= sum);
    Ok(w)
}

fn segments_intersect(a: &Point, b: &Point, c: &Point, d: &Point, tol: f64) -> bool {
    // proper or touching intersection, with a tolerance band
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    dist_point_segment(a, c, d) <= tol
        || dist_point_segment(b, c, d) <= tol
        || dist_point_segment(c, a, b) <= tol
        || dist_point_segment(d, a, b) <= tol
}

/// True if the closed polygon has no repeated vertices, no spikes and no
/// crossing or touching non-adjacent edges.
pub fn is_simple_polygon(poly: &[Point], tol: f64) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if (poly[i] - poly[j]).norm() <= tol {
                return false;
            }
        }
    }
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        // adjacent edge folding back onto this one
        let c = poly[(i + 2) % n];
        if dist_point_segment(&c, &a, &b) <= tol || dist_point_segment(&a, &b, &c) <= tol {
            return false;
        }
        for k in 0..n {
            if k == i || k == (i + 1) % n || (k + 1) % n == i {
                continue;
            }
            let c = poly[k];
            let d = poly[(k + 1) % n];
            if segments_intersect(&a, &b, &c, &d, tol) {
                return false;
            }
        }
    }
    true
}

/// Sutherland-Hodgman clip of `poly` to the half-plane `normal·x <= offset`.
pub fn clip_halfplane(poly: &[Point], normal: &Point, offset: f64) -> Vec<Point> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let sp = normal.dot(&p) - offset;
        let sq = normal.dot(&q) - offset;
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push(p + (q - p) * t);
        }
    }
    out
}
