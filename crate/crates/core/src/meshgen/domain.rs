use crate::error::{Error, Result};
use crate::mesh::geometry::{self, dist_to_boundary, point_in_polygon, signed_area};
use crate::mesh::{pt, Point, PointLocation};

/// Polygonal problem domain: a CCW outer boundary, optional CW holes and the
/// list of points that must appear as mesh nodes (polygon corners plus any
/// point where boundary data changes).
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub outer: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
    pub corner_points: Vec<Point>,
    /// Convex pieces with pairwise disjoint interiors whose union is the
    /// domain. Neighbouring pieces share whole edges.
    pieces: Vec<Vec<Point>>,
}

impl Domain {
    /// Builds a domain from its boundary. Orientation is normalised (outer
    /// CCW, holes CW). Non-convex domains must be axis-aligned.
    pub fn polygonal(mut outer: Vec<Point>, mut holes: Vec<Vec<Point>>, extra: Vec<Point>) -> Result<Self> {
        if signed_area(&outer) < 0.0 {
            outer.reverse();
        }
        for h in &mut holes {
            if signed_area(h) > 0.0 {
                h.reverse();
            }
        }
        let mut corner_points: Vec<Point> = outer.clone();
        holes.iter().for_each(|h| corner_points.extend_from_slice(h));
        for p in extra {
            if !corner_points.iter().any(|q| (q - p).norm() < 1e-12) {
                corner_points.push(p);
            }
        }
        let mut d = Domain { outer, holes, corner_points, pieces: Vec::new() };
        let tol = d.geo_tol();
        for c in &d.corner_points {
            if d.sdf(c).abs() > tol {
                return Err(Error::DegenerateInput(format!(
                    "corner point ({}, {}) is not on the boundary",
                    c.x, c.y
                )));
            }
        }
        d.pieces = d.convex_decomposition()?;
        Ok(d)
    }

    pub fn rectangle(w: f64, h: f64, extra: Vec<Point>) -> Result<Self> {
        Self::polygonal(vec![pt(0., 0.), pt(w, 0.), pt(w, h), pt(0., h)], vec![], extra)
    }

    /// Square plate of side `w` with a centred square hole of side `hole`.
    pub fn plate_with_hole(w: f64, hole: f64, extra: Vec<Point>) -> Result<Self> {
        if !(hole > 0.0 && hole < w) {
            return Err(Error::DegenerateInput(format!("hole side {hole} not in (0, {w})")));
        }
        let a = 0.5 * (w - hole);
        let b = a + hole;
        Self::polygonal(
            vec![pt(0., 0.), pt(w, 0.), pt(w, w), pt(0., w)],
            vec![vec![pt(a, a), pt(a, b), pt(b, b), pt(b, a)]],
            extra,
        )
    }

    /// L-shape in the w×w square with limbs of thickness `t` along the
    /// bottom and left edges; re-entrant corner at (t, t).
    pub fn l_shape(w: f64, t: f64, extra: Vec<Point>) -> Result<Self> {
        Self::polygonal(
            vec![pt(0., 0.), pt(w, 0.), pt(w, t), pt(t, t), pt(t, w), pt(0., w)],
            vec![],
            extra,
        )
    }

    pub fn bbox(&self) -> (Point, Point) {
        geometry::bbox(&self.outer)
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }

    pub fn geo_tol(&self) -> f64 {
        geometry::GEO_REL_TOL * self.diameter()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.outer) + self.holes.iter().map(|h| signed_area(h)).sum::<f64>()
    }

    pub fn pieces(&self) -> &[Vec<Point>] {
        &self.pieces
    }

    fn boundary_loops(&self) -> impl Iterator<Item = &Vec<Point>> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    /// Signed distance to the boundary, negative inside.
    pub fn sdf(&self, p: &Point) -> f64 {
        let d = self
            .boundary_loops()
            .map(|l| dist_to_boundary(p, l))
            .fold(f64::INFINITY, f64::min);
        let inside = point_in_polygon(p, &self.outer, 0.0) == PointLocation::Inside
            && self
                .holes
                .iter()
                .all(|h| point_in_polygon(p, h, 0.0) == PointLocation::Outside);
        if inside {
            -d
        } else {
            d
        }
    }

    pub fn on_boundary(&self, p: &Point, tol: f64) -> bool {
        self.boundary_loops().any(|l| dist_to_boundary(p, l) <= tol)
    }

    pub fn is_corner_point(&self, p: &Point, tol: f64) -> bool {
        self.corner_points.iter().any(|c| (c - p).norm() <= tol)
    }

    /// Distinct x and y coordinates of the corner points, sorted.
    pub fn feature_coords(&self) -> (Vec<f64>, Vec<f64>) {
        let mut xs: Vec<f64> = self.corner_points.iter().map(|p| p.x).collect();
        let mut ys: Vec<f64> = self.corner_points.iter().map(|p| p.y).collect();
        for v in [&mut xs, &mut ys] {
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        }
        (xs, ys)
    }

    fn is_convex(&self) -> bool {
        let n = self.outer.len();
        self.holes.is_empty()
            && (0..n).all(|i| {
                geometry::orient(&self.outer[i], &self.outer[(i + 1) % n], &self.outer[(i + 2) % n])
                    >= 0.0
            })
    }

    fn is_axis_aligned(&self) -> bool {
        self.boundary_loops().all(|l| {
            let n = l.len();
            (0..n).all(|i| {
                let d = l[(i + 1) % n] - l[i];
                d.x.abs() < 1e-14 || d.y.abs() < 1e-14
            })
        })
    }

    fn convex_decomposition(&self) -> Result<Vec<Vec<Point>>> {
        if self.is_convex() {
            return Ok(vec![self.outer.clone()]);
        }
        if !self.is_axis_aligned() {
            return Err(Error::DegenerateInput(
                "non-convex domains must be axis-aligned".into(),
            ));
        }
        let mut xs: Vec<f64> = self.boundary_loops().flatten().map(|p| p.x).collect();
        let mut ys: Vec<f64> = self.boundary_loops().flatten().map(|p| p.y).collect();
        for v in [&mut xs, &mut ys] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut pieces = Vec::new();
        for j in 0..ys.len() - 1 {
            for i in 0..xs.len() - 1 {
                let c = pt(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]));
                if self.sdf(&c) < 0.0 {
                    pieces.push(vec![
                        pt(xs[i], ys[j]),
                        pt(xs[i + 1], ys[j]),
                        pt(xs[i + 1], ys[j + 1]),
                        pt(xs[i], ys[j + 1]),
                    ]);
                }
            }
        }
        Ok(pieces)
    }
}
