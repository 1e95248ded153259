#![allow(dead_code)]

use nalgebra::{Matrix2, Vector2};
use polyvem::coarsening::same_outline;
use polyvem::indicators::AnalyticField;
use polyvem::mesh::{pt, Element, Node, Point, PolyMesh};
use rand::Rng;

/// Star-shaped polygon with `n` vertices at increasing angles and random radii.
pub fn random_star(rng: &mut impl Rng, n: usize, centre: Point, scale: f64) -> Vec<Point> {
    let mut ang: Vec<f64> = (0..n)
        .map(|k| (k as f64 + rng.random_range(0.1..0.9)) * std::f64::consts::TAU / n as f64)
        .collect();
    ang.sort_by(f64::total_cmp);
    ang.iter()
        .map(|a| {
            let r = scale * rng.random_range(0.4..1.0);
            pt(centre.x + r * a.cos(), centre.y + r * a.sin())
        })
        .collect()
}

pub fn single_element(poly: &[Point]) -> PolyMesh {
    let nodes = poly.iter().map(|p| Node::interior(*p)).collect();
    PolyMesh::new(nodes, vec![Element::new((0..poly.len()).collect())]).unwrap()
}

pub fn linear_u(p: &Point) -> Vector2<f64> {
    Vector2::new(0.3 + 0.1 * p.x - 0.2 * p.y, -0.1 + 0.05 * p.x + 0.4 * p.y)
}

pub fn linear_grad(_: &Point) -> Matrix2<f64> {
    Matrix2::new(0.1, -0.2, 0.05, 0.4)
}

pub fn linear_field() -> AnalyticField<fn(&Point) -> Vector2<f64>, fn(&Point) -> Matrix2<f64>> {
    AnalyticField { u: linear_u, grad: linear_grad }
}

pub fn zero_field() -> AnalyticField<fn(&Point) -> Vector2<f64>, fn(&Point) -> Matrix2<f64>> {
    AnalyticField { u: |_| Vector2::zeros(), grad: |_| Matrix2::zeros() }
}

/// Geometry invariants a coarsened mesh must keep relative to the initial
/// mesh. Returns a description of the first violation.
pub fn check_preserved(initial: &PolyMesh, mesh: &PolyMesh, area_rtol: f64) -> Result<(), String> {
    mesh.validate().map_err(|e| e.to_string())?;
    let (a0, a1) = (initial.total_area(), mesh.total_area());
    if ((a1 - a0) / a0).abs() > area_rtol {
        return Err(format!("area drifted from {a0} to {a1}"));
    }
    let tol = initial.geo_tol();
    if !same_outline(&initial.boundary_outline(tol), &mesh.boundary_outline(tol), tol) {
        return Err("boundary outline changed".into());
    }
    Ok(())
}
