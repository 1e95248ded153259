use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::mesh::geometry::dist_point_segment;
use crate::mesh::Point;
use crate::meshgen::Domain;

/// In-plane constitutive assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlaneCondition {
    #[default]
    Strain,
    Stress,
}

/// Isotropic linear elastic material. `d` acts on Voigt strains
/// (ε_xx, ε_yy, γ_xy) with engineering shear γ_xy = 2ε_xy.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub e: f64,
    pub nu: f64,
    pub lambda: f64,
    pub mu: f64,
    pub plane: PlaneCondition,
    pub d: Matrix3<f64>,
}

impl Material {
    pub fn new(e: f64, nu: f64, plane: PlaneCondition) -> Result<Self> {
        if !(e > 0.0 && e.is_finite()) || !(nu > -1.0 && nu < 0.5) {
            return Err(Error::DegenerateInput(format!("material E = {e}, nu = {nu}")));
        }
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        // plane stress uses the reduced first Lamé parameter
        let l = match plane {
            PlaneCondition::Strain => lambda,
            PlaneCondition::Stress => 2.0 * lambda * mu / (lambda + 2.0 * mu),
        };
        #[rustfmt::skip]
        let d = Matrix3::new(
            l + 2.0 * mu, l, 0.0,
            l, l + 2.0 * mu, 0.0,
            0.0, 0.0, mu,
        );
        Ok(Material { e, nu, lambda, mu, plane, d })
    }

    pub fn d_inv(&self) -> Matrix3<f64> {
        self.d.try_inverse().expect("D is positive definite for nu < 0.5")
    }

    pub fn stress(&self, strain: &Vector3<f64>) -> Vector3<f64> {
        self.d * strain
    }
}

impl Default for Material {
    fn default() -> Self {
        Material::new(1.0, 0.3, PlaneCondition::Strain).unwrap()
    }
}

pub type VectorField = Arc<dyn Fn(&Point) -> Vector2<f64> + Send + Sync>;

pub fn constant_field(v: Vector2<f64>) -> VectorField {
    Arc::new(move |_| v)
}

/// Part of the boundary a condition applies to.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Segment(Point, Point),
    Point(Point),
    WholeBoundary,
}

impl Region {
    /// Whether a boundary node at `p` belongs to the region.
    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        match self {
            Region::Segment(a, b) => dist_point_segment(p, a, b) <= tol,
            Region::Point(q) => (p - q).norm() <= tol,
            Region::WholeBoundary => true,
        }
    }
}

/// Prescribed displacement on the components selected by `mask`.
#[derive(Clone)]
pub struct Dirichlet {
    pub region: Region,
    pub mask: [bool; 2],
    pub value: VectorField,
}

impl Dirichlet {
    pub fn fixed(region: Region, mask: [bool; 2]) -> Self {
        Dirichlet { region, mask, value: constant_field(Vector2::zeros()) }
    }

    pub fn constant(region: Region, mask: [bool; 2], v: Vector2<f64>) -> Self {
        Dirichlet { region, mask, value: constant_field(v) }
    }

    pub fn field(region: Region, mask: [bool; 2], value: VectorField) -> Self {
        Dirichlet { region, mask, value }
    }
}

/// Prescribed traction, force per unit length.
#[derive(Clone)]
pub struct Neumann {
    pub region: Region,
    pub traction: VectorField,
}

impl Neumann {
    pub fn uniform(region: Region, t: Vector2<f64>) -> Self {
        Neumann { region, traction: constant_field(t) }
    }
}

#[derive(Clone)]
pub struct BvpSpec {
    pub domain: Domain,
    pub dirichlet: Vec<Dirichlet>,
    pub neumann: Vec<Neumann>,
    pub body_force: Option<VectorField>,
}

impl BvpSpec {
    pub fn new(domain: Domain) -> Self {
        BvpSpec { domain, dirichlet: Vec::new(), neumann: Vec::new(), body_force: None }
    }

    pub fn with_dirichlet(mut self, d: Dirichlet) -> Self {
        self.dirichlet.push(d);
        self
    }

    pub fn with_neumann(mut self, n: Neumann) -> Self {
        self.neumann.push(n);
        self
    }

    pub fn with_body_force(mut self, b: VectorField) -> Self {
        self.body_force = Some(b);
        self
    }

    /// Dirichlet data on the whole boundary taken from a single field.
    pub fn fully_clamped(domain: Domain, g: VectorField) -> Self {
        BvpSpec::new(domain).with_dirichlet(Dirichlet::field(Region::WholeBoundary, [true, true], g))
    }
}

impl fmt::Debug for Dirichlet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dirichlet").field("region", &self.region).field("mask", &self.mask).finish()
    }
}

impl fmt::Debug for Neumann {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Neumann").field("region", &self.region).finish()
    }
}

impl fmt::Debug for BvpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BvpSpec")
            .field("dirichlet", &self.dirichlet)
            .field("neumann", &self.neumann)
            .field("body_force", &self.body_force.is_some())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lame_parameters() {
        let m = Material::default();
        assert_eq!(m.mu, 1.0 / 2.6);
        assert!((m.lambda - 0.3 / (1.3 * 0.4)).abs() < 1e-15);
        assert_eq!(m.d[(0, 0)], m.lambda + 2.0 * m.mu);
        assert!(m.d.cholesky().is_some());
    }

    #[test]
    fn plane_stress_matrix() {
        let m = Material::new(2.0, 0.25, PlaneCondition::Stress).unwrap();
        let c = 2.0 / (1.0 - 0.0625);
        assert!((m.d[(0, 0)] - c).abs() < 1e-14);
        assert!((m.d[(0, 1)] - c * 0.25).abs() < 1e-14);
        assert!((m.d[(2, 2)] - c * 0.375).abs() < 1e-14);
    }

    #[test]
    fn rejects_incompressible() {
        assert!(Material::new(1.0, 0.5, PlaneCondition::Strain).is_err());
        assert!(Material::new(0.0, 0.3, PlaneCondition::Strain).is_err());
    }
}
