//! First-order virtual element method for plane linear elasticity.
//!
//! Nodal unknowns are interleaved, `[u_x0, u_y0, u_x1, u_y1, …]`. Strains and
//! stresses use Voigt order (xx, yy, xy) with engineering shear strain.

mod bvp;

pub use bvp::{
    constant_field, BvpSpec, Dirichlet, Material, Neumann, PlaneCondition, Region, VectorField,
};

use nalgebra::{DMatrix, Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::mesh::geometry::{self, Point};
use crate::mesh::PolyMesh;
use crate::parallel::Execution;
use crate::sparse::{CscMatrix, TripletMatrix};

/// Per-element quantities shared by the projection and stiffness.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub area: f64,
    pub centroid: Point,
    pub diameter: f64,
    /// q_A = (1/|E|) ∫_∂E N_A n ds, so that the mean gradient of a nodal
    /// field is Σ_A u_A ⊗ q_A.
    pub q: Vec<Vector2<f64>>,
}

impl ElementGeometry {
    pub fn new(mesh: &PolyMesh, e: usize) -> Result<Self> {
        let poly = mesh.polygon(e);
        let (centroid, area) =
            geometry::centroid_area(&poly).map_err(|_| Error::DegenerateElement(e))?;
        let tol = mesh.geo_tol();
        if !(area >= tol * tol) {
            return Err(Error::DegenerateElement(e));
        }
        let n = poly.len();
        let q = (0..n)
            .map(|a| {
                let next = poly[(a + 1) % n];
                let prev = poly[(a + n - 1) % n];
                Vector2::new(next.y - prev.y, prev.x - next.x) * (0.5 / area)
            })
            .collect();
        Ok(ElementGeometry { area, centroid, diameter: geometry::diameter(&poly), q })
    }

    /// Mean displacement gradient, entry (i, j) = ∂u_i/∂x_j.
    pub fn mean_gradient(&self, d: &[Vector2<f64>]) -> Matrix2<f64> {
        self.q.iter().zip(d).fold(Matrix2::zeros(), |g, (q, u)| g + u * q.transpose())
    }
}

pub fn voigt_strain(g: &Matrix2<f64>) -> Vector3<f64> {
    Vector3::new(g[(0, 0)], g[(1, 1)], g[(0, 1)] + g[(1, 0)])
}

/// 3 × 2n matrix mapping element dofs to the projected Voigt strain.
pub fn projection_matrix(mesh: &PolyMesh, e: usize) -> Result<DMatrix<f64>> {
    Ok(projection_from(&ElementGeometry::new(mesh, e)?))
}

fn projection_from(g: &ElementGeometry) -> DMatrix<f64> {
    let n = g.q.len();
    let mut p = DMatrix::zeros(3, 2 * n);
    for (a, q) in g.q.iter().enumerate() {
        p[(0, 2 * a)] = q.x;
        p[(1, 2 * a + 1)] = q.y;
        p[(2, 2 * a)] = q.y;
        p[(2, 2 * a + 1)] = q.x;
    }
    p
}

#[derive(Debug, Clone)]
pub struct ElementStiffness {
    pub kc: DMatrix<f64>,
    pub ks: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

pub fn element_stiffness(mesh: &PolyMesh, e: usize, material: &Material) -> Result<ElementStiffness> {
    let g = ElementGeometry::new(mesh, e)?;
    let poly = mesh.polygon(e);
    let n = poly.len();

    let p = projection_from(&g);
    let kc = p.transpose() * material.d * &p * g.area;

    // scaled linear monomials evaluated at the nodes
    let dm = DMatrix::from_fn(n, 3, |a, k| match k {
        0 => 1.0,
        1 => (poly[a].x - g.centroid.x) / g.diameter,
        _ => (poly[a].y - g.centroid.y) / g.diameter,
    });
    let gram: Matrix3<f64> = (dm.transpose() * &dm).fixed_view::<3, 3>(0, 0).into();
    let eig = SymmetricEigen::new(gram).eigenvalues;
    if eig.min() <= 1e-12 * eig.max() {
        return Err(Error::SingularFit(format!("element {e} nodes are collinear")));
    }
    let proj = &dm * gram.try_inverse().ok_or_else(|| Error::SingularFit(format!("element {e}")))?
        * dm.transpose();
    let mut ks = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..n {
        for b in 0..n {
            let v = material.mu * (if a == b { 1.0 } else { 0.0 } - proj[(a, b)]);
            ks[(2 * a, 2 * b)] = v;
            ks[(2 * a + 1, 2 * b + 1)] = v;
        }
    }
    let k = &kc + &ks;
    Ok(ElementStiffness { kc, ks, k })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dof {
    Free(usize),
    Fixed(f64),
}

/// Reduced system after symmetric elimination of Dirichlet dofs.
#[derive(Debug, Clone)]
pub struct System {
    pub k: CscMatrix,
    pub f: Vec<f64>,
    dofs: Vec<Dof>,
}

impl System {
    pub fn n_free(&self) -> usize {
        self.f.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.dofs.len() - self.n_free()
    }
}

/// Nodal forces from tractions and body force, before elimination.
pub fn load_vector(mesh: &PolyMesh, bvp: &BvpSpec) -> Result<Vec<f64>> {
    let tol = mesh.geo_tol();
    let mut f = vec![0.0; 2 * mesh.n_nodes()];
    for (a, b) in mesh.boundary_edges() {
        let (pa, pb) = (mesh.nodes[a].pos, mesh.nodes[b].pos);
        let half = 0.5 * (pb - pa).norm();
        for nm in &bvp.neumann {
            if nm.region.contains(&pa, tol) && nm.region.contains(&pb, tol) {
                let (ta, tb) = ((nm.traction)(&pa), (nm.traction)(&pb));
                f[2 * a] += half * ta.x;
                f[2 * a + 1] += half * ta.y;
                f[2 * b] += half * tb.x;
                f[2 * b + 1] += half * tb.y;
            }
        }
    }
    if let Some(body) = &bvp.body_force {
        for e in 0..mesh.n_elements() {
            let w = mesh.area(e) / mesh.elements[e].len() as f64;
            for &v in &mesh.elements[e].vertices {
                let b = body(&mesh.nodes[v].pos);
                f[2 * v] += w * b.x;
                f[2 * v + 1] += w * b.y;
            }
        }
    }
    Ok(f)
}

fn dirichlet_dofs(mesh: &PolyMesh, bvp: &BvpSpec) -> Vec<Option<f64>> {
    let tol = mesh.geo_tol();
    let mut fixed = vec![None; 2 * mesh.n_nodes()];
    for d in &bvp.dirichlet {
        for (v, node) in mesh.nodes.iter().enumerate() {
            if !node.on_boundary || !d.region.contains(&node.pos, tol) {
                continue;
            }
            let g = (d.value)(&node.pos);
            for c in 0..2 {
                if d.mask[c] {
                    fixed[2 * v + c] = Some(g[c]);
                }
            }
        }
    }
    fixed
}

/// Fails unless the constrained dofs remove all three rigid-body modes.
pub(crate) fn check_rigid_modes(pos: &[Point], fixed: &[Option<f64>]) -> Result<()> {
    let (lo, hi) = geometry::bbox(pos);
    let c = (lo + hi) * 0.5;
    let s = (hi - lo).norm().max(f64::MIN_POSITIVE);
    let mut gram = Matrix3::<f64>::zeros();
    for (dof, g) in fixed.iter().enumerate() {
        if g.is_none() {
            continue;
        }
        let p = pos[dof / 2];
        let r = if dof % 2 == 0 {
            Vector3::new(1.0, 0.0, -(p.y - c.y) / s)
        } else {
            Vector3::new(0.0, 1.0, (p.x - c.x) / s)
        };
        gram += r * r.transpose();
    }
    let eig = SymmetricEigen::new(gram).eigenvalues;
    if eig.max() <= 0.0 || eig.min() <= 1e-10 * eig.max() {
        return Err(Error::UnconstrainedSystem);
    }
    Ok(())
}

pub fn assemble(mesh: &PolyMesh, material: &Material, bvp: &BvpSpec) -> Result<System> {
    assemble_with(mesh, material, bvp, Execution::default())
}

pub fn assemble_with(
    mesh: &PolyMesh,
    material: &Material,
    bvp: &BvpSpec,
    exec: Execution,
) -> Result<System> {
    let fixed = dirichlet_dofs(mesh, bvp);
    check_rigid_modes(&mesh.positions(), &fixed)?;
    let mut n_free = 0;
    let dofs: Vec<Dof> = fixed
        .iter()
        .map(|g| match g {
            Some(v) => Dof::Fixed(*v),
            None => {
                n_free += 1;
                Dof::Free(n_free - 1)
            }
        })
        .collect();

    let full_f = load_vector(mesh, bvp)?;
    let mut f: Vec<f64> = full_f
        .iter()
        .zip(&dofs)
        .filter(|(_, d)| matches!(d, Dof::Free(_)))
        .map(|(v, _)| *v)
        .collect();

    let locals: Vec<Result<DMatrix<f64>>> =
        exec.map_range(mesh.n_elements(), |e| element_stiffness(mesh, e, material).map(|s| s.k));
    let cap: usize = mesh.elements.iter().map(|e| 4 * e.len() * e.len()).sum();
    let mut t = TripletMatrix::with_capacity(n_free, cap);
    for (e, k) in locals.into_iter().enumerate() {
        let k = k?;
        let gdof: Vec<usize> = mesh.elements[e]
            .vertices
            .iter()
            .flat_map(|&v| [2 * v, 2 * v + 1])
            .collect();
        for (i, &gi) in gdof.iter().enumerate() {
            let Dof::Free(ri) = dofs[gi] else { continue };
            for (j, &gj) in gdof.iter().enumerate() {
                match dofs[gj] {
                    Dof::Free(cj) => t.push(ri, cj, k[(i, j)]),
                    Dof::Fixed(g) => f[ri] -= k[(i, j)] * g,
                }
            }
        }
    }
    Ok(System { k: t.build()?, f, dofs })
}

/// Nodal displacements with the element-wise projected fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub u: Vec<f64>,
    pub element_strain: Vec<Vector3<f64>>,
    pub element_stress: Vec<Vector3<f64>>,
    /// Full mean displacement gradient per element (includes rotation).
    pub element_gradient: Vec<Matrix2<f64>>,
}

impl SolutionField {
    pub fn from_displacements(mesh: &PolyMesh, material: &Material, u: Vec<f64>) -> Result<Self> {
        assert_eq!(u.len(), 2 * mesh.n_nodes());
        let n = mesh.n_elements();
        let mut element_strain = Vec::with_capacity(n);
        let mut element_stress = Vec::with_capacity(n);
        let mut element_gradient = Vec::with_capacity(n);
        for e in 0..n {
            let g = ElementGeometry::new(mesh, e)?;
            let d: Vec<Vector2<f64>> = mesh.elements[e]
                .vertices
                .iter()
                .map(|&v| Vector2::new(u[2 * v], u[2 * v + 1]))
                .collect();
            let grad = g.mean_gradient(&d);
            let eps = voigt_strain(&grad);
            element_strain.push(eps);
            element_stress.push(material.stress(&eps));
            element_gradient.push(grad);
        }
        Ok(SolutionField { u, element_strain, element_stress, element_gradient })
    }

    pub fn displacement(&self, v: usize) -> Vector2<f64> {
        Vector2::new(self.u[2 * v], self.u[2 * v + 1])
    }

    pub fn displacement_pairs(&self) -> Vec<[f64; 2]> {
        self.u.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
    }
}

pub fn solve(mesh: &PolyMesh, material: &Material, system: &System) -> Result<SolutionField> {
    let x = system.k.solve_spd(&system.f)?;
    let u = system
        .dofs
        .iter()
        .map(|d| match *d {
            Dof::Free(i) => x[i],
            Dof::Fixed(g) => g,
        })
        .collect();
    SolutionField::from_displacements(mesh, material, u)
}

/// Assemble and solve in one call.
pub fn solve_bvp(mesh: &PolyMesh, material: &Material, bvp: &BvpSpec) -> Result<SolutionField> {
    solve(mesh, material, &assemble(mesh, material, bvp)?)
}
