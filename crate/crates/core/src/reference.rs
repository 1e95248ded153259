//! Overkill reference solutions: biquadratic (Q2) Lagrange finite elements on
//! a tensor grid of the axis-aligned domain.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix2, SMatrix, Vector2};

use crate::error::{Error, Result};
use crate::indicators::ReferenceField;
use crate::mesh::{pt, Point};
use crate::meshgen::grid_lines;
use crate::sparse::TripletMatrix;
use crate::vem::{check_rigid_modes, BvpSpec, Material};

const MAGIC: &[u8; 8] = b"PVREF001";
const GAUSS: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

type ElementMatrix = SMatrix<f64, 18, 18>;

/// Quadratic Lagrange basis on [-1, 1] with nodes -1, 0, 1, and derivatives.
fn lagrange(xi: f64) -> ([f64; 3], [f64; 3]) {
    (
        [0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)],
        [xi - 0.5, -2.0 * xi, xi + 0.5],
    )
}

/// Shape values and physical derivatives of the 9 cell nodes, local index
/// `3q + p` for lattice offset (p, q).
fn shape(xi: f64, eta: f64, hx: f64, hy: f64) -> ([f64; 9], [[f64; 2]; 9]) {
    let (lx, dx) = lagrange(xi);
    let (ly, dy) = lagrange(eta);
    let mut n = [0.0; 9];
    let mut d = [[0.0; 2]; 9];
    for q in 0..3 {
        for p in 0..3 {
            n[3 * q + p] = lx[p] * ly[q];
            d[3 * q + p] = [dx[p] * ly[q] * 2.0 / hx, lx[p] * dy[q] * 2.0 / hy];
        }
    }
    (n, d)
}

fn cell_stiffness(hx: f64, hy: f64, material: &Material) -> ElementMatrix {
    let mut k = ElementMatrix::zeros();
    let jac = 0.25 * hx * hy;
    for &(xi, wx) in &GAUSS {
        for &(eta, wy) in &GAUSS {
            let (_, d) = shape(xi, eta, hx, hy);
            let mut b = SMatrix::<f64, 3, 18>::zeros();
            for a in 0..9 {
                b[(0, 2 * a)] = d[a][0];
                b[(1, 2 * a + 1)] = d[a][1];
                b[(2, 2 * a)] = d[a][1];
                b[(2, 2 * a + 1)] = d[a][0];
            }
            k += b.transpose() * material.d * b * (wx * wy * jac);
        }
    }
    k
}

/// Nodal Q2 solution with a point evaluator for values and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RefField {
    xs: Vec<f64>,
    ys: Vec<f64>,
    active: Vec<bool>,
    /// Interleaved displacements on the (2nx+1)×(2ny+1) lattice; unused
    /// lattice nodes hold zero.
    u: Vec<f64>,
    tol: f64,
}

impl RefField {
    fn nx(&self) -> usize {
        self.xs.len() - 1
    }

    fn ny(&self) -> usize {
        self.ys.len() - 1
    }

    pub fn cells_per_side(&self) -> (usize, usize) {
        (self.nx(), self.ny())
    }

    fn lattice_x(xs: &[f64], i: usize) -> f64 {
        if i % 2 == 0 {
            xs[i / 2]
        } else {
            0.5 * (xs[i / 2] + xs[i / 2 + 1])
        }
    }

    /// Lattice node positions with their displacements, for active cells.
    pub fn nodal_values(&self) -> Vec<(Point, Vector2<f64>)> {
        let w = 2 * self.nx() + 1;
        let mut used = vec![false; w * (2 * self.ny() + 1)];
        for cj in 0..self.ny() {
            for ci in 0..self.nx() {
                if self.active[cj * self.nx() + ci] {
                    for q in 0..3 {
                        for p in 0..3 {
                            used[(2 * cj + q) * w + 2 * ci + p] = true;
                        }
                    }
                }
            }
        }
        used.iter()
            .enumerate()
            .filter(|(_, &u)| u)
            .map(|(k, _)| {
                let p = pt(Self::lattice_x(&self.xs, k % w), Self::lattice_x(&self.ys, k / w));
                (p, Vector2::new(self.u[2 * k], self.u[2 * k + 1]))
            })
            .collect()
    }

    fn locate(&self, p: &Point) -> Option<(usize, usize)> {
        let (nx, ny) = (self.nx(), self.ny());
        let find = |lines: &[f64], v: f64| lines.partition_point(|&l| l <= v).saturating_sub(1).min(lines.len() - 2);
        let (ci, cj) = (find(&self.xs, p.x), find(&self.ys, p.y));
        let inside = |i: usize, j: usize| {
            self.active[j * nx + i]
                && p.x >= self.xs[i] - self.tol
                && p.x <= self.xs[i + 1] + self.tol
                && p.y >= self.ys[j] - self.tol
                && p.y <= self.ys[j + 1] + self.tol
        };
        if inside(ci, cj) {
            return Some((ci, cj));
        }
        for (di, dj) in [(-1, 0), (0, -1), (-1, -1), (1, 0), (0, 1), (1, 1), (1, -1), (-1, 1)] {
            let (i, j) = (ci as i64 + di, cj as i64 + dj);
            if i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && inside(i as usize, j as usize) {
                return Some((i as usize, j as usize));
            }
        }
        None
    }

    /// Displacement and gradient (entry (i, j) = ∂u_i/∂x_j) at `p`.
    pub fn evaluate(&self, p: &Point) -> Result<(Vector2<f64>, Matrix2<f64>)> {
        let (ci, cj) = self.locate(p).ok_or(Error::OutOfDomain(p.x, p.y))?;
        let (hx, hy) = (self.xs[ci + 1] - self.xs[ci], self.ys[cj + 1] - self.ys[cj]);
        let snap = |t: f64| {
            let t = t.clamp(-1.0, 1.0);
            if (t - t.round()).abs() < 1e-12 {
                t.round()
            } else {
                t
            }
        };
        let xi = snap(2.0 * (p.x - self.xs[ci]) / hx - 1.0);
        let eta = snap(2.0 * (p.y - self.ys[cj]) / hy - 1.0);
        let (n, d) = shape(xi, eta, hx, hy);
        let w = 2 * self.nx() + 1;
        let mut u = Vector2::zeros();
        let mut g = Matrix2::zeros();
        for q in 0..3 {
            for pp in 0..3 {
                let a = 3 * q + pp;
                let k = (2 * cj + q) * w + 2 * ci + pp;
                let ua = Vector2::new(self.u[2 * k], self.u[2 * k + 1]);
                u += ua * n[a];
                g += ua * Vector2::new(d[a][0], d[a][1]).transpose();
            }
        }
        Ok((u, g))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(16 * self.u.len());
        buf.extend_from_slice(MAGIC);
        for n in [self.xs.len(), self.ys.len(), self.u.len()] {
            buf.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for v in self.xs.iter().chain(&self.ys).chain(&self.u).chain(std::iter::once(&self.tol)) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend(self.active.iter().map(|&a| a as u8));
        let tmp = path.as_ref().with_extension("tmp");
        std::fs::File::create(&tmp)?.write_all(&buf)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let bad = || Error::Parse("malformed reference cache".into());
        if buf.len() < 32 || &buf[..8] != MAGIC {
            return Err(bad());
        }
        let word = |k: usize| u64::from_le_bytes(buf[8 + 8 * k..16 + 8 * k].try_into().unwrap()) as usize;
        let (nxs, nys, nu) = (word(0), word(1), word(2));
        if nxs < 2 || nys < 2 {
            return Err(bad());
        }
        let n_cells = (nxs - 1) * (nys - 1);
        let floats = nxs + nys + nu + 1;
        if buf.len() != 32 + 8 * floats + n_cells || nu != 2 * (2 * nxs - 1) * (2 * nys - 1) {
            return Err(bad());
        }
        let f: Vec<f64> = buf[32..32 + 8 * floats]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let active = buf[32 + 8 * floats..].iter().map(|&b| b != 0).collect();
        Ok(RefField {
            xs: f[..nxs].to_vec(),
            ys: f[nxs..nxs + nys].to_vec(),
            u: f[nxs + nys..nxs + nys + nu].to_vec(),
            tol: f[floats - 1],
            active,
        })
    }
}

impl ReferenceField for RefField {
    fn eval(&self, p: &Point) -> Result<(Vector2<f64>, Matrix2<f64>)> {
        self.evaluate(p).map_err(|_| Error::ReferenceUnavailable(p.x, p.y))
    }
}

/// Solves the boundary value problem with Q2 elements on an `n`×`n` grid
/// (lines snapped to the domain's feature coordinates).
pub fn solve_reference(bvp: &BvpSpec, material: &Material, n: usize) -> Result<RefField> {
    if n < 2 {
        return Err(Error::DegenerateInput("reference grid needs at least 2 cells per side".into()));
    }
    let domain = &bvp.domain;
    let tol = domain.geo_tol();
    let (xs, ys) = grid_lines(domain, n, n);
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let active: Vec<bool> = (0..nx * ny)
        .map(|c| {
            let (i, j) = (c % nx, c / nx);
            domain.sdf(&pt(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]))) < 0.0
        })
        .collect();
    let w = 2 * nx + 1;
    let n_lattice = w * (2 * ny + 1);
    let pos = |k: usize| pt(RefField::lattice_x(&xs, k % w), RefField::lattice_x(&ys, k / w));
    let cell_nodes = |ci: usize, cj: usize| -> [usize; 9] {
        let mut out = [0; 9];
        for q in 0..3 {
            for p in 0..3 {
                out[3 * q + p] = (2 * cj + q) * w + 2 * ci + p;
            }
        }
        out
    };
    let is_active = |i: i64, j: i64| i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && active[j as usize * nx + i as usize];

    let mut used = vec![false; n_lattice];
    let mut on_boundary = vec![false; n_lattice];
    // boundary faces as lattice node triples (end, middle, end)
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for cj in 0..ny {
        for ci in 0..nx {
            if !active[cj * nx + ci] {
                continue;
            }
            let cn = cell_nodes(ci, cj);
            cn.iter().for_each(|&k| used[k] = true);
            let (i, j) = (ci as i64, cj as i64);
            for (nb, face) in [
                ((i, j - 1), [cn[0], cn[1], cn[2]]),
                ((i + 1, j), [cn[2], cn[5], cn[8]]),
                ((i, j + 1), [cn[8], cn[7], cn[6]]),
                ((i - 1, j), [cn[6], cn[3], cn[0]]),
            ] {
                if !is_active(nb.0, nb.1) {
                    face.iter().for_each(|&k| on_boundary[k] = true);
                    faces.push(face);
                }
            }
        }
    }

    let mut fixed: Vec<Option<f64>> = vec![None; 2 * n_lattice];
    for d in &bvp.dirichlet {
        for k in (0..n_lattice).filter(|&k| on_boundary[k]) {
            let p = pos(k);
            if d.region.contains(&p, tol) {
                let g = (d.value)(&p);
                for c in 0..2 {
                    if d.mask[c] {
                        fixed[2 * k + c] = Some(g[c]);
                    }
                }
            }
        }
    }
    let used_pos: Vec<Point> = (0..n_lattice).map(pos).collect();
    let used_fixed: Vec<Option<f64>> =
        fixed.iter().enumerate().map(|(d, g)| if used[d / 2] { *g } else { None }).collect();
    check_rigid_modes(&used_pos, &used_fixed)?;

    let mut free = vec![usize::MAX; 2 * n_lattice];
    let mut n_free = 0;
    for d in 0..2 * n_lattice {
        if used[d / 2] && fixed[d].is_none() {
            free[d] = n_free;
            n_free += 1;
        }
    }

    let mut load = vec![0.0; 2 * n_lattice];
    for face in &faces {
        let (pa, pm, pb) = (pos(face[0]), pos(face[1]), pos(face[2]));
        let len = (pb - pa).norm();
        for nm in &bvp.neumann {
            if [pa, pm, pb].iter().all(|p| nm.region.contains(p, tol)) {
                for (&k, wgt) in face.iter().zip([1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0]) {
                    let t = (nm.traction)(&pos(k));
                    load[2 * k] += len * wgt * t.x;
                    load[2 * k + 1] += len * wgt * t.y;
                }
            }
        }
    }

    let mut cache: HashMap<(u64, u64), ElementMatrix> = HashMap::new();
    let mut trip = TripletMatrix::with_capacity(n_free, 324 * nx * ny);
    let mut rhs = vec![0.0; n_free];
    for cj in 0..ny {
        for ci in 0..nx {
            if !active[cj * nx + ci] {
                continue;
            }
            let (hx, hy) = (xs[ci + 1] - xs[ci], ys[cj + 1] - ys[cj]);
            let k = cache
                .entry((hx.to_bits(), hy.to_bits()))
                .or_insert_with(|| cell_stiffness(hx, hy, material));
            let cn = cell_nodes(ci, cj);
            if let Some(b) = &bvp.body_force {
                for &(xi, wx) in &GAUSS {
                    for &(eta, wy) in &GAUSS {
                        let (nv, _) = shape(xi, eta, hx, hy);
                        let x = pt(xs[ci] + 0.5 * (xi + 1.0) * hx, ys[cj] + 0.5 * (eta + 1.0) * hy);
                        let bv = b(&x) * (wx * wy * 0.25 * hx * hy);
                        for a in 0..9 {
                            load[2 * cn[a]] += nv[a] * bv.x;
                            load[2 * cn[a] + 1] += nv[a] * bv.y;
                        }
                    }
                }
            }
            let dofs: Vec<usize> = cn.iter().flat_map(|&v| [2 * v, 2 * v + 1]).collect();
            for (i, &gi) in dofs.iter().enumerate() {
                let ri = free[gi];
                if ri == usize::MAX {
                    continue;
                }
                for (j, &gj) in dofs.iter().enumerate() {
                    match fixed[gj] {
                        None => trip.push(ri, free[gj], k[(i, j)]),
                        Some(g) => rhs[ri] -= k[(i, j)] * g,
                    }
                }
            }
        }
    }
    for d in 0..2 * n_lattice {
        if free[d] != usize::MAX {
            rhs[free[d]] += load[d];
        }
    }
    let x = trip.build()?.solve_spd(&rhs)?;
    let u = (0..2 * n_lattice)
        .map(|d| {
            if !used[d / 2] {
                0.0
            } else if let Some(g) = fixed[d] {
                g
            } else {
                x[free[d]]
            }
        })
        .collect();
    Ok(RefField { xs, ys, active, u, tol })
}

/// Loads a cached field from `path`, or solves and stores it there.
pub fn load_or_solve(path: impl AsRef<Path>, bvp: &BvpSpec, material: &Material, n: usize) -> Result<RefField> {
    let path = path.as_ref();
    if let Ok(f) = RefField::load(path) {
        return Ok(f);
    }
    let f = solve_reference(bvp, material, n)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    f.save(path)?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshgen::Domain;
    use crate::vem::{constant_field, Dirichlet, Neumann, Region};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn quad_u(p: &Point) -> Vector2<f64> {
        Vector2::new(p.x * p.x + 0.5 * p.x * p.y, p.y * p.y - 0.25 * p.x * p.y + 0.1 * p.x)
    }

    fn quad_grad(p: &Point) -> Matrix2<f64> {
        Matrix2::new(2.0 * p.x + 0.5 * p.y, 0.5 * p.x, -0.25 * p.y + 0.1, 2.0 * p.y - 0.25 * p.x)
    }

    /// Body force balancing `quad_u`: b = -(μ∇²u + (λ+μ)∇(∇·u)).
    fn quad_body(m: &Material) -> Vector2<f64> {
        let lap = Vector2::new(2.0, 2.0);
        // ∇·u = 2x + 0.5y + 2y - 0.25x = 1.75x + 2.5y
        let grad_div = Vector2::new(1.75, 2.5);
        -(lap * m.mu + grad_div * (m.lambda + m.mu))
    }

    #[test]
    fn shape_functions_partition_unity() {
        let (n, d) = shape(0.3, -0.7, 0.2, 0.5);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(d.iter().map(|g| g[0]).sum::<f64>().abs() < 1e-13);
        assert!(d.iter().map(|g| g[1]).sum::<f64>().abs() < 1e-13);
    }

    #[test]
    fn linear_field_is_exact() {
        let d = Domain::l_shape(1.0, 0.25, vec![]).unwrap();
        let g = |p: &Point| Vector2::new(0.3 + 0.1 * p.x - 0.2 * p.y, -0.1 + 0.05 * p.x + 0.4 * p.y);
        let f = solve_reference(&BvpSpec::fully_clamped(d, Arc::new(g)), &Material::default(), 8).unwrap();
        for (p, u) in f.nodal_values() {
            assert!((u - g(&p)).norm() < 1e-12);
        }
        let (_, grad) = f.evaluate(&pt(0.1, 0.6)).unwrap();
        assert!((grad - Matrix2::new(0.1, -0.2, 0.05, 0.4)).norm() < 1e-12);
    }

    #[test]
    fn quadratic_manufactured_solution_is_exact() {
        let d = Domain::plate_with_hole(1.0, 0.3, vec![]).unwrap();
        let m = Material::default();
        let b = quad_body(&m);
        let bvp = BvpSpec::fully_clamped(d.clone(), Arc::new(quad_u)).with_body_force(constant_field(b));
        let f = solve_reference(&bvp, &m, 10).unwrap();
        for (p, u) in f.nodal_values() {
            assert!((u - quad_u(&p)).norm() < 1e-9, "{p:?}");
            assert_eq!(f.evaluate(&p).unwrap().0, u);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut hits = 0;
        while hits < 100 {
            let p = pt(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            if d.sdf(&p) > 0.0 {
                assert!(matches!(f.evaluate(&p), Err(Error::OutOfDomain(..))));
                continue;
            }
            let (u, g) = f.evaluate(&p).unwrap();
            assert!((u - quad_u(&p)).norm() < 1e-9);
            assert!((g - quad_grad(&p)).norm() < 1e-9);
            hits += 1;
        }
    }

    #[test]
    fn boundary_points_evaluate() {
        let d = Domain::plate_with_hole(1.0, 0.3, vec![]).unwrap();
        let g = |p: &Point| Vector2::new(p.x, 2.0 * p.y);
        let f = solve_reference(&BvpSpec::fully_clamped(d, Arc::new(g)), &Material::default(), 6).unwrap();
        for p in [pt(0.35, 0.5), pt(0.5, 0.65), pt(1.0, 1.0), pt(0.0, 0.0)] {
            assert!((f.evaluate(&p).unwrap().0 - g(&p)).norm() < 1e-12);
        }
        assert!(f.evaluate(&pt(1.1, 0.5)).is_err());
    }

    #[test]
    fn traction_problem_balances() {
        // bar pulled on its right edge: uniform stress σ_xx = 0.2
        let d = Domain::rectangle(1.0, 1.0, vec![]).unwrap();
        let m = Material::default();
        let bvp = BvpSpec::new(d)
            .with_dirichlet(Dirichlet::fixed(Region::Segment(pt(0., 0.), pt(0., 1.)), [true, false]))
            .with_dirichlet(Dirichlet::fixed(Region::Point(pt(0., 0.)), [true, true]))
            .with_neumann(Neumann::uniform(Region::Segment(pt(1., 0.), pt(1., 1.)), Vector2::new(0.2, 0.0)));
        let f = solve_reference(&bvp, &m, 4).unwrap();
        let (_, g) = f.evaluate(&pt(0.6, 0.3)).unwrap();
        let eps = nalgebra::Vector3::new(g[(0, 0)], g[(1, 1)], g[(0, 1)] + g[(1, 0)]);
        let s = m.d * eps;
        assert!((s - nalgebra::Vector3::new(0.2, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn cache_round_trip() {
        let d = Domain::rectangle(1.0, 1.0, vec![]).unwrap();
        let g = |p: &Point| Vector2::new(p.y, 0.0);
        let bvp = BvpSpec::fully_clamped(d, Arc::new(g));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ref");
        let a = load_or_solve(&path, &bvp, &Material::default(), 4).unwrap();
        let b = RefField::load(&path).unwrap();
        assert_eq!(a, b);
        std::fs::write(&path, b"junk").unwrap();
        assert!(RefField::load(&path).is_err());
    }
}
