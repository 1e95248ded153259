//! Initial mesh generation: structured rectangle grids and Lloyd-smoothed
//! bounded Voronoi tessellations of polygonal domains.

mod domain;
mod voronoi;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use domain::Domain;
pub use voronoi::{bounded_voronoi, bounded_voronoi_with};

use crate::error::{Error, Result};
use crate::mesh::geometry::{centroid_area, dist_point_segment};
use crate::mesh::{pt, Element, Node, Point, PolyMesh};

/// Generator points of a Voronoi tessellation.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    pub seeds: Vec<Point>,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }
}

pub const LLOYD_TOL: f64 = 1e-3;
pub const LLOYD_MAX_ITER: usize = 100;
const MAX_REJECTIONS: usize = 1_000_000;

/// Cell centres of an `n_x`×`n_y` grid over the bounding box, keeping only
/// those strictly inside the domain.
pub fn structured_seeds(domain: &Domain, n_x: usize, n_y: usize) -> Result<SeedSet> {
    if n_x < 2 || n_y < 2 {
        return Err(Error::DegenerateInput("grid needs at least 2 cells per side".into()));
    }
    let (lo, hi) = domain.bbox();
    let (dx, dy) = ((hi.x - lo.x) / n_x as f64, (hi.y - lo.y) / n_y as f64);
    let seeds: Vec<Point> = (0..n_y)
        .flat_map(|j| (0..n_x).map(move |i| pt(lo.x + (i as f64 + 0.5) * dx, lo.y + (j as f64 + 0.5) * dy)))
        .filter(|p| domain.sdf(p) < 0.0)
        .collect();
    if seeds.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    Ok(SeedSet { seeds })
}

/// `n` uniformly distributed seeds inside the domain, reproducible from
/// `rng_seed`.
pub fn random_seeds(domain: &Domain, n: usize, rng_seed: u64) -> Result<SeedSet> {
    if n == 0 {
        return Err(Error::DegenerateInput("need at least one seed".into()));
    }
    let (lo, hi) = domain.bbox();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seeds = Vec::with_capacity(n);
    let mut rejected = 0;
    while seeds.len() < n {
        let p = pt(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if domain.sdf(&p) < 0.0 {
            seeds.push(p);
        } else {
            rejected += 1;
            if rejected >= MAX_REJECTIONS {
                return Err(Error::SamplingExhausted(rejected));
            }
        }
    }
    Ok(SeedSet { seeds })
}

/// Uniform grid lines over `[lo, hi]` with every feature coordinate moved
/// onto the nearest free line (or added as a new line when none is free).
fn snapped_lines(lo: f64, hi: f64, n: usize, features: &[f64]) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    let mut lines: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let mut claimed = vec![false; n + 1];
    claimed[0] = true;
    claimed[n] = true;
    let mut extra = Vec::new();
    for &f in features {
        if (f - lo).abs() < 1e-12 || (f - hi).abs() < 1e-12 {
            continue;
        }
        let k = ((f - lo) / h).round() as usize;
        let k = k.clamp(1, n - 1);
        if !claimed[k] {
            claimed[k] = true;
            lines[k] = f;
        } else if (lines[k] - f).abs() > 1e-12 {
            extra.push(f);
        }
    }
    lines.extend(extra);
    lines.sort_by(f64::total_cmp);
    lines.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    lines
}

/// Tensor-product grid lines aligned with the domain's feature coordinates.
pub fn grid_lines(domain: &Domain, n_x: usize, n_y: usize) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = domain.bbox();
    let (fx, fy) = domain.feature_coords();
    (snapped_lines(lo.x, hi.x, n_x, &fx), snapped_lines(lo.y, hi.y, n_y, &fy))
}

/// Structured mesh of exact rectangles. Grid lines follow a uniform
/// `n_x`×`n_y` subdivision of the bounding box, shifted onto the domain's
/// feature coordinates so that holes, notches and load points fall on
/// element edges. Cells outside the domain are dropped.
pub fn structured_mesh(domain: &Domain, n_x: usize, n_y: usize) -> Result<PolyMesh> {
    if n_x < 2 || n_y < 2 {
        return Err(Error::DegenerateInput("grid needs at least 2 cells per side".into()));
    }
    let (xs, ys) = grid_lines(domain, n_x, n_y);
    let (nx, ny) = (xs.len(), ys.len());
    let mut id = vec![usize::MAX; nx * ny];
    let mut nodes = Vec::new();
    let mut elements = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let c = pt(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]));
            if domain.sdf(&c) >= 0.0 {
                continue;
            }
            let mut quad = Vec::with_capacity(4);
            for (a, b) in [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)] {
                let k = b * nx + a;
                if id[k] == usize::MAX {
                    id[k] = nodes.len();
                    nodes.push(Node::interior(pt(xs[a], ys[b])));
                }
                quad.push(id[k]);
            }
            elements.push(Element::new(quad));
        }
    }
    if elements.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    let mut mesh = PolyMesh::new(nodes, elements)?;
    mark_boundary(&mut mesh, domain);
    Ok(mesh)
}

/// Sets `on_boundary` / `is_corner` from the domain geometry.
pub fn mark_boundary(mesh: &mut PolyMesh, domain: &Domain) {
    let tol = domain.geo_tol();
    for n in &mut mesh.nodes {
        n.on_boundary = domain.on_boundary(&n.pos, tol);
        n.is_corner = n.on_boundary && domain.is_corner_point(&n.pos, tol);
    }
}

/// Makes every domain corner point a mesh node: an existing node within
/// tolerance is flagged, otherwise the nearest movable boundary node on the
/// same boundary edge within `h/2` slides onto the point, and failing that
/// the boundary edge is split.
pub fn insert_corner_nodes(mesh: &mut PolyMesh, domain: &Domain, h: f64) -> Result<()> {
    let tol = domain.geo_tol();
    for c in domain.corner_points.clone() {
        if let Some(v) = (0..mesh.n_nodes()).find(|&v| (mesh.nodes[v].pos - c).norm() <= tol) {
            mesh.nodes[v].is_corner = true;
            mesh.nodes[v].on_boundary = true;
            continue;
        }
        let edge = mesh
            .boundary_edges()
            .into_iter()
            .find(|&(a, b)| dist_point_segment(&c, &mesh.nodes[a].pos, &mesh.nodes[b].pos) <= tol)
            .ok_or_else(|| {
                Error::TessellationFailure(format!("corner ({}, {}) not on mesh boundary", c.x, c.y))
            })?;
        let (a, b) = edge;
        let mut candidates: Vec<usize> = [a, b]
            .into_iter()
            .filter(|&v| !mesh.nodes[v].is_corner && (mesh.nodes[v].pos - c).norm() <= 0.5 * h)
            .collect();
        candidates.sort_by(|&p, &q| {
            (mesh.nodes[p].pos - c).norm().total_cmp(&(mesh.nodes[q].pos - c).norm())
        });
        let mut done = false;
        for v in candidates {
            let old = mesh.nodes[v].pos;
            mesh.nodes[v].pos = c;
            if mesh.node_elements(v).iter().all(|&e| mesh.check_element(e, tol).is_ok()) {
                mesh.nodes[v].is_corner = true;
                done = true;
                break;
            }
            mesh.nodes[v].pos = old;
        }
        if !done {
            let owner = mesh
                .node_elements(a)
                .iter()
                .copied()
                .find(|&e| mesh.elements[e].edges().any(|d| d == (a, b)))
                .expect("boundary edge has an owner");
            let new = mesh.n_nodes();
            mesh.nodes.push(Node { pos: c, on_boundary: true, is_corner: true });
            let vs = &mut mesh.elements[owner].vertices;
            let i = vs.iter().position(|&x| x == a).unwrap();
            vs.insert(i + 1, new);
            mesh.build_adjacency()?;
        }
    }
    Ok(())
}

fn mean_spacing(domain: &Domain, n: usize) -> f64 {
    (domain.area() / n.max(1) as f64).sqrt()
}

/// Bounded Voronoi mesh with corner points inserted and boundary flags set.
pub fn voronoi_mesh(seeds: &SeedSet, domain: &Domain) -> Result<PolyMesh> {
    let mut mesh = bounded_voronoi(seeds, domain)?;
    insert_corner_nodes(&mut mesh, domain, mean_spacing(domain, seeds.len()))?;
    mesh.validate()?;
    Ok(mesh)
}

/// Per-iteration record of a Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydTrace {
    pub iterations: usize,
    /// Coefficient of variation of the cell areas, before the first
    /// iteration and after every iteration.
    pub area_cv: Vec<f64>,
    pub max_move: Vec<f64>,
}

pub fn area_cv(mesh: &PolyMesh) -> f64 {
    let a: Vec<f64> = (0..mesh.n_elements()).map(|e| mesh.area(e)).collect();
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Moves seeds to their cell centroids and re-tessellates until the largest
/// seed movement is at most `tol·h` or `max_iter` is reached.
pub fn lloyd_smooth(
    seeds: &SeedSet,
    domain: &Domain,
    max_iter: usize,
    tol: f64,
) -> Result<(PolyMesh, SeedSet, LloydTrace)> {
    let h = mean_spacing(domain, seeds.len());
    let mut seeds = seeds.clone();
    let mut mesh = bounded_voronoi(&seeds, domain)?;
    let mut trace = LloydTrace { iterations: 0, area_cv: vec![area_cv(&mesh)], max_move: vec![] };
    for _ in 0..max_iter {
        let mut moved = 0.0f64;
        let next: Vec<Point> = seeds
            .seeds
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let c = centroid_area(&mesh.polygon(i)).map(|(c, _)| c).unwrap_or(*s);
                // a centroid of a non-convex cell can fall outside the domain
                let c = if domain.sdf(&c) < 0.0 { c } else { *s };
                moved = moved.max((c - s).norm());
                c
            })
            .collect();
        trace.max_move.push(moved);
        if moved <= tol * h {
            break;
        }
        seeds.seeds = next;
        mesh = bounded_voronoi(&seeds, domain)?;
        trace.iterations += 1;
        trace.area_cv.push(area_cv(&mesh));
    }
    Ok((mesh, seeds, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    Structured,
    Voronoi,
}

/// Generates the initial mesh of a benchmark: `density` cells per side for
/// structured meshes, or the number of random seeds for Voronoi meshes.
pub fn generate(domain: &Domain, kind: MeshKind, density: usize, rng_seed: u64) -> Result<PolyMesh> {
    generate_with(domain, kind, density, rng_seed, LLOYD_MAX_ITER, LLOYD_TOL)
}

pub fn generate_with(
    domain: &Domain,
    kind: MeshKind,
    density: usize,
    rng_seed: u64,
    lloyd_iter: usize,
    lloyd_tol: f64,
) -> Result<PolyMesh> {
    match kind {
        MeshKind::Structured => {
            let mut m = structured_mesh(domain, density, density)?;
            insert_corner_nodes(&mut m, domain, 0.5 / density as f64 * domain.diameter())?;
            m.validate()?;
            Ok(m)
        }
        MeshKind::Voronoi => {
            let seeds = random_seeds(domain, density, rng_seed)?;
            let (_, smoothed, _) = lloyd_smooth(&seeds, domain, lloyd_iter, lloyd_tol)?;
            voronoi_mesh(&smoothed, domain)
        }
    }
}
