//! Bounded Voronoi tessellation by half-plane clipping.
//!
//! Each seed's cell is the bounding box clipped by the bisectors with its
//! neighbours (nearest first, stopping once no farther seed can cut the
//! cell), then intersected exactly with the domain through its convex
//! pieces. Cell vertices are welded into shared nodes afterwards.
//!
//! Near holes and re-entrant corners a clipped cell can fall apart into
//! several components. The component holding the seed stays with it; any
//! other component is merged into the neighbouring cell it shares the
//! longest edge with.

use std::collections::HashMap;

use super::{mark_boundary, Domain, SeedSet};
use crate::error::{Error, Result};
use crate::mesh::geometry::{self, clip_halfplane, is_straight_through, signed_area};
use crate::mesh::{Element, Node, Point, PolyMesh, SpatialGrid};
use crate::parallel::Execution;

pub fn bounded_voronoi(seeds: &SeedSet, domain: &Domain) -> Result<PolyMesh> {
    bounded_voronoi_with(seeds, domain, Execution::default())
}

pub fn bounded_voronoi_with(seeds: &SeedSet, domain: &Domain, exec: Execution) -> Result<PolyMesh> {
    if seeds.len() < 3 {
        return Err(Error::TessellationFailure(format!("{} seeds", seeds.len())));
    }
    let tol = domain.geo_tol();
    let cells: Vec<Result<Vec<Vec<Point>>>> =
        exec.map_range(seeds.len(), |i| seed_cell(i, &seeds.seeds, domain, tol));
    let cells: Vec<Vec<Vec<Point>>> = cells.into_iter().collect::<Result<_>>()?;
    weld(cells, domain, tol)
}

/// Components of one seed's clipped cell, the seed's own component first.
fn seed_cell(i: usize, seeds: &[Point], domain: &Domain, tol: f64) -> Result<Vec<Vec<Point>>> {
    let s = seeds[i];
    let (lo, hi) = domain.bbox();
    let pad = (hi - lo) * 0.1;
    let (lo, hi) = (lo - pad, hi + pad);
    let mut cell = vec![lo, Point::new(hi.x, lo.y), hi, Point::new(lo.x, hi.y)];

    let mut order: Vec<(f64, usize)> = seeds
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, t)| ((t - s).norm_squared(), j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut radius2 = cell.iter().map(|v| (v - s).norm_squared()).fold(0.0, f64::max);
    for (d2, j) in order {
        if d2 > 4.0 * radius2 {
            break;
        }
        let t = seeds[j];
        if d2 == 0.0 {
            return Err(Error::TessellationFailure(format!("seeds {i} and {j} coincide")));
        }
        let normal = t - s;
        let offset = normal.dot(&((s + t) * 0.5));
        cell = clip_halfplane(&cell, &normal, offset);
        radius2 = cell.iter().map(|v| (v - s).norm_squared()).fold(0.0, f64::max);
    }

    let mut parts: Vec<Vec<Point>> = Vec::new();
    for piece in domain.pieces() {
        let mut p = cell.clone();
        let n = piece.len();
        for k in 0..n {
            let a = piece[k];
            let b = piece[(k + 1) % n];
            let e = b - a;
            let normal = Point::new(e.y, -e.x);
            p = clip_halfplane(&p, &normal, normal.dot(&a));
            if p.is_empty() {
                break;
            }
        }
        let p = clean_polygon(p, tol);
        if p.len() >= 3 && signed_area(&p) > tol * tol {
            parts.push(p);
        }
    }
    if parts.is_empty() {
        return Err(Error::TessellationFailure(format!("cell {i} misses the domain")));
    }
    let mut comps = components(&parts, tol)
        .ok_or_else(|| Error::TessellationFailure(format!("cell {i} has a hole")))?;
    comps = comps.into_iter().map(|c| clean_polygon(c, tol)).filter(|c| c.len() >= 3).collect();
    let own = comps
        .iter()
        .position(|c| geometry::point_in_polygon(&s, c, tol) != geometry::PointLocation::Outside)
        .ok_or_else(|| Error::TessellationFailure(format!("seed {i} lies outside its cell")))?;
    comps.swap(0, own);
    Ok(comps)
}

/// Removes near-duplicate consecutive vertices and straight-through
/// vertices.
fn clean_polygon(mut p: Vec<Point>, tol: f64) -> Vec<Point> {
    let mut changed = true;
    while changed && p.len() >= 3 {
        changed = false;
        let n = p.len();
        for i in 0..n {
            let prev = p[(i + n - 1) % n];
            let next = p[(i + 1) % n];
            if (p[i] - next).norm() <= tol || is_straight_through(&prev, &p[i], &next, tol) {
                p.remove(i);
                changed = true;
                break;
            }
        }
    }
    p
}

/// Groups convex pieces that share whole edges and returns the outer loop of
/// each group. Opposite edges cancel; `None` if a group's remaining edges do
/// not chain into a single loop.
fn components(parts: &[Vec<Point>], tol: f64) -> Option<Vec<Vec<Point>>> {
    let mut pts: Vec<Point> = Vec::new();
    let id_of = |p: Point, pts: &mut Vec<Point>| -> usize {
        if let Some(k) = pts.iter().position(|q| (q - p).norm() <= tol) {
            k
        } else {
            pts.push(p);
            pts.len() - 1
        }
    };
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for (k, part) in parts.iter().enumerate() {
        let n = part.len();
        for j in 0..n {
            let a = id_of(part[j], &mut pts);
            let b = id_of(part[(j + 1) % n], &mut pts);
            if a != b {
                edges.push((a, b, k));
            }
        }
    }
    let mut group: Vec<usize> = (0..parts.len()).collect();
    fn root(g: &mut [usize], mut x: usize) -> usize {
        while g[x] != x {
            g[x] = g[g[x]];
            x = g[x];
        }
        x
    }
    let mut alive = vec![true; edges.len()];
    for x in 0..edges.len() {
        if !alive[x] {
            continue;
        }
        let (a, b, kx) = edges[x];
        if let Some(y) = (0..edges.len()).find(|&y| alive[y] && edges[y].0 == b && edges[y].1 == a) {
            alive[x] = false;
            alive[y] = false;
            let (rx, ry) = (root(&mut group, kx), root(&mut group, edges[y].2));
            group[rx.max(ry)] = rx.min(ry);
        }
    }
    let mut roots: Vec<usize> = (0..parts.len()).map(|k| root(&mut group, k)).collect();
    let members = roots.clone();
    roots.sort_unstable();
    roots.dedup();
    let mut out = Vec::new();
    for r in roots {
        let remaining: Vec<(usize, usize)> = edges
            .iter()
            .zip(&alive)
            .filter(|(e, &a)| a && members[e.2] == r)
            .map(|(e, _)| (e.0, e.1))
            .collect();
        let mut next: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in &remaining {
            if next.insert(a, b).is_some() {
                return None;
            }
        }
        let start = remaining.first()?.0;
        let mut lp = vec![start];
        let mut v = next[&start];
        while v != start {
            lp.push(v);
            v = *next.get(&v)?;
            if lp.len() > remaining.len() {
                return None;
            }
        }
        if lp.len() != remaining.len() {
            return None;
        }
        out.push(lp.into_iter().map(|k| pts[k]).collect());
    }
    Some(out)
}

/// Welds cell vertices into shared nodes, builds a conforming mesh and
/// folds stray cell components into their neighbours. Element `i` belongs to
/// seed `i`.
fn weld(cells: Vec<Vec<Vec<Point>>>, domain: &Domain, tol: f64) -> Result<PolyMesh> {
    let n_seeds = cells.len();
    let polys: Vec<Vec<Point>> = cells
        .iter()
        .map(|c| c[0].clone())
        .chain(cells.iter().flat_map(|c| c[1..].iter().cloned()))
        .collect();
    let all: Vec<Point> = polys.iter().flatten().copied().collect();
    let grid = SpatialGrid::new(&all, tol);
    let mut node_of = vec![usize::MAX; all.len()];
    let mut nodes: Vec<Node> = Vec::new();
    for k in 0..all.len() {
        if node_of[k] != usize::MAX {
            continue;
        }
        let id = nodes.len();
        nodes.push(Node::interior(all[k]));
        for j in grid.near_point(&all[k], tol) {
            if node_of[j] == usize::MAX && (all[j] - all[k]).norm() <= tol {
                node_of[j] = id;
            }
        }
    }
    let mut elements = Vec::with_capacity(polys.len());
    let mut k = 0;
    for (c, poly) in polys.iter().enumerate() {
        let mut vs: Vec<usize> = poly.iter().map(|_| {
            k += 1;
            node_of[k - 1]
        }).collect();
        vs.dedup();
        while vs.len() > 1 && vs.first() == vs.last() {
            vs.pop();
        }
        if vs.len() < 3 {
            return Err(Error::TessellationFailure(format!("cell {c} degenerated while welding")));
        }
        elements.push(Element::new(vs));
    }
    let mut mesh = PolyMesh::new(nodes, elements)?;
    mesh.make_conforming(tol)?;
    if mesh.n_elements() > n_seeds {
        absorb_strays(&mut mesh, n_seeds)?;
    }
    mark_boundary(&mut mesh, domain);
    for e in 0..mesh.n_elements() {
        mesh.check_element(e, tol)
            .map_err(|err| Error::TessellationFailure(err.to_string()))?;
    }
    let area = mesh.total_area();
    if ((area - domain.area()) / domain.area()).abs() > 1e-8 {
        return Err(Error::TessellationFailure(format!(
            "cells cover {area} of domain area {}",
            domain.area()
        )));
    }
    Ok(mesh)
}

/// Merges every element with index ≥ `keep` into the neighbour sharing the
/// longest boundary with it, then drops the merged elements.
fn absorb_strays(mesh: &mut PolyMesh, keep: usize) -> Result<()> {
    let mut pending: Vec<usize> = (keep..mesh.n_elements()).collect();
    let mut gone = vec![false; mesh.n_elements()];
    while !pending.is_empty() {
        let mut progress = false;
        let mut left = Vec::new();
        for &o in &pending {
            let owner: HashMap<(usize, usize), usize> = mesh
                .elements
                .iter()
                .enumerate()
                .filter(|(e, _)| !gone[*e])
                .flat_map(|(e, el)| el.edges().map(move |d| (d, e)))
                .collect();
            let mut shared: HashMap<usize, f64> = HashMap::new();
            for (a, b) in mesh.elements[o].edges() {
                if let Some(&f) = owner.get(&(b, a)) {
                    *shared.entry(f).or_default() += (mesh.nodes[a].pos - mesh.nodes[b].pos).norm();
                }
            }
            let mut cand: Vec<(usize, f64)> = shared.into_iter().collect();
            // prefer a seed's own cell, then the longest shared boundary
            cand.sort_by(|x, y| (x.0 >= keep).cmp(&(y.0 >= keep)).then(y.1.total_cmp(&x.1)).then(x.0.cmp(&y.0)));
            let merged = cand.iter().find_map(|&(f, _)| merge_two(mesh, f, o).map(|lp| (f, lp)));
            match merged {
                Some((f, lp)) => {
                    mesh.elements[f].vertices = lp;
                    mesh.elements[o].vertices.clear();
                    gone[o] = true;
                    progress = true;
                }
                None => left.push(o),
            }
        }
        if !progress {
            return Err(Error::TessellationFailure(format!("{} stray cell pieces", left.len())));
        }
        pending = left;
    }
    mesh.elements.retain(|el| !el.vertices.is_empty());
    mesh.build_adjacency()?;
    mesh.compact();
    Ok(())
}

/// Outer loop of the union of two elements, if it is a single loop.
fn merge_two(mesh: &PolyMesh, a: usize, b: usize) -> Option<Vec<usize>> {
    let edges: Vec<(usize, usize)> =
        mesh.elements[a].edges().chain(mesh.elements[b].edges()).collect();
    let set: std::collections::HashSet<(usize, usize)> = edges.iter().copied().collect();
    let remaining: Vec<(usize, usize)> =
        edges.iter().filter(|&&(x, y)| !set.contains(&(y, x))).copied().collect();
    let mut next: HashMap<usize, usize> = HashMap::new();
    for &(x, y) in &remaining {
        if next.insert(x, y).is_some() {
            return None;
        }
    }
    // start from the first vertex of `a` still on the loop to keep ordering stable
    let start = *mesh.elements[a].vertices.iter().find(|v| next.contains_key(v))?;
    let mut lp = vec![start];
    let mut v = next[&start];
    while v != start {
        lp.push(v);
        v = *next.get(&v)?;
        if lp.len() > remaining.len() {
            return None;
        }
    }
    (lp.len() == remaining.len()).then_some(lp)
}
