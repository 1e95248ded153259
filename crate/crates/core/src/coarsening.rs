//! Patch selection and convex-hull coarsening.
//!
//! A step evaluates an indicator on every node patch, keeps the eligible
//! ones, removes overlaps greedily in ascending indicator order, marks the
//! lowest fraction and merges each marked patch into one element bounded by
//! its convex hull.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::indicators::{patch_indicators, IndicatorKind, PatchRecord};
use crate::mesh::geometry::{
    self, convex_hull, dist_point_segment, dist_to_boundary, is_straight_through,
    mean_value_coordinates, point_in_polygon, project_to_boundary,
};
use crate::mesh::{Element, Patch, Point, PointLocation, PolyMesh};
use crate::parallel::Execution;
use crate::vem::{Material, SolutionField};

/// Maximum Gauss-Seidel sweeps when relocating nodes trapped in a hull.
pub const MVC_SWEEPS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseningConfig {
    pub indicator: IndicatorKind,
    /// Percentage of the resolved patch list used to set the threshold.
    pub threshold: f64,
    pub max_steps: usize,
}

impl CoarseningConfig {
    pub fn new(indicator: IndicatorKind, threshold: f64, max_steps: usize) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 100.0) {
            return Err(Error::DegenerateInput(format!("threshold {threshold}% not in (0, 100]")));
        }
        Ok(CoarseningConfig { indicator, threshold, max_steps })
    }
}

/// A patch may be coarsened only if doing so leaves the domain boundary
/// intact: every boundary or corner node must lie on its hull.
pub fn check_eligibility(mesh: &PolyMesh, patch: &Patch, tol: f64) -> bool {
    if patch.element_ids.len() < 2 {
        return false;
    }
    let special: Vec<Point> = patch
        .node_ids
        .iter()
        .map(|&v| &mesh.nodes[v])
        .filter(|n| n.on_boundary || n.is_corner)
        .map(|n| n.pos)
        .collect();
    if special.is_empty() {
        return true;
    }
    let pts: Vec<Point> = patch.node_ids.iter().map(|&v| mesh.nodes[v].pos).collect();
    match convex_hull(&pts) {
        Ok(hull) => special.iter().all(|p| dist_to_boundary(p, &hull) <= tol),
        Err(_) => false,
    }
}

fn ascending(records: &[PatchRecord]) -> Vec<PatchRecord> {
    let mut v = records.to_vec();
    v.sort_by(|a, b| a.indicator.total_cmp(&b.indicator).then(a.defining_node.cmp(&b.defining_node)));
    v
}

/// Sorts by indicator (ties by node id) and walks the list, dropping every
/// later record whose defining node belongs to an already kept patch.
pub fn resolve_overlaps(mesh: &PolyMesh, records: &[PatchRecord]) -> Vec<PatchRecord> {
    let mut removed: HashSet<usize> = HashSet::new();
    let mut out = Vec::new();
    for r in ascending(records) {
        if removed.contains(&r.defining_node) {
            continue;
        }
        removed.extend(mesh.patch(r.defining_node).node_ids);
        out.push(r);
    }
    out
}

/// Marks every record whose indicator does not exceed that of the record
/// `max(1, ⌊T·n/100⌋)` places down the ascending list.
pub fn mark_patches(resolved: &[PatchRecord], threshold: f64) -> Vec<PatchRecord> {
    let n = resolved.len();
    if n == 0 {
        return Vec::new();
    }
    let k = ((threshold * n as f64 / 100.0 + 1e-9).floor() as usize).clamp(1, n);
    let t_val = resolved[k - 1].indicator;
    resolved.iter().filter(|r| r.indicator <= t_val).cloned().collect()
}

/// Moves the interior points of a polyline onto the chord between its
/// endpoints, keeping their relative arc-length spacing.
pub fn straighten_group(chain: &[Point], tol: f64) -> Result<Vec<Point>> {
    let n = chain.len();
    assert!(n >= 2);
    let mut s = vec![0.0; n];
    for i in 1..n {
        s[i] = s[i - 1] + (chain[i] - chain[i - 1]).norm();
    }
    let total = s[n - 1];
    if total <= tol {
        return Err(Error::ZeroLengthChain);
    }
    let (a, b) = (chain[0], chain[n - 1]);
    Ok((0..n)
        .map(|i| match i {
            0 => a,
            _ if i == n - 1 => b,
            _ => a + (b - a) * (s[i] / total),
        })
        .collect())
}

/// New position for a node trapped inside `hull`: the mean value
/// coordinates of its initial position with respect to its edge neighbours
/// (initial positions, ordered by angle) applied to the neighbours'
/// projected positions. Falls back to the closest point on the hull when
/// fewer than three neighbours exist or the weights are undefined.
pub fn untangle_mvc(
    current: &Point,
    initial: &Point,
    neighbours_initial: &[Point],
    neighbours_projected: &[Point],
    hull: &[Point],
    tol: f64,
) -> Point {
    if point_in_polygon(current, hull, tol) != PointLocation::Inside {
        return *current;
    }
    let n = neighbours_initial.len();
    if n < 3 {
        return project_to_boundary(current, hull);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let angle = |k: usize| {
        let d = neighbours_initial[k] - initial;
        d.y.atan2(d.x)
    };
    order.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)).then(a.cmp(&b)));
    let poly: Vec<Point> = order.iter().map(|&k| neighbours_initial[k]).collect();
    match mean_value_coordinates(initial, &poly, tol) {
        Ok(w) => order
            .iter()
            .zip(&w)
            .fold(Point::zeros(), |acc, (&k, &wk)| acc + neighbours_projected[k] * wk),
        Err(_) => project_to_boundary(current, hull),
    }
}

/// Node roles during coarsening.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// Surrounded by merged elements; deleted.
    Red,
    /// On the hull boundary.
    Blue,
    /// On the merged region's boundary but off the hull; straightened.
    Green,
}

/// Result of merging one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarsenOutcome {
    /// Old → new node ids after compaction.
    pub node_map: Vec<Option<usize>>,
    pub new_element: usize,
    /// Elements merged beyond the original patch.
    pub absorbed: usize,
    /// Surrounding nodes moved out of the hull.
    pub relocated: usize,
    /// Nodes (old ids) that were deleted, moved or attached to the new element.
    pub affected: Vec<usize>,
}

fn aborted(msg: impl Into<String>) -> Error {
    Error::CoarseningAborted(msg.into())
}

/// Outer boundary of a union of elements as a CCW node loop. `None` if the
/// union is pinched at a node or has more than one boundary loop.
pub fn union_loop(mesh: &PolyMesh, elements: &BTreeSet<usize>) -> Option<Vec<usize>> {
    let edges: HashSet<(usize, usize)> =
        elements.iter().flat_map(|&e| mesh.elements[e].edges()).collect();
    let mut remaining: Vec<(usize, usize)> =
        edges.iter().filter(|&&(a, b)| !edges.contains(&(b, a))).copied().collect();
    remaining.sort_unstable();
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
        if lp.len() >= remaining.len() {
            return None;
        }
        lp.push(v);
        v = *next.get(&v)?;
    }
    (lp.len() == remaining.len()).then_some(lp)
}

/// Merges the patch around `node` into a single convex element. The mesh is
/// left untouched when any step or postcondition fails.
pub fn coarsen_patch(mesh: &mut PolyMesh, node: usize) -> Result<CoarsenOutcome> {
    let mut work = mesh.clone();
    let out = coarsen_in_place(&mut work, node)?;
    *mesh = work;
    Ok(out)
}

fn union_nodes(m: &PolyMesh, marked: &BTreeSet<usize>) -> Vec<usize> {
    let mut v: Vec<usize> = marked.iter().flat_map(|&e| m.elements[e].vertices.iter().copied()).collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn coarsen_in_place(m: &mut PolyMesh, node: usize) -> Result<CoarsenOutcome> {
    let tol = m.geo_tol();
    let outline_before = m.boundary_outline(tol);
    let area_before = m.total_area();
    let (nv0, nel0) = (m.n_nodes(), m.n_elements());
    let centroids: Vec<Point> = (0..nel0)
        .map(|e| m.centroid_area(e).map(|(c, _)| c))
        .collect::<Result<_>>()
        .map_err(|e| aborted(e.to_string()))?;

    // hull of the patch, absorbing elements whose centroid falls inside
    let mut marked: BTreeSet<usize> = m.node_elements(node).iter().copied().collect();
    if marked.len() < 2 {
        return Err(aborted("patch has fewer than two elements"));
    }
    let mut absorbed = 0;
    let (union, hull) = loop {
        let union = union_nodes(m, &marked);
        let pts: Vec<Point> = union.iter().map(|&v| m.nodes[v].pos).collect();
        let hull = convex_hull(&pts).map_err(|e| aborted(e.to_string()))?;
        let (lo, hi) = geometry::bbox(&hull);
        let extra: Vec<usize> = (0..nel0)
            .filter(|e| !marked.contains(e))
            .filter(|&e| {
                let c = centroids[e];
                c.x > lo.x && c.x < hi.x && c.y > lo.y && c.y < hi.y
                    && point_in_polygon(&c, &hull, tol) == PointLocation::Inside
            })
            .collect();
        if extra.is_empty() {
            break (union, hull);
        }
        absorbed += extra.len();
        marked.extend(extra);
    };

    let class: HashMap<usize, NodeClass> = union
        .iter()
        .map(|&v| {
            let n = &m.nodes[v];
            let c = if !n.on_boundary && m.node_elements(v).iter().all(|e| marked.contains(e)) {
                NodeClass::Red
            } else if dist_to_boundary(&n.pos, &hull) <= tol {
                NodeClass::Blue
            } else {
                NodeClass::Green
            };
            (v, c)
        })
        .collect();
    for &v in &union {
        let n = &m.nodes[v];
        if (n.on_boundary || n.is_corner) && class[&v] != NodeClass::Blue {
            return Err(aborted(format!("boundary node {v} is off the hull")));
        }
    }

    let lp = union_loop(m, &marked).ok_or_else(|| aborted("merged region is not a simple disc"))?;
    let on_loop: HashSet<usize> = lp.iter().copied().collect();
    for &v in &union {
        if (class[&v] == NodeClass::Red) == on_loop.contains(&v) {
            return Err(aborted(format!("node {v} misclassified against the merged boundary")));
        }
    }

    // straighten the chains between consecutive hull nodes
    let initial = m.positions();
    let blue_at: Vec<usize> = (0..lp.len()).filter(|&k| class[&lp[k]] == NodeClass::Blue).collect();
    if blue_at.len() < 3 {
        return Err(aborted("fewer than three hull nodes on the merged boundary"));
    }
    let mut moved: BTreeSet<usize> = BTreeSet::new();
    let mut relocated: BTreeSet<usize> = BTreeSet::new();
    for i in 0..blue_at.len() {
        let (k0, k1) = (blue_at[i], blue_at[(i + 1) % blue_at.len()]);
        let len = (k1 + lp.len() - k0) % lp.len();
        if len < 2 {
            continue;
        }
        let ids: Vec<usize> = (0..=len).map(|j| lp[(k0 + j) % lp.len()]).collect();
        let chain: Vec<Point> = ids.iter().map(|&v| initial[v]).collect();
        let straight = straighten_group(&chain, tol).map_err(|e| aborted(e.to_string()))?;
        for (j, &v) in ids.iter().enumerate().take(len).skip(1) {
            m.nodes[v].pos = straight[j];
            moved.insert(v);
        }
    }

    // relocate surrounding nodes now lying inside the hull
    let in_union: HashSet<usize> = union.iter().copied().collect();
    let mut candidates: BTreeSet<usize> = BTreeSet::new();
    for &v in &union {
        for &e in m.node_elements(v) {
            if !marked.contains(&e) {
                candidates.extend(m.elements[e].vertices.iter().filter(|w| !in_union.contains(w)));
            }
        }
    }
    let trapped = |m: &PolyMesh| -> Vec<usize> {
        candidates
            .iter()
            .copied()
            .filter(|&v| point_in_polygon(&m.nodes[v].pos, &hull, tol) == PointLocation::Inside)
            .collect()
    };
    for _ in 0..MVC_SWEEPS {
        let t = trapped(m);
        if t.is_empty() {
            break;
        }
        for v in t {
            if m.nodes[v].on_boundary || m.nodes[v].is_corner {
                return Err(aborted(format!("boundary node {v} is trapped in the hull")));
            }
            let nb = m.edge_neighbours(v);
            let init: Vec<Point> = nb.iter().map(|&w| initial[w]).collect();
            let proj: Vec<Point> = nb.iter().map(|&w| m.nodes[w].pos).collect();
            m.nodes[v].pos = untangle_mvc(&m.nodes[v].pos, &initial[v], &init, &proj, &hull, tol);
            relocated.insert(v);
        }
    }
    if !trapped(m).is_empty() {
        return Err(aborted("nodes remain inside the hull after untangling"));
    }

    // replace the merged elements by one element
    let mut new_vertices = Vec::with_capacity(lp.len());
    let nearby: BTreeSet<usize> = candidates.iter().copied().filter(|v| !on_loop.contains(v)).collect();
    let mut attached: Vec<usize> = Vec::new();
    for k in 0..lp.len() {
        let (a, b) = (lp[k], lp[(k + 1) % lp.len()]);
        new_vertices.push(a);
        let (pa, pb) = (m.nodes[a].pos, m.nodes[b].pos);
        let mut on: Vec<(f64, usize)> = nearby
            .iter()
            .filter_map(|&c| {
                let pc = m.nodes[c].pos;
                (dist_point_segment(&pc, &pa, &pb) <= tol
                    && (pc - pa).norm() > tol
                    && (pc - pb).norm() > tol)
                    .then(|| ((pc - pa).norm(), c))
            })
            .collect();
        on.sort_by(|x, y| x.0.total_cmp(&y.0));
        attached.extend(on.iter().map(|&(_, c)| c));
        new_vertices.extend(on.into_iter().map(|(_, c)| c));
    }
    let mut elements: Vec<Element> = m
        .elements
        .iter()
        .enumerate()
        .filter(|(e, _)| !marked.contains(e))
        .map(|(_, el)| el.clone())
        .collect();
    elements.push(Element::new(new_vertices));
    m.elements = elements;
    m.build_adjacency().map_err(|e| aborted(e.to_string()))?;
    let new_el = m.n_elements() - 1;

    // drop nodes that are straight-through in every incident element
    let candidates_for_removal = m.elements[new_el].vertices.clone();
    for v in candidates_for_removal {
        if m.nodes[v].is_corner {
            continue;
        }
        let incident = m.node_elements(v).to_vec();
        let straight = incident.iter().all(|&e| {
            let vs = &m.elements[e].vertices;
            let n = vs.len();
            let i = vs.iter().position(|&x| x == v).expect("adjacency");
            n > 3
                && is_straight_through(
                    &m.nodes[vs[(i + n - 1) % n]].pos,
                    &m.nodes[v].pos,
                    &m.nodes[vs[(i + 1) % n]].pos,
                    tol,
                )
        });
        if straight {
            for &e in &incident {
                m.elements[e].vertices.retain(|&x| x != v);
            }
        }
    }
    let node_map = m.compact();

    // postconditions
    let mut check: BTreeSet<usize> = BTreeSet::from([new_el]);
    for &v in moved.iter().chain(&relocated) {
        if let Some(nv) = node_map[v] {
            check.extend(m.node_elements(nv).iter().copied());
        }
    }
    for &e in &check {
        m.check_element(e, tol).map_err(|err| aborted(err.to_string()))?;
    }
    m.check_conformity_of(check.iter().copied(), tol).map_err(|err| aborted(err.to_string()))?;
    let area = m.total_area();
    if (area - area_before).abs() > 1e-9 * area_before.abs() {
        return Err(aborted(format!("area changed from {area_before} to {area}")));
    }
    if !same_outline(&outline_before, &m.boundary_outline(tol), tol) {
        return Err(aborted("domain boundary changed"));
    }
    if m.n_nodes() >= nv0 || m.n_elements() >= nel0 {
        return Err(aborted("coarsening did not reduce the mesh"));
    }

    let mut affected: BTreeSet<usize> = union.iter().copied().collect();
    affected.extend(moved);
    affected.extend(&relocated);
    affected.extend(attached);
    Ok(CoarsenOutcome {
        node_map,
        new_element: new_el,
        absorbed,
        relocated: relocated.len(),
        affected: affected.into_iter().collect(),
    })
}

pub fn same_outline(a: &[Vec<Point>], b: &[Vec<Point>], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).norm() <= tol))
}

/// Counts from one coarsening step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepReport {
    pub eligible: usize,
    pub resolved: usize,
    pub marked: usize,
    pub coarsened: usize,
    pub aborted: usize,
    pub stale: usize,
    /// Patches taken from beyond the marked set because every marked patch
    /// failed.
    pub fallback: usize,
    pub nodes_removed: usize,
    pub elements_removed: usize,
    /// Defining nodes (ids of the input mesh) of the coarsened patches.
    pub coarsened_nodes: Vec<usize>,
}

/// Eligible patch records, unsorted.
pub fn eligible_patches(
    mesh: &PolyMesh,
    sol: &SolutionField,
    material: &Material,
    kind: IndicatorKind,
    exec: Execution,
) -> Result<Vec<PatchRecord>> {
    let tol = mesh.geo_tol();
    let records = patch_indicators(mesh, sol, material, kind, exec)?;
    let ok = exec.map_slice(&records, |r| {
        r.eligible && r.indicator.is_finite() && check_eligibility(mesh, &mesh.patch(r.defining_node), tol)
    });
    Ok(records
        .into_iter()
        .zip(ok)
        .map(|(mut r, ok)| {
            r.eligible = ok;
            r
        })
        .filter(|r| r.eligible)
        .collect())
}

enum Attempt {
    Done,
    Stale,
    Aborted,
}

struct StepState<'a> {
    original: &'a PolyMesh,
    work: PolyMesh,
    cur_of: Vec<Option<usize>>,
    orig_of: Vec<usize>,
    touched: Vec<bool>,
}

impl StepState<'_> {
    fn attempt(&mut self, d: usize) -> Result<Attempt> {
        if self.original.patch(d).node_ids.iter().any(|&v| self.touched[v]) {
            return Ok(Attempt::Stale);
        }
        let cur = self.cur_of[d].expect("untouched nodes keep their ids");
        match coarsen_patch(&mut self.work, cur) {
            Ok(out) => {
                for &c in &out.affected {
                    self.touched[self.orig_of[c]] = true;
                }
                let mut orig_of = vec![usize::MAX; self.work.n_nodes()];
                for (c, nc) in out.node_map.iter().enumerate() {
                    if let Some(nc) = *nc {
                        orig_of[nc] = self.orig_of[c];
                    }
                }
                self.orig_of = orig_of;
                for c in self.cur_of.iter_mut() {
                    *c = c.and_then(|x| out.node_map[x]);
                }
                Ok(Attempt::Done)
            }
            Err(Error::CoarseningAborted(_)) => Ok(Attempt::Aborted),
            Err(e) => Err(e),
        }
    }
}

/// One solve-estimate-mark-coarsen pass. Returns `NoEligiblePatches` when
/// no patch can be coarsened.
pub fn coarsen_step(
    mesh: &PolyMesh,
    sol: &SolutionField,
    material: &Material,
    config: &CoarseningConfig,
    exec: Execution,
) -> Result<(PolyMesh, StepReport)> {
    let eligible = eligible_patches(mesh, sol, material, config.indicator, exec)?;
    if eligible.is_empty() {
        return Err(Error::NoEligiblePatches);
    }
    let resolved = resolve_overlaps(mesh, &eligible);
    let marked = mark_patches(&resolved, config.threshold);
    let mut report = StepReport {
        eligible: eligible.len(),
        resolved: resolved.len(),
        marked: marked.len(),
        ..Default::default()
    };
    let n = mesh.n_nodes();
    let mut st = StepState {
        original: mesh,
        work: mesh.clone(),
        cur_of: (0..n).map(Some).collect(),
        orig_of: (0..n).collect(),
        touched: vec![false; n],
    };
    for r in &marked {
        match st.attempt(r.defining_node)? {
            Attempt::Done => {
                report.coarsened += 1;
                report.coarsened_nodes.push(r.defining_node);
            }
            Attempt::Stale => report.stale += 1,
            Attempt::Aborted => report.aborted += 1,
        }
    }
    if report.coarsened == 0 {
        for r in &resolved[marked.len()..] {
            match st.attempt(r.defining_node)? {
                Attempt::Done => {
                    report.coarsened += 1;
                    report.fallback += 1;
                    report.coarsened_nodes.push(r.defining_node);
                    break;
                }
                Attempt::Stale => report.stale += 1,
                Attempt::Aborted => report.aborted += 1,
            }
        }
    }
    if report.coarsened == 0 {
        return Err(Error::NoEligiblePatches);
    }
    report.nodes_removed = mesh.n_nodes() - st.work.n_nodes();
    report.elements_removed = mesh.n_elements() - st.work.n_elements();
    Ok((st.work, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::grid_mesh;
    use crate::mesh::{pt, Node};
    use crate::meshgen::{self, Domain, MeshKind};

    fn rec(v: usize, x: f64) -> PatchRecord {
        PatchRecord { defining_node: v, indicator: x, eligible: true }
    }

    #[test]
    fn interior_patch_is_eligible() {
        let m = grid_mesh(3);
        assert!(check_eligibility(&m, &m.patch(5), 1e-9));
    }

    #[test]
    fn straight_boundary_patch_is_eligible() {
        // bottom-edge node of a 2-wide grid: boundary nodes lie on the hull
        let m = grid_mesh(2);
        assert!(check_eligibility(&m, &m.patch(1), 1e-9));
        // the corner node patch has a single element
        assert!(!check_eligibility(&m, &m.patch(0), 1e-9));
    }

    #[test]
    fn reentrant_corner_patch_is_ineligible() {
        let d = Domain::l_shape(1.0, 0.25, vec![]).unwrap();
        let m = meshgen::generate(&d, MeshKind::Structured, 8, 0).unwrap();
        let c = (0..m.n_nodes()).find(|&v| (m.nodes[v].pos - pt(0.25, 0.25)).norm() < 1e-12).unwrap();
        assert!(m.nodes[c].is_corner);
        assert!(!check_eligibility(&m, &m.patch(c), m.geo_tol()));
    }

    #[test]
    fn overlapping_patches_keep_the_smaller() {
        let m = grid_mesh(3);
        let out = resolve_overlaps(&m, &[rec(6, 2.0), rec(5, 1.0)]);
        assert_eq!(out, vec![rec(5, 1.0)]);
        let out = resolve_overlaps(&m, &[rec(5, 1.0), rec(15, 0.5)]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn threshold_marking() {
        let list: Vec<PatchRecord> = (1..=10).map(|i| rec(i, i as f64)).collect();
        let m = mark_patches(&list, 20.0);
        assert_eq!(m.iter().map(|r| r.defining_node).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(mark_patches(&list, 100.0).len(), 10);
        assert_eq!(mark_patches(&list, 1.0).len(), 1);
        let flat: Vec<PatchRecord> = (0..7).map(|i| rec(i, 3.0)).collect();
        assert_eq!(mark_patches(&flat, 5.0).len(), 7);
        assert!(mark_patches(&[], 50.0).is_empty());
    }

    #[test]
    fn straightening_examples() {
        let on = [pt(0., 0.), pt(1., 0.), pt(2., 0.), pt(3., 0.)];
        assert_eq!(straighten_group(&on, 1e-12).unwrap(), on.to_vec());
        let bent = [pt(0., 0.), pt(0., 1.), pt(2., 1.)];
        let s = straighten_group(&bent, 1e-12).unwrap();
        assert!((s[1] - pt(2.0 / 3.0, 1.0 / 3.0)).norm() < 1e-15);
        let zig = [pt(0., 0.), pt(1., 1.), pt(2., -1.), pt(3., 1.), pt(4., 0.)];
        let s = straighten_group(&zig, 1e-12).unwrap();
        assert!((s[1].x + s[3].x - 4.0).abs() < 1e-14);
        assert!(straighten_group(&[pt(1., 1.), pt(1., 1.)], 1e-12).is_err());
    }

    #[test]
    fn mvc_untangle_reproduces_and_translates() {
        let hull = vec![pt(-5., -5.), pt(5., -5.), pt(5., 5.), pt(-5., 5.)];
        let nb = vec![pt(1., 0.), pt(0., 1.2), pt(-0.8, 0.1), pt(0.2, -1.)];
        let p = pt(0.1, 0.05);
        let same = untangle_mvc(&p, &p, &nb, &nb, &hull, 1e-12);
        assert!((same - p).norm() < 1e-14);
        let t = pt(0.3, -0.7);
        let shifted: Vec<Point> = nb.iter().map(|q| q + t).collect();
        let moved = untangle_mvc(&p, &p, &nb, &shifted, &hull, 1e-12);
        assert!((moved - (p + t)).norm() < 1e-14);
        // outside the hull: untouched
        let far = pt(9., 9.);
        assert_eq!(untangle_mvc(&far, &far, &nb, &shifted, &hull, 1e-12), far);
        // two neighbours: nearest hull point
        let two = untangle_mvc(&pt(4.5, 0.), &pt(4.5, 0.), &nb[..2], &nb[..2], &hull, 1e-12);
        assert!((two - pt(5., 0.)).norm() < 1e-14);
    }

    #[test]
    fn two_by_two_block_becomes_one_square() {
        let mut m = grid_mesh(3);
        // interior node (1, 1)
        let out = coarsen_patch(&mut m, 5).unwrap();
        assert_eq!(out.absorbed, 0);
        assert_eq!(m.n_elements(), 6);
        // centre deleted; the two domain-boundary midside nodes become
        // straight-through and are dropped, the interior ones stay hanging
        assert_eq!(m.n_nodes(), 13);
        let big = m.polygon(out.new_element);
        assert_eq!(big.len(), 6);
        assert!((geometry::signed_area(&big) - 4.0).abs() < 1e-14);
        assert!(big.contains(&pt(2., 1.)) && big.contains(&pt(1., 2.)));
        assert!(!m.nodes.iter().any(|n| n.pos == pt(1., 1.) || n.pos == pt(1., 0.) || n.pos == pt(0., 1.)));
        m.validate().unwrap();
    }

    #[test]
    fn convex_union_has_no_green_nodes() {
        let mut m = grid_mesh(4);
        let before = m.positions();
        coarsen_patch(&mut m, 12).unwrap();
        // nothing moved: every surviving node keeps a position from before
        for n in &m.nodes {
            assert!(before.contains(&n.pos));
        }
        assert!((m.total_area() - 16.0).abs() < 1e-12);
    }

    /// Two lower elements whose union has a notch at node 4, below two
    /// upper elements. With `pocket`, the upper elements also share a node
    /// inside the notch that has only two edge neighbours.
    fn notch_fixture(pocket: bool) -> PolyMesh {
        let mut p = vec![
            pt(0., 0.), pt(2., 0.), pt(4., 0.), pt(4., 2.), pt(2., 1.5), pt(0., 2.),
            pt(2., 0.8), pt(0., 4.), pt(4., 4.), pt(2., 4.),
        ];
        let mut els = vec![Element::new(vec![0, 1, 6, 4, 5]), Element::new(vec![1, 2, 3, 4, 6])];
        if pocket {
            p.push(pt(2.2, 1.9));
            els.push(Element::new(vec![5, 4, 10, 9, 7]));
            els.push(Element::new(vec![4, 3, 8, 9, 10]));
        } else {
            els.push(Element::new(vec![5, 4, 9, 7]));
            els.push(Element::new(vec![4, 3, 8, 9]));
        }
        let nodes: Vec<Node> = p.iter().map(|&q| Node::interior(q)).collect();
        let mut m = PolyMesh::new(nodes, els).unwrap();
        for v in [0, 1, 2, 3, 5, 7, 8, 9] {
            m.nodes[v].on_boundary = true;
        }
        for v in [0, 2, 7, 8] {
            m.nodes[v].is_corner = true;
        }
        m.validate().unwrap();
        m
    }

    #[test]
    fn notch_patch_is_straightened() {
        let mut m = notch_fixture(false);
        // patch of node 6: node 6 is red, node 4 green, the rest blue
        let out = coarsen_patch(&mut m, 6).unwrap();
        m.validate().unwrap();
        assert!((m.total_area() - 16.0).abs() < 1e-12);
        assert_eq!((out.absorbed, out.relocated), (0, 0));
        // node 4 sits midway along the hull edge; node 1 became redundant
        assert!(m.nodes.iter().any(|n| (n.pos - pt(2., 2.)).norm() < 1e-12));
        assert_eq!((m.n_nodes(), m.n_elements()), (8, 3));
    }

    #[test]
    fn trapped_node_that_cannot_be_untangled_aborts() {
        let mut m = notch_fixture(true);
        let before = m.clone();
        assert!(matches!(coarsen_patch(&mut m, 6), Err(Error::CoarseningAborted(_))));
        assert_eq!(m, before);
    }

    #[test]
    fn rollback_on_failure() {
        let mut m = grid_mesh(2);
        let before = m.clone();
        // corner node: single element patch
        assert!(coarsen_patch(&mut m, 0).is_err());
        assert_eq!(m, before);
    }

    #[test]
    fn union_loop_detects_pinch() {
        let m = grid_mesh(2);
        let diag: BTreeSet<usize> = [0, 3].into_iter().collect();
        assert!(union_loop(&m, &diag).is_none());
        let all: BTreeSet<usize> = (0..4).collect();
        assert_eq!(union_loop(&m, &all).unwrap().len(), 8);
    }
}
