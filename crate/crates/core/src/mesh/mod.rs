//! Polygonal mesh data model and adjacency queries.
//!
//! Node and element ids are their indices in `PolyMesh::nodes` and
//! `PolyMesh::elements`. Elements list their vertices counter-clockwise;
//! consecutive collinear vertices (hanging nodes) are allowed.

pub mod geometry;
pub mod io;

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
pub use geometry::{pt, Point, PointLocation};
use geometry::{centroid_area, is_simple_polygon, is_straight_through};

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub pos: Point,
    pub on_boundary: bool,
    /// Geometric corners and nodes that boundary conditions rely on. These
    /// are never moved or removed by coarsening.
    pub is_corner: bool,
}

impl Node {
    pub fn interior(pos: Point) -> Self {
        Node { pos, on_boundary: false, is_corner: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub vertices: Vec<usize>,
}

impl Element {
    pub fn new(vertices: Vec<usize>) -> Self {
        Element { vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Directed edges (v_i, v_{i+1}) in CCW order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

/// All elements incident to one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub defining_node: usize,
    pub element_ids: Vec<usize>,
    /// Sorted union of the member elements' vertices.
    pub node_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyMesh {
    pub nodes: Vec<Node>,
    pub elements: Vec<Element>,
    node_to_elements: Vec<Vec<usize>>,
}

impl PolyMesh {
    /// Builds a mesh, reversing any clockwise element and deriving adjacency.
    pub fn new(nodes: Vec<Node>, elements: Vec<Element>) -> Result<Self> {
        let mut mesh = PolyMesh { nodes, elements, node_to_elements: Vec::new() };
        for e in 0..mesh.elements.len() {
            if mesh.elements[e].vertices.iter().any(|&v| v >= mesh.nodes.len()) {
                return Err(Error::InvalidMesh(format!(
                    "element {e} references a missing node"
                )));
            }
            if geometry::signed_area(&mesh.polygon(e)) < 0.0 {
                mesh.elements[e].vertices.reverse();
            }
        }
        mesh.build_adjacency()?;
        Ok(mesh)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Recomputes node→element incidence from the element lists.
    pub fn build_adjacency(&mut self) -> Result<()> {
        let mut n2e = vec![Vec::new(); self.nodes.len()];
        for (e, el) in self.elements.iter().enumerate() {
            for &v in &el.vertices {
                let slot = n2e.get_mut(v).ok_or_else(|| {
                    Error::InvalidMesh(format!("element {e} references missing node {v}"))
                })?;
                if slot.last() != Some(&e) {
                    slot.push(e);
                }
            }
        }
        self.node_to_elements = n2e;
        Ok(())
    }

    pub fn node_elements(&self, v: usize) -> &[usize] {
        &self.node_to_elements[v]
    }

    /// Unique undirected edges as (min, max) pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let set: BTreeSet<(usize, usize)> = self
            .elements
            .iter()
            .flat_map(|el| el.edges().map(|(a, b)| (a.min(b), a.max(b))))
            .collect();
        set.into_iter().collect()
    }

    pub fn polygon(&self, e: usize) -> Vec<Point> {
        self.elements[e].vertices.iter().map(|&v| self.nodes[v].pos).collect()
    }

    pub fn centroid_area(&self, e: usize) -> Result<(Point, f64)> {
        centroid_area(&self.polygon(e)).map_err(|_| Error::DegenerateElement(e))
    }

    pub fn area(&self, e: usize) -> f64 {
        geometry::signed_area(&self.polygon(e))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.elements.len()).map(|e| self.area(e)).sum()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.nodes.iter().map(|n| n.pos).collect()
    }

    /// Diagonal of the node bounding box; the length scale for tolerances.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = geometry::bbox(&self.positions());
        (hi - lo).norm()
    }

    pub fn geo_tol(&self) -> f64 {
        geometry::GEO_REL_TOL * self.diameter()
    }

    pub fn patch(&self, node: usize) -> Patch {
        let element_ids = self.node_to_elements[node].clone();
        let mut nodes: Vec<usize> = element_ids
            .iter()
            .flat_map(|&e| self.elements[e].vertices.iter().copied())
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        Patch { defining_node: node, element_ids, node_ids: nodes }
    }

    /// Elements sharing at least one node with `e` (excluding `e`).
    pub fn element_neighbours(&self, e: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.elements[e]
            .vertices
            .iter()
            .flat_map(|&v| self.node_to_elements[v].iter().copied())
            .filter(|&o| o != e)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Nodes sharing an element edge with `v`, sorted.
    pub fn edge_neighbours(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &e in &self.node_to_elements[v] {
            let vs = &self.elements[e].vertices;
            let n = vs.len();
            if let Some(i) = vs.iter().position(|&x| x == v) {
                out.push(vs[(i + n - 1) % n]);
                out.push(vs[(i + 1) % n]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Directed element edges that have no reversed twin, i.e. lie on the
    /// domain boundary.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for el in &self.elements {
            for (a, b) in el.edges() {
                *count.entry((a, b)).or_default() += 1;
            }
        }
        let mut out: Vec<(usize, usize)> = count
            .keys()
            .filter(|&&(a, b)| !count.contains_key(&(b, a)))
            .copied()
            .collect();
        out.sort_unstable();
        out
    }

    /// Boundary loops with straight-through vertices removed, each rotated
    /// to start at its lexicographically smallest vertex; loops sorted.
    /// Two meshes of the same domain produce equal outlines up to `tol`.
    pub fn boundary_outline(&self, tol: f64) -> Vec<Vec<Point>> {
        let edges = self.boundary_edges();
        let next: HashMap<usize, usize> = edges.iter().copied().collect();
        let mut seen = std::collections::HashSet::new();
        let mut loops = Vec::new();
        for &(start, _) in &edges {
            if seen.contains(&start) {
                continue;
            }
            let mut lp = Vec::new();
            let mut v = start;
            while seen.insert(v) {
                lp.push(self.nodes[v].pos);
                match next.get(&v) {
                    Some(&w) => v = w,
                    None => break,
                }
            }
            let mut changed = true;
            while changed && lp.len() > 3 {
                changed = false;
                let n = lp.len();
                for i in 0..n {
                    if is_straight_through(&lp[(i + n - 1) % n], &lp[i], &lp[(i + 1) % n], tol) {
                        lp.remove(i);
                        changed = true;
                        break;
                    }
                }
            }
            let k = (0..lp.len())
                .min_by(|&a, &b| lp[a].x.total_cmp(&lp[b].x).then(lp[a].y.total_cmp(&lp[b].y)))
                .unwrap_or(0);
            lp.rotate_left(k);
            loops.push(lp);
        }
        loops.sort_by(|a, b| a[0].x.total_cmp(&b[0].x).then(a[0].y.total_cmp(&b[0].y)));
        loops
    }

    /// Checks every element: at least three distinct vertices, simple,
    /// strictly positive area.
    pub fn check_elements(&self, tol: f64) -> Result<()> {
        for e in 0..self.elements.len() {
            self.check_element(e, tol)?;
        }
        Ok(())
    }

    pub fn check_element(&self, e: usize, tol: f64) -> Result<()> {
        let el = &self.elements[e];
        let mut vs = el.vertices.clone();
        vs.sort_unstable();
        vs.dedup();
        if vs.len() != el.vertices.len() || vs.len() < 3 {
            return Err(Error::InvalidMesh(format!("element {e} has repeated or too few vertices")));
        }
        let poly = self.polygon(e);
        let area = geometry::signed_area(&poly);
        if area <= tol * tol {
            return Err(Error::InvalidMesh(format!("element {e} has non-positive area {area:e}")));
        }
        if !is_simple_polygon(&poly, tol) {
            return Err(Error::InvalidMesh(format!("element {e} is not simple")));
        }
        Ok(())
    }

    /// Conformity: each directed edge is used once, its reverse at most
    /// once, and no node sits inside an edge without being a vertex of the
    /// element owning it.
    pub fn check_conformity(&self, tol: f64) -> Result<()> {
        self.check_conformity_of(0..self.elements.len(), tol)
    }

    /// [`check_conformity`](Self::check_conformity) restricted to the edges
    /// of the given elements.
    pub fn check_conformity_of(
        &self,
        elements: impl IntoIterator<Item = usize>,
        tol: f64,
    ) -> Result<()> {
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (e, el) in self.elements.iter().enumerate() {
            for d in el.edges() {
                if owner.insert(d, e).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "directed edge {d:?} used twice"
                    )));
                }
            }
        }
        for e in elements {
            let el = &self.elements[e];
            for (a, b) in el.edges() {
                if owner.contains_key(&(b, a)) {
                    continue;
                }
                let (pa, pb) = (self.nodes[a].pos, self.nodes[b].pos);
                for &w in [a, b].iter() {
                    for &f in &self.node_to_elements[w] {
                        for &c in &self.elements[f].vertices {
                            if c == a || c == b {
                                continue;
                            }
                            let pc = self.nodes[c].pos;
                            if geometry::dist_point_segment(&pc, &pa, &pb) <= tol
                                && (pc - pa).norm() > tol
                                && (pc - pb).norm() > tol
                            {
                                return Err(Error::InvalidMesh(format!(
                                    "node {c} hangs on edge ({a}, {b}) of element {e} without being shared"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Full invariant sweep: adjacency, elements, conformity.
    pub fn validate(&self) -> Result<()> {
        let tol = self.geo_tol();
        for (v, es) in self.node_to_elements.iter().enumerate() {
            for &e in es {
                if !self.elements[e].vertices.contains(&v) {
                    return Err(Error::InvalidMesh(format!("stale adjacency {v}->{e}")));
                }
            }
        }
        self.check_elements(tol)?;
        self.check_conformity(tol)
    }

    /// Inserts every node that lies strictly inside an element edge into that
    /// element's vertex list, turning T-junctions into shared hanging nodes.
    pub fn make_conforming(&mut self, tol: f64) -> Result<()> {
        let positions = self.positions();
        // bucket nodes on a uniform grid for the edge queries
        let grid = SpatialGrid::new(&positions, tol);
        for e in 0..self.elements.len() {
            let vs = self.elements[e].vertices.clone();
            let n = vs.len();
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let (a, b) = (vs[i], vs[(i + 1) % n]);
                out.push(a);
                let (pa, pb) = (positions[a], positions[b]);
                let mut on: Vec<(f64, usize)> = grid
                    .near_segment(&pa, &pb, tol)
                    .into_iter()
                    .filter(|&c| c != a && c != b)
                    .filter_map(|c| {
                        let pc = positions[c];
                        let ab = pb - pa;
                        let t = (pc - pa).dot(&ab) / ab.norm_squared();
                        (t > 0.0
                            && t < 1.0
                            && geometry::dist_point_segment(&pc, &pa, &pb) <= tol
                            && (pc - pa).norm() > tol
                            && (pc - pb).norm() > tol)
                            .then_some((t, c))
                    })
                    .collect();
                on.sort_by(|x, y| x.0.total_cmp(&y.0));
                out.extend(on.into_iter().map(|(_, c)| c));
            }
            self.elements[e].vertices = out;
        }
        self.build_adjacency()
    }

    /// Drops nodes referenced by no element and renumbers densely. Returns
    /// the old→new node map.
    pub fn compact(&mut self) -> Vec<Option<usize>> {
        let mut used = vec![false; self.nodes.len()];
        for el in &self.elements {
            for &v in &el.vertices {
                used[v] = true;
            }
        }
        let mut map = vec![None; self.nodes.len()];
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (v, node) in self.nodes.iter().enumerate() {
            if used[v] {
                map[v] = Some(nodes.len());
                nodes.push(node.clone());
            }
        }
        for el in &mut self.elements {
            for v in &mut el.vertices {
                *v = map[*v].expect("used node");
            }
        }
        self.nodes = nodes;
        self.build_adjacency().expect("compacted ids are valid");
        map
    }
}

/// Uniform bucket grid over node positions.
pub(crate) struct SpatialGrid {
    lo: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl SpatialGrid {
    pub(crate) fn new(points: &[Point], tol: f64) -> Self {
        let (lo, hi) = geometry::bbox(points);
        let ext = (hi - lo).sup(&Point::repeat(tol.max(1e-300)));
        let target = (points.len().max(1) as f64).sqrt().ceil();
        let cell = (ext.x.max(ext.y) / target).max(4.0 * tol);
        let nx = ((ext.x / cell).ceil() as usize).max(1);
        let ny = ((ext.y / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        let mut g = SpatialGrid { lo, cell, nx, ny, buckets: Vec::new() };
        for (i, p) in points.iter().enumerate() {
            let (ix, iy) = g.index(p);
            buckets[iy * nx + ix].push(i);
        }
        g.buckets = buckets;
        g
    }

    fn index(&self, p: &Point) -> (usize, usize) {
        let ix = (((p.x - self.lo.x) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let iy = (((p.y - self.lo.y) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        (ix, iy)
    }

    /// Candidates within the bounding box of `a`–`b` inflated by `tol`.
    pub(crate) fn near_segment(&self, a: &Point, b: &Point, tol: f64) -> Vec<usize> {
        let lo = a.inf(b) - Point::repeat(tol);
        let hi = a.sup(b) + Point::repeat(tol);
        let (x0, y0) = self.index(&lo);
        let (x1, y1) = self.index(&hi);
        let mut out = Vec::new();
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                out.extend_from_slice(&self.buckets[iy * self.nx + ix]);
            }
        }
        out
    }

    pub(crate) fn near_point(&self, p: &Point, tol: f64) -> Vec<usize> {
        self.near_segment(p, p, tol)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// n×n grid of unit-spaced squares over [0, n]².
    pub(crate) fn grid_mesh(n: usize) -> PolyMesh {
        let mut nodes = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                let b = i == 0 || j == 0 || i == n || j == n;
                let c = (i == 0 || i == n) && (j == 0 || j == n);
                nodes.push(Node { pos: pt(i as f64, j as f64), on_boundary: b, is_corner: c });
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut els = Vec::new();
        for j in 0..n {
            for i in 0..n {
                els.push(Element::new(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]));
            }
        }
        PolyMesh::new(nodes, els).unwrap()
    }

    #[test]
    fn single_square_adjacency() {
        let m = grid_mesh(1);
        for v in 0..4 {
            assert_eq!(m.node_elements(v), &[0]);
        }
        assert_eq!(m.edges().len(), 4);
    }

    #[test]
    fn center_of_2x2_touches_all() {
        let m = grid_mesh(2);
        assert_eq!(m.node_elements(4), &[0, 1, 2, 3]);
        assert_eq!(m.patch(4).node_ids, (0..9).collect::<Vec<_>>());
        assert_eq!(m.edges().len(), 12);
    }

    #[test]
    fn clockwise_input_is_reversed() {
        let nodes = vec![
            Node::interior(pt(0., 0.)),
            Node::interior(pt(1., 0.)),
            Node::interior(pt(0., 1.)),
        ];
        let m = PolyMesh::new(nodes, vec![Element::new(vec![0, 2, 1])]).unwrap();
        assert!(m.area(0) > 0.0);
    }

    #[test]
    fn missing_node_is_rejected() {
        let nodes = vec![Node::interior(pt(0., 0.)), Node::interior(pt(1., 0.))];
        assert!(matches!(
            PolyMesh::new(nodes, vec![Element::new(vec![0, 1, 2])]),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn conformity_detects_t_junction_and_repairs_it() {
        // two unit squares on the left, one 1×2 rectangle on the right
        let p = [
            (0., 0.), (1., 0.), (2., 0.), (0., 1.), (1., 1.), (0., 2.), (1., 2.), (2., 2.),
        ];
        let nodes = p.iter().map(|&(x, y)| Node::interior(pt(x, y))).collect();
        let els = vec![
            Element::new(vec![0, 1, 4, 3]),
            Element::new(vec![3, 4, 6, 5]),
            Element::new(vec![1, 2, 7, 6]),
        ];
        let mut m = PolyMesh::new(nodes, els).unwrap();
        assert!(m.check_conformity(1e-9).is_err());
        m.make_conforming(1e-9).unwrap();
        assert_eq!(m.elements[2].vertices, vec![1, 2, 7, 6, 4]);
        m.validate().unwrap();
    }

    #[test]
    fn boundary_outline_ignores_hanging_nodes() {
        let m = grid_mesh(3);
        let o = m.boundary_outline(1e-9);
        assert_eq!(o.len(), 1);
        assert_eq!(o[0], vec![pt(0., 0.), pt(3., 0.), pt(3., 3.), pt(0., 3.)]);
    }

    #[test]
    fn compact_renumbers() {
        let mut m = grid_mesh(2);
        m.elements.truncate(1);
        m.build_adjacency().unwrap();
        let map = m.compact();
        assert_eq!(m.n_nodes(), 4);
        assert_eq!((map[3], map[4]), (Some(2), Some(3)));
        assert_eq!(map[8], None);
    }
}
