//! Weighted undirected graphs and the transshipment vocabulary.
//!
//! Sign convention: `(Af)_v` is inflow minus outflow at `v`, and a flow value
//! `f_e > 0` on edge `(u, v)` moves mass from `u` to `v`. Sources carry
//! negative demand.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Relative tolerance used for demand balance and dual feasibility.
pub const REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

impl Edge {
    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        let mut out = Vec::with_capacity(edges.len());
        for (id, &(u, v, w)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::Structural(format!("edge {id} endpoint out of range")));
            }
            if u == v {
                return Err(Error::Structural(format!("edge {id} is a self-loop")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Structural(format!("edge {id} has non-positive weight {w}")));
            }
            adj[u].push((v, id));
            adj[v].push((u, id));
            out.push(Edge { u, v, w });
        }
        Ok(Graph { n, edges: out, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> Edge {
        self.edges[e]
    }

    /// `(neighbor, edge id)` pairs incident to `v`.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    pub fn max_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).fold(0.0, f64::max)
    }

    pub fn min_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).fold(f64::INFINITY, f64::min)
    }

    /// Component label per vertex and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut comp = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut stack = Vec::new();
        for r in 0..self.n {
            if comp[r] != usize::MAX {
                continue;
            }
            comp[r] = count;
            stack.push(r);
            while let Some(x) = stack.pop() {
                for &(y, _) in &self.adj[x] {
                    if comp[y] == usize::MAX {
                        comp[y] = count;
                        stack.push(y);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.components().1 == 1
    }

    pub fn require_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(Error::Disconnected)
        }
    }

    /// Subgraph induced by `vertices` (in the given order) plus the original id
    /// of every kept edge.
    pub fn induced(&self, vertices: &[usize]) -> (Graph, Vec<usize>) {
        let mut local = vec![usize::MAX; self.n];
        for (i, &v) in vertices.iter().enumerate() {
            local[v] = i;
        }
        let mut edges = Vec::new();
        let mut ids = Vec::new();
        for (id, e) in self.edges.iter().enumerate() {
            if local[e.u] != usize::MAX && local[e.v] != usize::MAX {
                edges.push((local[e.u], local[e.v], e.w));
                ids.push(id);
            }
        }
        let g = Graph::new(vertices.len(), edges).expect("induced subgraph of a valid graph");
        (g, ids)
    }

    /// Subgraph on all vertices keeping only the listed edges.
    pub fn edge_subgraph(&self, keep: &[usize]) -> Graph {
        let edges = keep.iter().map(|&e| (self.edges[e].u, self.edges[e].v, self.edges[e].w)).collect();
        Graph::new(self.n, edges).expect("edge subgraph of a valid graph")
    }
}

pub fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Balance tolerance `1e-9 * ||b||_1`.
pub fn balance_tol(b: &[f64]) -> f64 {
    REL_TOL * l1(b)
}

pub fn check_balanced(b: &[f64]) -> Result<()> {
    let sum: f64 = b.iter().sum();
    let tol = balance_tol(b);
    if sum.abs() > tol {
        return Err(Error::Unbalanced { sum, tol });
    }
    Ok(())
}

pub fn is_integral(b: &[f64]) -> bool {
    b.iter().all(|x| x.fract() == 0.0)
}

pub fn divergence(g: &Graph, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != g.m() {
        return Err(Error::Structural(format!("flow has {} entries for {} edges", f.len(), g.m())));
    }
    let mut d = vec![0.0; g.n()];
    for (e, &x) in g.edges().iter().zip(f) {
        d[e.v] += x;
        d[e.u] -= x;
    }
    Ok(d)
}

pub fn flow_cost(g: &Graph, f: &[f64]) -> f64 {
    g.edges().iter().zip(f).map(|(e, x)| e.w * x.abs()).sum()
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    d: f64,
    v: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.d.total_cmp(&self.d).then_with(|| other.v.cmp(&self.v))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source shortest paths, with the parent edge of every reached vertex.
#[derive(Clone, Debug)]
pub struct ShortestPaths {
    pub dist: Vec<f64>,
    pub parent: Vec<Option<usize>>,
    pub parent_edge: Vec<Option<usize>>,
}

pub fn shortest_paths(g: &Graph, sources: &[usize]) -> Result<ShortestPaths> {
    if sources.is_empty() {
        return Err(Error::InvalidParam("empty source set".into()));
    }
    let n = g.n();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![None; n];
    let mut parent_edge = vec![None; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if s >= n {
            return Err(Error::Structural(format!("source {s} out of range")));
        }
        dist[s] = 0.0;
        heap.push(HeapItem { d: 0.0, v: s });
    }
    while let Some(HeapItem { d, v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(y, e) in g.neighbors(v) {
            let nd = d + g.edge(e).w;
            if nd < dist[y] {
                dist[y] = nd;
                parent[y] = Some(v);
                parent_edge[y] = Some(e);
                heap.push(HeapItem { d: nd, v: y });
            }
        }
    }
    Ok(ShortestPaths { dist, parent, parent_edge })
}

pub fn dijkstra(g: &Graph, sources: &[usize]) -> Result<(Vec<f64>, Vec<Option<usize>>)> {
    let sp = shortest_paths(g, sources)?;
    Ok((sp.dist, sp.parent))
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        match self.rank[a].cmp(&self.rank[b]) {
            Ordering::Less => self.parent[a] = b,
            Ordering::Greater => self.parent[b] = a,
            Ordering::Equal => {
                self.parent[b] = a;
                self.rank[a] += 1;
            }
        }
        true
    }
}

/// Minimum spanning forest by Kruskal; ties broken by edge id.
pub fn minimum_spanning_forest(g: &Graph) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.m()).collect();
    order.sort_by(|&a, &b| g.edge(a).w.total_cmp(&g.edge(b).w).then(a.cmp(&b)));
    let mut uf = UnionFind::new(g.n());
    let mut out = Vec::with_capacity(g.n().saturating_sub(1));
    for e in order {
        let Edge { u, v, .. } = g.edge(e);
        if uf.union(u, v) {
            out.push(e);
        }
    }
    out.sort_unstable();
    out
}

pub fn minimum_spanning_tree(g: &Graph) -> Result<Vec<usize>> {
    g.require_connected()?;
    Ok(minimum_spanning_forest(g))
}

/// Rooted view of a spanning forest given as edge ids.
pub(crate) struct RootedForest {
    pub order: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub parent_edge: Vec<Option<usize>>,
}

pub(crate) fn root_forest(g: &Graph, tree: &[usize]) -> Result<RootedForest> {
    let n = g.n();
    let mut adj = vec![Vec::new(); n];
    for &e in tree {
        if e >= g.m() {
            return Err(Error::Structural(format!("tree edge {e} out of range")));
        }
        let Edge { u, v, .. } = g.edge(e);
        adj[u].push((v, e));
        adj[v].push((u, e));
    }
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut parent = vec![None; n];
    let mut parent_edge = vec![None; n];
    let mut used = 0usize;
    for r in 0..n {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        order.push(r);
        let mut head = order.len() - 1;
        while head < order.len() {
            let x = order[head];
            head += 1;
            for &(y, e) in &adj[x] {
                if Some(e) == parent_edge[x] {
                    continue;
                }
                if seen[y] {
                    return Err(Error::Structural("tree edge set contains a cycle".into()));
                }
                seen[y] = true;
                parent[y] = Some(x);
                parent_edge[y] = Some(e);
                used += 1;
                order.push(y);
            }
        }
    }
    if used != tree.len() {
        return Err(Error::Structural("tree edge set contains a cycle".into()));
    }
    Ok(RootedForest { order, parent, parent_edge })
}

/// Routes `b` on a forest: each component must be balanced.
pub(crate) fn route_on_forest(g: &Graph, tree: &[usize], b: &[f64]) -> Result<Vec<f64>> {
    let rf = root_forest(g, tree)?;
    let mut sub = b.to_vec();
    let mut f = vec![0.0; g.m()];
    for &v in rf.order.iter().rev() {
        if let (Some(p), Some(e)) = (rf.parent[v], rf.parent_edge[v]) {
            let amount = sub[v];
            f[e] = if g.edge(e).v == v { amount } else { -amount };
            sub[p] += amount;
        }
    }
    Ok(f)
}

pub fn route_on_tree(g: &Graph, tree: &[usize], b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != g.n() {
        return Err(Error::Structural("demand length mismatch".into()));
    }
    check_balanced(b)?;
    if g.n() > 0 && tree.len() != g.n() - 1 {
        return Err(Error::Structural("tree does not span the graph".into()));
    }
    route_on_forest(g, tree, b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SsspPotential {
    pub phi: Vec<f64>,
    pub sources: Vec<usize>,
    pub alpha: f64,
}

pub fn tree_sssp_potential(g: &Graph, sources: &[usize]) -> Result<SsspPotential> {
    if g.n() > 0 && (g.m() != g.n() - 1 || !g.is_connected()) {
        return Err(Error::Structural("input is not a tree".into()));
    }
    let (dist, _) = dijkstra(g, sources)?;
    Ok(SsspPotential { phi: dist, sources: sources.to_vec(), alpha: 1.0 })
}

pub fn validate_potential(g: &Graph, phi: &[f64]) -> bool {
    phi.len() == g.n()
        && phi.iter().all(|x| x.is_finite())
        && g.edges().iter().all(|e| (phi[e.u] - phi[e.v]).abs() <= e.w * (1.0 + REL_TOL))
}

/// Checks equal value on `sources`, the `alpha` lower bound against `exact`
/// distances (relative tolerance `rel_tol`) and edge feasibility.
pub fn validate_sssp_potential_tol(
    g: &Graph,
    phi: &[f64],
    sources: &[usize],
    alpha: f64,
    exact: &[f64],
    rel_tol: f64,
) -> bool {
    if sources.is_empty() || !validate_potential(g, phi) || exact.len() != g.n() {
        return false;
    }
    let base = phi[sources[0]];
    let scale = exact.iter().filter(|d| d.is_finite()).fold(0.0f64, |a, &d| a.max(d));
    if sources.iter().any(|&s| (phi[s] - base).abs() > rel_tol * scale) {
        return false;
    }
    (0..g.n()).all(|v| !exact[v].is_finite() || phi[v] - base >= exact[v] / alpha - rel_tol * exact[v])
}

pub fn validate_sssp_potential(g: &Graph, phi: &[f64], sources: &[usize], alpha: f64, exact: &[f64]) -> bool {
    validate_sssp_potential_tol(g, phi, sources, alpha, exact, REL_TOL)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AspectReport {
    /// Cost of routing `b` on the minimum spanning tree.
    pub z: f64,
    /// Additive shift applied to each kept edge.
    pub shift: f64,
    pub exponent: u32,
    /// Original id of every edge of the normalized graph.
    pub kept_edges: Vec<usize>,
    pub degenerate: bool,
}

pub fn normalize_aspect_ratio(g: &Graph, b: &[f64]) -> Result<(Graph, AspectReport)> {
    if b.len() != g.n() {
        return Err(Error::Structural("demand length mismatch".into()));
    }
    if !is_integral(b) {
        return Err(Error::InvalidParam("aspect-ratio normalization needs integral demands".into()));
    }
    check_balanced(b)?;
    let identity = |z: f64| AspectReport { z, shift: 0.0, exponent: 0, kept_edges: (0..g.m()).collect(), degenerate: true };
    let forest = minimum_spanning_forest(g);
    let f = route_on_forest(g, &forest, b)?;
    let ok = divergence(g, &f)?.iter().zip(b).all(|(x, y)| (x - y).abs() <= balance_tol(b));
    if !ok {
        return Err(Error::Infeasible("demand is not balanced on every component".into()));
    }
    let z = flow_cost(g, &f);
    if z == 0.0 || g.n() < 2 {
        return Ok((g.clone(), identity(z)));
    }
    let n = g.n() as f64;
    let big_m = b.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let exponent = (big_m.max(2.0).ln() / n.ln()).ceil().max(0.0) as u32;
    let shift = z / n.powi(exponent as i32 + 5);
    let mut edges = Vec::new();
    let mut kept = Vec::new();
    for (id, e) in g.edges().iter().enumerate() {
        if e.w <= z {
            edges.push((e.u, e.v, e.w + shift));
            kept.push(id);
        }
    }
    let out = Graph::new(g.n(), edges)?;
    Ok((out, AspectReport { z, shift, exponent, kept_edges: kept, degenerate: false }))
}
