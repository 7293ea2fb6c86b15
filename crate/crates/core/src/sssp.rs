//! Shortest-path trees from transshipment: random-walk rounding of a flow
//! into an expected tree, the refinement loop that certifies every distance
//! with a potential, and the recursive driver.
//!
//! Demands passed to [`expected_sssp`] follow the walk convention: `b_v >= 0`
//! off the source and `b_s = -sum`. Walk mass leaves positive vertices and
//! drains at `s`, so the flow is solved with demand `-b` in the crate's
//! inflow-minus-outflow convention.

use std::cell::Cell;
use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::PotentialOracle;
use crate::error::{Error, Result};
use crate::graph::{check_balanced, l1, shortest_paths, validate_potential, Graph, SsspPotential, UnionFind};
use crate::oracles::exact_transshipment;
use crate::pipeline::{build_preconditioner, PipelineConfig, Preconditioner};
use crate::rng::derive_seed;
use crate::solver::{scale_to_feasible, solve_transshipment};
use crate::sparsify::{build_ultra_spanner, contract_set, sparsified_sssp_potential, SpannerConfig};

#[derive(Clone, Debug)]
pub struct TsSolution {
    pub flow: Vec<f64>,
    pub potential: Vec<f64>,
}

/// Transshipment solver used by the tree constructions. Demands are in the
/// crate's convention; the returned flow must be acyclic.
pub trait TsSolver {
    fn solve(&mut self, g: &Graph, b: &[f64], eps: f64) -> Result<TsSolution>;

    /// Requests more accurate solves from now on; false if that is not
    /// possible.
    fn refine(&mut self) -> bool {
        false
    }
}

/// Exact min-cost flow.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactSolver;

impl TsSolver for ExactSolver {
    fn solve(&mut self, g: &Graph, b: &[f64], _eps: f64) -> Result<TsSolution> {
        let r = exact_transshipment(g, b)?;
        Ok(TsSolution {
            flow: r.witness_flow.unwrap_or_else(|| vec![0.0; g.m()]),
            potential: r.witness_potential.unwrap_or_else(|| vec![0.0; g.n()]),
        })
    }
}

/// MWU pipeline solver. Requests below `epsilon_floor` are solved at the
/// floor, and every [`TsSolver::refine`] divides the effective accuracy by 4.
/// Effective accuracies below `1/n^2` go to the exact solver. A pinned
/// preconditioner is reused whenever its graph comes back.
#[derive(Clone, Debug)]
pub struct PipelineSolver {
    pub config: PipelineConfig,
    pub epsilon_floor: f64,
    pub solves: usize,
    pub iterations: usize,
    pub refinements: u32,
    pinned: Option<(Graph, Preconditioner)>,
}

impl PipelineSolver {
    pub fn new(config: PipelineConfig, epsilon_floor: f64) -> Self {
        PipelineSolver { config, epsilon_floor, solves: 0, iterations: 0, refinements: 0, pinned: None }
    }

    pub fn pin(&mut self, g: Graph, pre: Preconditioner) {
        self.pinned = Some((g, pre));
    }
}

impl TsSolver for PipelineSolver {
    fn solve(&mut self, g: &Graph, b: &[f64], eps: f64) -> Result<TsSolution> {
        g.require_connected()?;
        check_balanced(b)?;
        self.solves += 1;
        let n = g.n();
        if l1(b) == 0.0 || n < 2 {
            return Ok(TsSolution { flow: vec![0.0; g.m()], potential: vec![0.0; n] });
        }
        let eps = eps.max(self.epsilon_floor).min(1.0) / 4f64.powi(self.refinements as i32);
        if eps < 1.0 / (n as f64 * n as f64) {
            return ExactSolver.solve(g, b, eps);
        }
        let fresh;
        let pre = match &self.pinned {
            Some((h, pre)) if h == g => pre,
            _ => {
                let mut cfg = self.config.clone();
                cfg.seed = derive_seed(self.config.seed, 41, self.solves as u64, 0);
                fresh = build_preconditioner(g, &crate::embedding::DijkstraOracle, &cfg)?;
                &fresh
            }
        };
        let rep = solve_transshipment(g, b, eps, &pre.matrix, pre.kappa, &self.config.solver)?;
        self.iterations += rep.iterations;
        Ok(TsSolution { flow: rep.flow, potential: rep.potential })
    }

    fn refine(&mut self) -> bool {
        if self.refinements >= 40 {
            return false;
        }
        self.refinements += 1;
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub edge: usize,
    pub flow: f64,
}

/// Support of a signed edge flow as a digraph.
#[derive(Clone, Debug)]
pub struct FlowDigraph {
    pub arcs: Vec<FlowArc>,
    pub out_arcs: Vec<Vec<usize>>,
    pub in_arcs: Vec<Vec<usize>>,
    pub f_in: Vec<f64>,
    pub f_out: Vec<f64>,
    /// Vertices with a flow-supported path to `s`.
    pub reach: Vec<bool>,
}

impl FlowDigraph {
    pub fn new(g: &Graph, f: &[f64], s: usize) -> Result<Self> {
        if f.len() != g.m() {
            return Err(Error::Structural("flow length mismatch".into()));
        }
        if s >= g.n() {
            return Err(Error::Structural(format!("source {s} out of range")));
        }
        let n = g.n();
        let mut d = FlowDigraph {
            arcs: Vec::new(),
            out_arcs: vec![Vec::new(); n],
            in_arcs: vec![Vec::new(); n],
            f_in: vec![0.0; n],
            f_out: vec![0.0; n],
            reach: vec![false; n],
        };
        for (id, (e, &x)) in g.edges().iter().zip(f).enumerate() {
            if x == 0.0 {
                continue;
            }
            let (from, to) = if x > 0.0 { (e.u, e.v) } else { (e.v, e.u) };
            let a = d.arcs.len();
            d.arcs.push(FlowArc { from, to, edge: id, flow: x.abs() });
            d.out_arcs[from].push(a);
            d.in_arcs[to].push(a);
            d.f_out[from] += x.abs();
            d.f_in[to] += x.abs();
        }
        let mut queue = VecDeque::from([s]);
        d.reach[s] = true;
        while let Some(v) = queue.pop_front() {
            for &a in &d.in_arcs[v] {
                let u = d.arcs[a].from;
                if !d.reach[u] {
                    d.reach[u] = true;
                    queue.push_back(u);
                }
            }
        }
        Ok(d)
    }

    pub fn is_acyclic(&self) -> bool {
        let n = self.out_arcs.len();
        let mut indeg: Vec<usize> = self.in_arcs.iter().map(|a| a.len()).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &a in &self.out_arcs[v] {
                let t = self.arcs[a].to;
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    stack.push(t);
                }
            }
        }
        seen == n
    }
}

/// One sampled out-arc per vertex: `(head, edge id)`, `None` at the source
/// and at vertices without outflow.
pub fn sample_arcs(d: &FlowDigraph, s: usize, rng: &mut impl Rng) -> Vec<Option<(usize, usize)>> {
    (0..d.out_arcs.len())
        .map(|u| {
            if u == s || d.out_arcs[u].is_empty() {
                return None;
            }
            let mut x = rng.gen::<f64>() * d.f_out[u];
            let arcs = &d.out_arcs[u];
            let mut pick = arcs[arcs.len() - 1];
            for &a in arcs {
                x -= d.arcs[a].flow;
                if x < 0.0 {
                    pick = a;
                    break;
                }
            }
            Some((d.arcs[pick].to, d.arcs[pick].edge))
        })
        .collect()
}

/// Components of the one-out digraph with the source's self-loop.
#[derive(Clone, Debug)]
pub struct ArcComponents {
    pub comp: Vec<usize>,
    pub root: Vec<usize>,
    /// Total weight of the cycle of each component; zero for the source and
    /// for components ending in a vertex without outflow.
    pub cycle_weight: Vec<f64>,
    pub on_cycle: Vec<bool>,
    /// Arc distance from each vertex to its component's cycle.
    pub to_cycle: Vec<f64>,
    /// Arcs kept in the component trees, as edge ids.
    pub tree_edges: Vec<usize>,
}

pub fn arc_components(g: &Graph, s: usize, next: &[Option<(usize, usize)>]) -> ArcComponents {
    let n = g.n();
    let mut on_cycle = vec![false; n];
    let mut state = vec![0u8; n];
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        loop {
            if state[v] == 1 {
                let pos = path.iter().position(|&x| x == v).expect("vertex on current path");
                for &x in &path[pos..] {
                    on_cycle[x] = true;
                }
                break;
            }
            if state[v] == 2 {
                break;
            }
            state[v] = 1;
            path.push(v);
            match next[v] {
                Some((w, _)) => v = w,
                None => break,
            }
        }
        for x in path {
            state[x] = 2;
        }
    }
    on_cycle[s] = true;

    let mut uf = UnionFind::new(n);
    for u in 0..n {
        if let Some((v, _)) = next[u] {
            uf.union(u, v);
        }
    }
    let mut label: HashMap<usize, usize> = HashMap::new();
    let mut comp = vec![0; n];
    for v in 0..n {
        let r = uf.find(v);
        let k = label.len();
        comp[v] = *label.entry(r).or_insert(k);
    }
    let k = label.len();
    let mut root = vec![usize::MAX; k];
    let mut cycle_weight = vec![0.0; k];
    for v in 0..n {
        let c = comp[v];
        match next[v] {
            None => root[c] = v,
            Some((_, e)) if on_cycle[v] => {
                cycle_weight[c] += g.edge(e).w;
                if root[c] == usize::MAX || (root[c] > v && next[root[c]].is_some()) {
                    root[c] = v;
                }
            }
            _ => {}
        }
    }

    let mut to_cycle = vec![f64::NAN; n];
    for v in 0..n {
        if on_cycle[v] || next[v].is_none() {
            to_cycle[v] = 0.0;
        }
    }
    for start in 0..n {
        let mut path = Vec::new();
        let mut v = start;
        while to_cycle[v].is_nan() {
            path.push(v);
            v = next[v].expect("off-cycle vertices have an arc").0;
        }
        while let Some(u) = path.pop() {
            let (w, e) = next[u].expect("off-cycle vertices have an arc");
            to_cycle[u] = g.edge(e).w + to_cycle[w];
        }
    }

    let tree_edges = (0..n)
        .filter_map(|u| next[u].filter(|_| root[comp[u]] != u).map(|(_, e)| e))
        .collect();
    ArcComponents { comp, root, cycle_weight, on_cycle, to_cycle, tree_edges }
}

/// One level of the reduction: the graph on components with composite edge
/// weights, its demands and the input edge behind every edge.
#[derive(Clone, Debug)]
pub struct Reduced {
    pub graph: Graph,
    pub demand: Vec<f64>,
    pub source: usize,
    pub origin: Vec<usize>,
}

pub fn reduce(g: &Graph, s: usize, b: &[f64], ac: &ArcComponents) -> Result<Reduced> {
    let k = ac.root.len();
    let mut demand = vec![0.0; k];
    for (v, &x) in b.iter().enumerate() {
        demand[ac.comp[v]] += x;
    }
    let mut best: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    for (id, e) in g.edges().iter().enumerate() {
        let (a, c) = (ac.comp[e.u], ac.comp[e.v]);
        if a == c {
            continue;
        }
        let w = e.w + ac.to_cycle[e.u] + ac.to_cycle[e.v] + ac.cycle_weight[a] + ac.cycle_weight[c];
        let slot = best.entry((a.min(c), a.max(c))).or_insert((w, id));
        if w < slot.0 {
            *slot = (w, id);
        }
    }
    let mut list: Vec<((usize, usize), (f64, usize))> = best.into_iter().collect();
    list.sort_by_key(|&(key, _)| key);
    let origin = list.iter().map(|&(_, (_, id))| id).collect();
    let graph = Graph::new(k, list.into_iter().map(|((a, c), (w, _))| (a, c, w)).collect())?;
    Ok(Reduced { graph, demand, source: ac.comp[s], origin })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsssConfig {
    /// Graphs with at most this many vertices are solved exactly.
    pub base_size: usize,
    /// Accept flows with directed cycles instead of rejecting them.
    pub allow_cyclic: bool,
}

impl Default for EsssConfig {
    fn default() -> Self {
        EsssConfig { base_size: 2, allow_cyclic: false }
    }
}

/// Shortest-path distances and parent edges inside a tree.
#[derive(Clone, Debug)]
pub struct TreePaths {
    pub dist: Vec<f64>,
    pub parent_edge: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsssTree {
    pub root: usize,
    pub edges: Vec<usize>,
}

impl EsssTree {
    /// Distances from the root along tree edges; `None` if the edges contain
    /// a cycle or leave the root's component.
    pub fn paths(&self, g: &Graph) -> Option<TreePaths> {
        let n = g.n();
        let mut adj = vec![Vec::new(); n];
        for &e in &self.edges {
            let ed = g.edge(e);
            adj[ed.u].push((ed.v, e));
            adj[ed.v].push((ed.u, e));
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut parent_edge = vec![None; n];
        dist[self.root] = 0.0;
        let mut queue = VecDeque::from([self.root]);
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &(y, e) in &adj[v] {
                if Some(e) == parent_edge[v] {
                    continue;
                }
                if dist[y].is_finite() {
                    return None;
                }
                dist[y] = dist[v] + g.edge(e).w;
                parent_edge[y] = Some(e);
                reached += 1;
                queue.push_back(y);
            }
        }
        (reached == self.edges.len() + 1).then_some(TreePaths { dist, parent_edge })
    }

    /// `sum_v b_v d_T(s, v)` over vertices with positive demand.
    pub fn weighted_cost(&self, g: &Graph, b: &[f64]) -> f64 {
        let p = self.paths(g).expect("valid tree");
        b.iter().zip(&p.dist).filter(|(x, _)| **x > 0.0).map(|(x, d)| x * d).sum()
    }
}

fn check_walk_demand(g: &Graph, s: usize, b: &[f64]) -> Result<()> {
    if b.len() != g.n() {
        return Err(Error::Structural("demand length mismatch".into()));
    }
    if s >= g.n() {
        return Err(Error::Structural(format!("source {s} out of range")));
    }
    check_balanced(b)?;
    if let Some(v) = (0..g.n()).find(|&v| v != s && b[v] < 0.0) {
        return Err(Error::InvalidParam(format!("negative demand {} at non-source vertex {v}", b[v])));
    }
    g.require_connected()
}

pub fn level_epsilon(eps: f64, n: usize) -> f64 {
    eps / (3.0 * (n.max(2) as f64).log2().ceil())
}

/// Random tree whose demand-weighted expected distances from `s` are within
/// `1 + eps` of optimal when the solver meets its accuracy contract.
pub fn expected_sssp(
    g: &Graph,
    s: usize,
    b: &[f64],
    eps: f64,
    solver: &mut dyn TsSolver,
    cfg: &EsssConfig,
    seed: u64,
) -> Result<EsssTree> {
    check_walk_demand(g, s, b)?;
    let eps_level = level_epsilon(eps, g.n());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = esssp_level(g, s, b, None, eps_level, solver, cfg, &mut rng)?;
    Ok(EsssTree { root: s, edges })
}

/// [`expected_sssp`] with the top-level flow supplied by the caller.
pub fn expected_sssp_from_flow(
    g: &Graph,
    s: usize,
    b: &[f64],
    flow: &[f64],
    eps: f64,
    solver: &mut dyn TsSolver,
    cfg: &EsssConfig,
    seed: u64,
) -> Result<EsssTree> {
    check_walk_demand(g, s, b)?;
    let eps_level = level_epsilon(eps, g.n());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = esssp_level(g, s, b, Some(flow), eps_level, solver, cfg, &mut rng)?;
    Ok(EsssTree { root: s, edges })
}

#[allow(clippy::too_many_arguments)]
fn esssp_level(
    g: &Graph,
    s: usize,
    b: &[f64],
    flow: Option<&[f64]>,
    eps: f64,
    solver: &mut dyn TsSolver,
    cfg: &EsssConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if l1(b) == 0.0 {
        return Ok(Vec::new());
    }
    if g.n() <= cfg.base_size {
        let sp = shortest_paths(g, &[s])?;
        return Ok(sp.parent_edge.into_iter().flatten().collect());
    }
    let solved;
    let flow = match flow {
        Some(f) => f,
        None => {
            let neg: Vec<f64> = b.iter().map(|x| -x).collect();
            solved = solver.solve(g, &neg, eps)?.flow;
            &solved
        }
    };
    let d = FlowDigraph::new(g, flow, s)?;
    if !cfg.allow_cyclic && !d.is_acyclic() {
        return Err(Error::Stage { stage: "expected-sssp", msg: "transshipment flow has a directed cycle".into() });
    }
    let next = sample_arcs(&d, s, rng);
    let ac = arc_components(g, s, &next);
    if ac.root.len() == g.n() {
        return Err(Error::Stage { stage: "expected-sssp", msg: "flow carries no mass toward the source".into() });
    }
    let red = reduce(g, s, b, &ac)?;
    let sub = esssp_level(&red.graph, red.source, &red.demand, None, eps, solver, cfg, rng)?;
    let mut edges: Vec<usize> = sub.iter().map(|&e| red.origin[e]).collect();
    edges.extend_from_slice(&ac.tree_edges);
    Ok(prune(g, s, &edges))
}

/// Edges of `edges` in the component of `s`.
fn prune(g: &Graph, s: usize, edges: &[usize]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); g.n()];
    for &e in edges {
        let ed = g.edge(e);
        adj[ed.u].push(e);
        adj[ed.v].push(e);
    }
    let mut seen = vec![false; g.n()];
    seen[s] = true;
    let mut queue = VecDeque::from([s]);
    let mut out = Vec::new();
    while let Some(v) = queue.pop_front() {
        for &e in &adj[v] {
            let y = g.edge(e).other(v);
            if !seen[y] {
                seen[y] = true;
                out.push(e);
                queue.push_back(y);
            }
        }
    }
    out.sort_unstable();
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SsspConfig {
    pub epsilon: f64,
    pub seed: u64,
    /// Graphs with at most this many edges are solved exactly.
    pub base_threshold: usize,
    /// Maximum nesting of recursive core solves.
    pub max_depth: usize,
    /// Multiplier of `log2^2(n * aspect)` in the refinement loop cap.
    pub loop_constant: f64,
    /// Accuracy floor of the pipeline transshipment solves.
    pub epsilon_floor: f64,
    pub spanner_k: Option<f64>,
    pub spanner: SpannerConfig,
    pub esssp: EsssConfig,
    pub pipeline: PipelineConfig,
}

impl Default for SsspConfig {
    fn default() -> Self {
        SsspConfig {
            epsilon: 0.2,
            seed: 0,
            base_threshold: 512,
            max_depth: 2,
            loop_constant: 1.0,
            epsilon_floor: 0.1,
            spanner_k: None,
            spanner: SpannerConfig::default(),
            esssp: EsssConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SsspResult {
    pub sources: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub parent_edge: Vec<Option<usize>>,
    /// Best distance found per vertex; bounds the tree distance from above.
    pub dist: Vec<f64>,
    pub potential: SsspPotential,
    pub rounds: usize,
}

impl SsspResult {
    /// Distances along parent edges; `None` if they do not form a tree
    /// rooted at the sources.
    pub fn tree_distances(&self, g: &Graph) -> Option<Vec<f64>> {
        let n = g.n();
        let mut children = vec![Vec::new(); n];
        let mut edges = 0;
        for v in 0..n {
            match (self.parent[v], self.parent_edge[v]) {
                (Some(p), Some(e)) => {
                    let ed = g.edge(e);
                    if !((ed.u == v && ed.v == p) || (ed.v == v && ed.u == p)) {
                        return None;
                    }
                    children[p].push((v, ed.w));
                    edges += 1;
                }
                (None, None) if self.sources.contains(&v) => {}
                _ => return None,
            }
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut queue = VecDeque::new();
        for &s in &self.sources {
            dist[s] = 0.0;
            queue.push_back(s);
        }
        let mut reached = self.sources.len();
        while let Some(v) = queue.pop_front() {
            for &(c, w) in &children[v] {
                dist[c] = dist[v] + w;
                reached += 1;
                queue.push_back(c);
            }
        }
        (reached == n && edges + self.sources.len() == n).then_some(dist)
    }
}

pub fn loop_cap(g: &Graph, c: f64) -> usize {
    let aspect = if g.m() == 0 { 1.0 } else { g.max_weight() / g.min_weight() };
    let l = (g.n().max(2) as f64 * aspect).log2();
    ((c * l * l).ceil() as usize).max(1)
}

/// Refinement loop: repeated expected trees on the unresolved vertices, with
/// the coordinatewise maximum of the dual potentials certifying each
/// distance.
pub fn sssp_from_transshipment(
    g: &Graph,
    s: usize,
    eps: f64,
    solver: &mut dyn TsSolver,
    cfg: &SsspConfig,
    seed: u64,
) -> Result<SsspResult> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParam("epsilon must lie in (0, 1]".into()));
    }
    if s >= g.n() {
        return Err(Error::Structural(format!("source {s} out of range")));
    }
    g.require_connected()?;
    let n = g.n();
    let mut active: Vec<bool> = (0..n).map(|v| v != s).collect();
    let mut best = vec![f64::INFINITY; n];
    best[s] = 0.0;
    let mut parent_edge: Vec<Option<usize>> = vec![None; n];
    let mut phi_star = vec![0.0f64; n];
    let cap = loop_cap(g, cfg.loop_constant);
    let mut rounds = 0;
    while active.iter().any(|&a| a) {
        if rounds == cap {
            let left: Vec<usize> = (0..n).filter(|&v| active[v]).collect();
            return Err(Error::Stage {
                stage: "sssp",
                msg: format!("loop cap {cap} reached with {} unresolved vertices {:?}", left.len(), left),
            });
        }
        let mut b: Vec<f64> = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
        b[s] = -b.iter().sum::<f64>();
        let neg: Vec<f64> = b.iter().map(|x| -x).collect();
        let sol = solver.solve(g, &neg, eps / 10.0)?;
        let psi: Vec<f64> = sol.potential.iter().map(|p| sol.potential[s] - p).collect();
        let (psi, _) = scale_to_feasible(g, &b, &psi);
        for v in 0..n {
            phi_star[v] = phi_star[v].max(psi[v] - psi[s]);
        }
        phi_star[s] = 0.0;
        if !validate_potential(g, &phi_star) {
            return Err(Error::Stage { stage: "sssp", msg: "potential maximum lost feasibility".into() });
        }
        let tree = expected_sssp_from_flow(g, s, &b, &sol.flow, eps / 10.0, solver, &cfg.esssp, derive_seed(seed, 51, rounds as u64, 0))?;
        let paths = tree
            .paths(g)
            .ok_or_else(|| Error::Stage { stage: "sssp", msg: "expected tree is not a tree".into() })?;
        for v in 0..n {
            if v != s && paths.dist[v] < best[v] {
                best[v] = paths.dist[v];
                parent_edge[v] = paths.parent_edge[v];
            }
        }
        let mut removed = false;
        for v in 0..n {
            if active[v] && best[v] <= (1.0 + eps) * phi_star[v] + 1e-12 * best[v] {
                active[v] = false;
                removed = true;
            }
        }
        if !removed {
            solver.refine();
        }
        rounds += 1;
    }
    let parent = (0..n).map(|v| parent_edge[v].map(|e| g.edge(e).other(v))).collect();
    Ok(SsspResult {
        sources: vec![s],
        parent,
        parent_edge,
        dist: best,
        potential: SsspPotential { phi: phi_star, sources: vec![s], alpha: 1.0 + eps },
        rounds,
    })
}

pub fn exact_sssp(g: &Graph, sources: &[usize]) -> Result<SsspResult> {
    let sp = shortest_paths(g, sources)?;
    Ok(SsspResult {
        sources: sources.to_vec(),
        parent: sp.parent,
        parent_edge: sp.parent_edge,
        dist: sp.dist.clone(),
        potential: SsspPotential { phi: sp.dist, sources: sources.to_vec(), alpha: 1.0 },
        rounds: 0,
    })
}

/// Potentials from an ultra-spanner of a fixed graph: set contraction, core
/// decomposition, a recursive solve on the core and extension, scaled down
/// to stay feasible on the full graph. If every spanner attempt fails the
/// graph itself serves as the spanner.
pub struct RecursiveOracle {
    graph: Graph,
    spanner: Graph,
    cfg: SsspConfig,
    depth: usize,
    calls: Cell<u64>,
}

impl RecursiveOracle {
    pub fn new(g: &Graph, cfg: &SsspConfig, depth: usize) -> Result<Self> {
        let n = g.n().max(2) as f64;
        let k = cfg.spanner_k.unwrap_or_else(|| n.log2().ceil().max(3.0));
        let spanner = match build_ultra_spanner(g, k, derive_seed(cfg.seed, 61, depth as u64, 0), &cfg.spanner) {
            Ok(sp) => sp.subgraph,
            Err(Error::Stage { .. }) => g.clone(),
            Err(e) => return Err(e),
        };
        Ok(RecursiveOracle { graph: g.clone(), spanner, cfg: cfg.clone(), depth, calls: Cell::new(0) })
    }

    pub fn spanner(&self) -> &Graph {
        &self.spanner
    }

    fn core_potential(&self, core: &Graph, s: usize, call: u64) -> Result<SsspPotential> {
        let shrinks = 2 * core.m() <= self.graph.m();
        if core.m() <= self.cfg.base_threshold || !shrinks || self.depth + 1 >= self.cfg.max_depth {
            return Ok(exact_sssp(core, &[s])?.potential);
        }
        let eps = 1.0 / (core.n().max(2) as f64).log2();
        let mut cfg = self.cfg.clone();
        cfg.seed = derive_seed(self.cfg.seed, 62, self.depth as u64, call);
        Ok(solve_at_depth(core, s, eps.min(1.0), &cfg, self.depth + 1)?.potential)
    }
}

impl PotentialOracle for RecursiveOracle {
    fn sssp_potential(&self, g: &Graph, sources: &[usize]) -> Result<SsspPotential> {
        if g != &self.graph {
            return Err(Error::InvalidParam("oracle queried on a different graph".into()));
        }
        let call = self.calls.get();
        self.calls.set(call + 1);
        let p = sparsified_sssp_potential(&self.spanner, sources, &mut |core, s| self.core_potential(core, s, call))?;
        let ratio = g.edges().iter().map(|e| (p.phi[e.u] - p.phi[e.v]).abs() / e.w).fold(0.0, f64::max);
        if ratio <= 1.0 {
            return Ok(p);
        }
        Ok(SsspPotential { phi: p.phi.iter().map(|x| x / ratio).collect(), sources: p.sources, alpha: p.alpha * ratio })
    }
}

fn solve_at_depth(g: &Graph, s: usize, eps: f64, cfg: &SsspConfig, depth: usize) -> Result<SsspResult> {
    if g.m() <= cfg.base_threshold || g.n() <= 2 {
        return exact_sssp(g, &[s]);
    }
    let oracle = RecursiveOracle::new(g, cfg, depth)?;
    let mut pcfg = cfg.pipeline.clone();
    pcfg.seed = derive_seed(cfg.seed, 63, depth as u64, 0);
    let pre = build_preconditioner(g, &oracle, &pcfg)?;
    let mut solver = PipelineSolver::new(pcfg, cfg.epsilon_floor);
    solver.pin(g.clone(), pre);
    sssp_from_transshipment(g, s, eps, &mut solver, cfg, derive_seed(cfg.seed, 64, depth as u64, 0))
}

/// Recursive `(1 + eps)`-approximate shortest paths from a source set.
pub fn recursive_sssp(g: &Graph, sources: &[usize], cfg: &SsspConfig) -> Result<SsspResult> {
    if sources.is_empty() {
        return Err(Error::InvalidParam("source set is empty".into()));
    }
    if let Some(&s) = sources.iter().find(|&&s| s >= g.n()) {
        return Err(Error::Structural(format!("source {s} out of range")));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon <= 1.0) {
        return Err(Error::InvalidParam("epsilon must lie in (0, 1]".into()));
    }
    g.require_connected()?;
    if sources.len() == 1 {
        return solve_at_depth(g, sources[0], cfg.epsilon, cfg, 0);
    }
    let c = contract_set(g, sources)?;
    let r = solve_at_depth(&c.graph, 0, cfg.epsilon, cfg, 0)?;
    let n = g.n();
    let mut parent_edge = vec![None; n];
    let mut parent = vec![None; n];
    for v in 0..n {
        let i = c.image[v];
        if i == 0 {
            continue;
        }
        let e = c.origin[r.parent_edge[i].expect("non-source vertices have a parent")];
        let ed = g.edge(e);
        parent_edge[v] = Some(e);
        parent[v] = Some(ed.other(v));
    }
    Ok(SsspResult {
        sources: sources.to_vec(),
        parent,
        parent_edge,
        dist: c.image.iter().map(|&i| r.dist[i]).collect(),
        potential: SsspPotential {
            phi: c.image.iter().map(|&i| r.potential.phi[i]).collect(),
            sources: sources.to_vec(),
            alpha: r.potential.alpha,
        },
        rounds: r.rounds,
    })
}
