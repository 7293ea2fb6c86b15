//! Edge sparsification by ultra-spanners and vertex sparsification of
//! near-trees, with extension of core potentials back to the full graph.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{minimum_spanning_tree, validate_potential, Graph, SsspPotential, UnionFind};
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct SpannerConfig {
    /// `C` in `beta = C ln n / k`.
    pub c: f64,
    /// Restarts after a failed attempt; `None` means `ceil(log2 n)`.
    pub max_restarts: Option<usize>,
}

impl Default for SpannerConfig {
    fn default() -> Self {
        SpannerConfig { c: 2.0, max_restarts: None }
    }
}

#[derive(Clone, Debug)]
pub struct UltraSpanner {
    pub subgraph: Graph,
    /// Input edge id of every spanner edge, ascending.
    pub edge_ids: Vec<usize>,
    pub k: f64,
    pub beta: f64,
    pub rounds_used: usize,
}

/// Clustering of an unweighted graph by exponentially shifted BFS.
pub struct EstClusters {
    pub center: Vec<usize>,
    /// Parent edge of each non-center vertex inside its cluster.
    pub tree_edge: Vec<Option<usize>>,
    pub shifts: Vec<u64>,
}

/// `floor(ln U / ln(1 - beta))`, zero when `beta >= 1`.
pub fn geometric_shift(beta: f64, rng: &mut impl Rng) -> u64 {
    if beta >= 1.0 {
        return 0;
    }
    let u: f64 = 1.0 - rng.gen::<f64>();
    (u.ln() / (1.0 - beta).ln()).floor().max(0.0) as u64
}

/// Each vertex joins the center minimizing `d(u, v) - delta_u`, ties broken
/// by smaller center id. `adj[v]` lists `(neighbor, edge id)`.
pub fn est_cluster(adj: &[Vec<(usize, usize)>], shifts: &[u64]) -> EstClusters {
    let n = adj.len();
    let top = shifts.iter().copied().max().unwrap_or(0) as i64;
    let mut best: Vec<Option<(i64, usize)>> = vec![None; n];
    let mut tree_edge = vec![None; n];
    let mut heap = BinaryHeap::new();
    for u in 0..n {
        let key = (top - shifts[u] as i64, u);
        best[u] = Some(key);
        heap.push(Reverse((key.0, key.1, u)));
    }
    let mut done = vec![false; n];
    while let Some(Reverse((d, c, x))) = heap.pop() {
        if done[x] || best[x] != Some((d, c)) {
            continue;
        }
        done[x] = true;
        for &(y, e) in &adj[x] {
            let cand = (d + 1, c);
            if !done[y] && best[y].is_none_or(|b| cand < b) {
                best[y] = Some(cand);
                tree_edge[y] = Some(e);
                heap.push(Reverse((cand.0, cand.1, y)));
            }
        }
    }
    let center: Vec<usize> = best.iter().map(|b| b.expect("every vertex is labeled").1).collect();
    for v in 0..n {
        if center[v] == v {
            tree_edge[v] = None;
        }
    }
    EstClusters { center, tree_edge, shifts: shifts.to_vec() }
}

/// Exponent of the largest power of `k` not exceeding `w`.
fn weight_class(w: f64, k: f64) -> i64 {
    let mut a = (w.ln() / k.ln()).floor() as i64;
    while k.powi(a as i32 + 1) <= w {
        a += 1;
    }
    while k.powi(a as i32) > w {
        a -= 1;
    }
    a
}

struct Failure {
    max_shift: u64,
    inter: usize,
}

fn spanner_attempt(g: &Graph, k: f64, beta: f64, seed: u64) -> std::result::Result<Vec<usize>, Failure> {
    let n = g.n();
    let mut classes: Vec<(i64, usize)> = (0..g.m()).map(|e| (weight_class(g.edge(e).w, k), e)).collect();
    classes.sort_unstable();
    let mut contracted = UnionFind::new(n);
    let mut keep = vec![false; g.m()];
    let mut inter = 0usize;
    let mut max_shift = 0u64;
    let mut failed = false;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut i = 0;
    while i < classes.len() {
        let alpha = classes[i].0;
        let mut j = i;
        while j < classes.len() && classes[j].0 == alpha {
            j += 1;
        }
        let class: Vec<usize> = classes[i..j].iter().map(|c| c.1).collect();
        i = j;
        let mut index: HashMap<usize, usize> = HashMap::new();
        let mut reps: Vec<usize> = Vec::new();
        for v in 0..n {
            let r = contracted.find(v);
            if let std::collections::hash_map::Entry::Vacant(slot) = index.entry(r) {
                slot.insert(reps.len());
                reps.push(r);
            }
        }
        let mut adj = vec![Vec::new(); reps.len()];
        let mut ends = Vec::with_capacity(class.len());
        for &e in &class {
            let edge = g.edge(e);
            let a = index[&contracted.find(edge.u)];
            let b = index[&contracted.find(edge.v)];
            ends.push((a, b));
            if a != b {
                adj[a].push((b, e));
                adj[b].push((a, e));
            }
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        let shifts: Vec<u64> = (0..reps.len()).map(|_| geometric_shift(beta, &mut rng)).collect();
        let round_max = shifts.iter().copied().max().unwrap_or(0);
        max_shift = max_shift.max(round_max);
        if round_max as f64 > k / 6.0 {
            failed = true;
        }
        let cl = est_cluster(&adj, &shifts);
        for e in cl.tree_edge.iter().flatten() {
            keep[*e] = true;
        }
        for (&e, &(a, b)) in class.iter().zip(&ends) {
            if a != b && cl.center[a] != cl.center[b] {
                keep[e] = true;
                inter += 1;
            }
        }
        for e in cl.tree_edge.iter().flatten() {
            let edge = g.edge(*e);
            contracted.union(edge.u, edge.v);
        }
    }
    if failed || inter as f64 > 2.0 * beta * g.m() as f64 {
        return Err(Failure { max_shift, inter });
    }
    Ok((0..g.m()).filter(|&e| keep[e]).collect())
}

/// Ultra-sparse `k^2`-spanner: at most `(n - 1) + 2 beta m` edges with
/// `beta = min(1, C ln n / k)`, restarting on failure.
pub fn build_ultra_spanner(g: &Graph, k: f64, seed: u64, cfg: &SpannerConfig) -> Result<UltraSpanner> {
    if !(k >= 3.0) || !k.is_finite() {
        return Err(Error::InvalidParam(format!("spanner parameter k = {k} must be at least 3")));
    }
    let n = g.n();
    let beta = (cfg.c * (n.max(2) as f64).ln() / k).min(1.0);
    let restarts = cfg.max_restarts.unwrap_or(((n.max(2)) as f64).log2().ceil() as usize);
    let mut last = None;
    for round in 0..=restarts {
        match spanner_attempt(g, k, beta, derive_seed(seed, 0x5A, round as u64, 0)) {
            Ok(edge_ids) => {
                let subgraph = g.edge_subgraph(&edge_ids);
                return Ok(UltraSpanner { subgraph, edge_ids, k, beta, rounds_used: round });
            }
            Err(f) => last = Some(f),
        }
    }
    let f = last.expect("at least one attempt");
    Err(Error::Stage {
        stage: "spanner",
        msg: format!(
            "failed after {restarts} restarts: last attempt had max shift {} (limit {:.3}) and {} inter-cluster edges (limit {:.1})",
            f.max_shift,
            k / 6.0,
            f.inter,
            2.0 * beta * g.m() as f64
        ),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum CoreEdge {
    /// Index into `contracted_paths`.
    Path(usize),
    /// Input edge outside the spanning tree.
    Direct(usize),
}

/// Maximal tree path whose interior avoids the core vertex set.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractedPath {
    pub vertices: Vec<usize>,
    pub edges: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Tree edges of `G - G0` hanging off one vertex `root` of `G0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestComponent {
    pub root: usize,
    pub edges: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct CoreDecomposition {
    pub core: Graph,
    /// Input vertex of every core vertex.
    pub core_vertices: Vec<usize>,
    pub core_edges: Vec<CoreEdge>,
    pub contracted_paths: Vec<ContractedPath>,
    pub forest_components: Vec<ForestComponent>,
    pub in_g0: Vec<bool>,
    pub source: usize,
    pub excess: usize,
}

impl CoreDecomposition {
    pub fn core_index(&self, v: usize) -> Option<usize> {
        self.core_vertices.iter().position(|&x| x == v)
    }

    /// Edge ids of `G0` recovered by expanding every core edge.
    pub fn expand(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for ce in &self.core_edges {
            match ce {
                CoreEdge::Path(p) => out.extend_from_slice(&self.contracted_paths[*p].edges),
                CoreEdge::Direct(e) => out.push(*e),
            }
        }
        out
    }
}

/// Core of `g` relative to a spanning tree and source `s`: the Steiner tree of
/// the non-tree endpoints and `s`, with degree-2 paths contracted.
pub fn decompose_core(g: &Graph, tree: &[usize], s: usize) -> Result<CoreDecomposition> {
    let n = g.n();
    if s >= n {
        return Err(Error::Structural(format!("source {s} out of range")));
    }
    g.require_connected()?;
    if tree.len() + 1 != n {
        return Err(Error::Structural("tree does not span the graph".into()));
    }
    let mut in_tree = vec![false; g.m()];
    let mut tadj = vec![Vec::new(); n];
    for &e in tree {
        if e >= g.m() || in_tree[e] {
            return Err(Error::Structural(format!("invalid tree edge {e}")));
        }
        in_tree[e] = true;
        let edge = g.edge(e);
        tadj[edge.u].push((edge.v, e));
        tadj[edge.v].push((edge.u, e));
    }
    let mut parent = vec![usize::MAX; n];
    let mut parent_edge = vec![usize::MAX; n];
    let mut order = vec![s];
    let mut seen = vec![false; n];
    seen[s] = true;
    let mut head = 0;
    while head < order.len() {
        let x = order[head];
        head += 1;
        for &(y, e) in &tadj[x] {
            if !seen[y] {
                seen[y] = true;
                parent[y] = x;
                parent_edge[y] = e;
                order.push(y);
            }
        }
    }
    if order.len() != n {
        return Err(Error::Structural("tree does not span the graph".into()));
    }
    let mut in_s0 = vec![false; n];
    in_s0[s] = true;
    let non_tree: Vec<usize> = (0..g.m()).filter(|&e| !in_tree[e]).collect();
    for &e in &non_tree {
        in_s0[g.edge(e).u] = true;
        in_s0[g.edge(e).v] = true;
    }
    let mut count = vec![0usize; n];
    for &v in order.iter().rev() {
        if in_s0[v] {
            count[v] += 1;
        }
        if v != s {
            count[parent[v]] += count[v];
        }
    }
    let in_g0: Vec<bool> = (0..n).map(|v| count[v] > 0).collect();
    let mut deg0 = vec![0usize; n];
    for v in 0..n {
        if v != s && in_g0[v] {
            deg0[v] += 1;
            deg0[parent[v]] += 1;
        }
    }
    let in_core: Vec<bool> = (0..n).map(|v| in_s0[v] || deg0[v] >= 3).collect();
    let core_vertices: Vec<usize> = (0..n).filter(|&v| in_core[v]).collect();
    let mut core_id = vec![usize::MAX; n];
    for (i, &v) in core_vertices.iter().enumerate() {
        core_id[v] = i;
    }
    let mut core_list = Vec::new();
    let mut core_edges = Vec::new();
    let mut contracted_paths = Vec::new();
    for &v in &order {
        if v == s || !in_core[v] {
            continue;
        }
        let mut vertices = vec![v];
        let mut edges = Vec::new();
        let mut x = v;
        loop {
            edges.push(parent_edge[x]);
            x = parent[x];
            vertices.push(x);
            if in_core[x] {
                break;
            }
        }
        vertices.reverse();
        edges.reverse();
        let weights: Vec<f64> = edges.iter().map(|&e| g.edge(e).w).collect();
        let total: f64 = weights.iter().sum();
        core_list.push((core_id[vertices[0]], core_id[v], total));
        core_edges.push(CoreEdge::Path(contracted_paths.len()));
        contracted_paths.push(ContractedPath { vertices, edges, weights });
    }
    for &e in &non_tree {
        let edge = g.edge(e);
        core_list.push((core_id[edge.u], core_id[edge.v], edge.w));
        core_edges.push(CoreEdge::Direct(e));
    }
    let core = Graph::new(core_vertices.len(), core_list)?;
    let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut attach = vec![usize::MAX; n];
    for &v in &order {
        if in_g0[v] {
            attach[v] = v;
        } else {
            attach[v] = attach[parent[v]];
            by_root.entry(attach[v]).or_default().push(parent_edge[v]);
        }
    }
    let mut forest_components: Vec<ForestComponent> = by_root.into_iter().map(|(root, edges)| ForestComponent { root, edges }).collect();
    forest_components.sort_by_key(|c| c.root);
    Ok(CoreDecomposition {
        core,
        core_vertices,
        core_edges,
        contracted_paths,
        forest_components,
        in_g0,
        source: s,
        excess: non_tree.len(),
    })
}

/// Extends a potential on the core to `g`: two-sided minimum along
/// contracted paths, exact tree offsets into the hanging forests.
pub fn extend_potential(g: &Graph, dec: &CoreDecomposition, core_phi: &SsspPotential) -> Result<SsspPotential> {
    if core_phi.phi.len() != dec.core.n() {
        return Err(Error::Structural("core potential has the wrong length".into()));
    }
    if !validate_potential(&dec.core, &core_phi.phi) {
        return Err(Error::Infeasible("core potential violates an edge constraint".into()));
    }
    let n = g.n();
    let sid = dec.core_index(dec.source).expect("source is a core vertex");
    let base = core_phi.phi[sid];
    let mut phi = vec![f64::NAN; n];
    for (i, &v) in dec.core_vertices.iter().enumerate() {
        phi[v] = core_phi.phi[i] - base;
    }
    for p in &dec.contracted_paths {
        let l = p.vertices.len() - 1;
        let a = phi[p.vertices[0]];
        let b = phi[p.vertices[l]];
        let mut prefix = vec![0.0; l + 1];
        for j in 0..l {
            prefix[j + 1] = prefix[j] + p.weights[j];
        }
        for j in 1..l {
            phi[p.vertices[j]] = (a + prefix[j]).min(b + (prefix[l] - prefix[j]));
        }
    }
    for c in &dec.forest_components {
        let mut adj: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
        for &e in &c.edges {
            let edge = g.edge(e);
            adj.entry(edge.u).or_default().push((edge.v, edge.w));
            adj.entry(edge.v).or_default().push((edge.u, edge.w));
        }
        let mut stack = vec![c.root];
        while let Some(x) = stack.pop() {
            if let Some(list) = adj.get(&x) {
                for &(y, w) in list {
                    if phi[y].is_nan() {
                        phi[y] = phi[x] + w;
                        stack.push(y);
                    }
                }
            }
        }
    }
    if phi.iter().any(|x| x.is_nan()) {
        return Err(Error::Structural("decomposition does not cover every vertex".into()));
    }
    Ok(SsspPotential { phi, sources: vec![dec.source], alpha: core_phi.alpha })
}

/// `g` with the vertex set `set` merged into one vertex (index 0), parallel
/// edges collapsed to the minimum weight and internal edges dropped.
pub struct Contraction {
    pub graph: Graph,
    /// Contracted vertex of every input vertex.
    pub image: Vec<usize>,
    /// Input edge realizing every contracted edge.
    pub origin: Vec<usize>,
}

pub fn contract_set(g: &Graph, set: &[usize]) -> Result<Contraction> {
    let n = g.n();
    let mut member = vec![false; n];
    for &v in set {
        if v >= n {
            return Err(Error::Structural(format!("vertex {v} out of range")));
        }
        member[v] = true;
    }
    let mut image = vec![0usize; n];
    let mut next = 1;
    for v in 0..n {
        if !member[v] {
            image[v] = next;
            next += 1;
        }
    }
    let mut best: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    for (id, e) in g.edges().iter().enumerate() {
        let (a, b) = (image[e.u], image[e.v]);
        if a == b {
            continue;
        }
        let slot = best.entry((a.min(b), a.max(b))).or_insert((e.w, id));
        if e.w < slot.0 {
            *slot = (e.w, id);
        }
    }
    let mut list: Vec<((usize, usize), (f64, usize))> = best.into_iter().collect();
    list.sort_by_key(|&(k, _)| k);
    let origin = list.iter().map(|&(_, (_, id))| id).collect();
    let edges = list.into_iter().map(|((a, b), (w, _))| (a, b, w)).collect();
    Ok(Contraction { graph: Graph::new(next, edges)?, image, origin })
}

/// `S`-SSSP potential through set contraction, core decomposition over the
/// minimum spanning tree, `inner` on the core and extension. The result is
/// zero on `S`.
pub fn sparsified_sssp_potential(
    g: &Graph,
    set: &[usize],
    inner: &mut dyn FnMut(&Graph, usize) -> Result<SsspPotential>,
) -> Result<SsspPotential> {
    if set.is_empty() {
        return Err(Error::InvalidParam("source set is empty".into()));
    }
    g.require_connected()?;
    let c = contract_set(g, set)?;
    let h = &c.graph;
    let phi_h = if h.n() == 1 {
        SsspPotential { phi: vec![0.0], sources: vec![0], alpha: 1.0 }
    } else {
        let tree = minimum_spanning_tree(h)?;
        let dec = decompose_core(h, &tree, 0)?;
        let sid = dec.core_index(0).expect("source is a core vertex");
        let core_phi = inner(&dec.core, sid)?;
        extend_potential(h, &dec, &core_phi)?
    };
    let phi: Vec<f64> = c.image.iter().map(|&i| phi_h.phi[i]).collect();
    if !validate_potential(g, &phi) {
        return Err(Error::Stage { stage: "sparsify", msg: "lifted potential is infeasible".into() });
    }
    Ok(SsspPotential { phi, sources: set.to_vec(), alpha: phi_h.alpha })
}
