//! Exact baselines: uncapacitated min-cost flow, all-pairs distances and the
//! deterministic 1-D dyadic routing scheme.

use std::collections::{BTreeMap, VecDeque};

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::graph::{check_balanced, dijkstra, flow_cost, Graph};

pub const ORACLE_SIZE_CAP: usize = 2000;

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub opt_cost: f64,
    pub witness_flow: Option<Vec<f64>>,
    pub witness_potential: Option<Vec<f64>>,
}

#[derive(Clone, Copy)]
struct Arc {
    to: usize,
    cap: f64,
    cost: f64,
    rev: usize,
}

struct Network {
    arcs: Vec<Vec<Arc>>,
}

impl Network {
    fn add(&mut self, a: usize, b: usize, cap: f64, cost: f64) -> (usize, usize) {
        let ia = self.arcs[a].len();
        let ib = self.arcs[b].len() + usize::from(a == b);
        self.arcs[a].push(Arc { to: b, cap, cost, rev: ib });
        self.arcs[b].push(Arc { to: a, cap: 0.0, cost: -cost, rev: ia });
        (a, ia)
    }
}

/// Exact transshipment by successive shortest paths with Johnson potentials.
pub fn exact_transshipment(g: &Graph, b: &[f64]) -> Result<OracleResult> {
    exact_transshipment_capped(g, b, ORACLE_SIZE_CAP)
}

pub fn exact_transshipment_capped(g: &Graph, b: &[f64], cap: usize) -> Result<OracleResult> {
    let n = g.n();
    if b.len() != n {
        return Err(Error::Structural("demand length mismatch".into()));
    }
    if n > cap {
        return Err(Error::InvalidParam(format!("oracle size cap {cap} exceeded by n = {n}")));
    }
    check_balanced(b)?;
    let src = n;
    let snk = n + 1;
    let mut net = Network { arcs: vec![Vec::new(); n + 2] };
    let mut edge_arcs = Vec::with_capacity(g.m());
    for e in g.edges() {
        let fwd = net.add(e.u, e.v, f64::INFINITY, e.w);
        let bwd = net.add(e.v, e.u, f64::INFINITY, e.w);
        edge_arcs.push((fwd, bwd));
    }
    let scale: f64 = b.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
    let eps = 1e-12 * scale;
    let mut supply = 0.0;
    for (v, &x) in b.iter().enumerate() {
        if x < -eps {
            net.add(src, v, -x, 0.0);
            supply += -x;
        } else if x > eps {
            net.add(v, snk, x, 0.0);
        }
    }
    let nn = n + 2;
    let mut pot = vec![0.0; nn];
    let mut remaining = supply;
    let mut guard = 0usize;
    while remaining > eps {
        guard += 1;
        if guard > 50 * nn * nn + 1000 {
            return Err(Error::Stage { stage: "oracle", msg: "augmentation limit reached".into() });
        }
        let mut dist = vec![f64::INFINITY; nn];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; nn];
        let mut done = vec![false; nn];
        dist[src] = 0.0;
        let mut heap = std::collections::BinaryHeap::new();
        heap.push(Item(0.0, src));
        while let Some(Item(d, x)) = heap.pop() {
            if done[x] || d > dist[x] {
                continue;
            }
            done[x] = true;
            for (i, a) in net.arcs[x].iter().enumerate() {
                if a.cap <= eps * 1e-3 {
                    continue;
                }
                let rc = (a.cost + pot[x] - pot[a.to]).max(0.0);
                let nd = d + rc;
                if nd < dist[a.to] {
                    dist[a.to] = nd;
                    prev[a.to] = Some((x, i));
                    heap.push(Item(nd, a.to));
                }
            }
        }
        if !dist[snk].is_finite() {
            return Err(Error::Infeasible("demand cannot be routed (disconnected)".into()));
        }
        for v in 0..nn {
            if dist[v].is_finite() {
                pot[v] += dist[v];
            }
        }
        let mut delta = f64::INFINITY;
        let mut x = snk;
        while let Some((p, i)) = prev[x] {
            delta = delta.min(net.arcs[p][i].cap);
            x = p;
        }
        let mut x = snk;
        while let Some((p, i)) = prev[x] {
            let a = net.arcs[p][i];
            net.arcs[p][i].cap -= delta;
            net.arcs[x][a.rev].cap += delta;
            x = p;
        }
        remaining -= delta;
    }
    let mut flow = vec![0.0; g.m()];
    for (e, &((a, ia), (c, ic))) in edge_arcs.iter().enumerate() {
        let fa = net.arcs[a][ia];
        let fc = net.arcs[c][ic];
        let pushed_fwd = net.arcs[fa.to][fa.rev].cap;
        let pushed_bwd = net.arcs[fc.to][fc.rev].cap;
        flow[e] = pushed_fwd - pushed_bwd;
    }
    let phi = residual_dual(g, &flow);
    Ok(OracleResult { opt_cost: flow_cost(g, &flow), witness_flow: Some(flow), witness_potential: Some(phi) })
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
    }
}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

/// Shortest-path labels of the residual network of an optimal flow; these
/// are feasible and tight on every flow-carrying edge.
fn residual_dual(g: &Graph, flow: &[f64]) -> Vec<f64> {
    let n = g.n();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let fscale = flow.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    for (e, &x) in g.edges().iter().zip(flow) {
        adj[e.u].push((e.v, e.w));
        adj[e.v].push((e.u, e.w));
        if x > 1e-12 * fscale {
            adj[e.v].push((e.u, -e.w));
        } else if x < -1e-12 * fscale {
            adj[e.u].push((e.v, -e.w));
        }
    }
    let wscale = g.max_weight().max(1.0);
    let slack = 1e-12 * wscale;
    let mut dist = vec![0.0f64; n];
    let mut inq = vec![true; n];
    let mut queue: VecDeque<usize> = (0..n).collect();
    let mut pops = 0usize;
    let limit = (n + 1) * (g.m() + n) * 4 + 16;
    while let Some(x) = queue.pop_front() {
        inq[x] = false;
        pops += 1;
        if pops > limit {
            break;
        }
        for &(y, c) in &adj[x] {
            let nd = dist[x] + c;
            if nd < dist[y] - slack {
                dist[y] = nd;
                if !inq[y] {
                    inq[y] = true;
                    queue.push_back(y);
                }
            }
        }
    }
    let lo = dist.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo.is_finite() {
        for d in dist.iter_mut() {
            *d -= lo;
        }
    }
    dist
}

pub fn exact_apsp(g: &Graph) -> Vec<Vec<f64>> {
    (0..g.n()).map(|s| dijkstra(g, &[s]).expect("valid source").0).collect()
}

pub type Dyadic = Ratio<i128>;

#[derive(Clone, Debug, PartialEq)]
pub struct LineDemoReport {
    /// Cost of iterations `1..=max_level+1`.
    pub iteration_costs: Vec<Dyadic>,
    pub total: Dyadic,
    /// Optimal cost of the demand entering each iteration, doubled.
    pub level_opt: Vec<Dyadic>,
}

fn line_opt(b: &BTreeMap<i64, Dyadic>) -> Dyadic {
    let mut prefix = Dyadic::from_integer(0);
    let mut cost = Dyadic::from_integer(0);
    let mut last: Option<i64> = None;
    for (&x, &v) in b {
        if let Some(p) = last {
            cost += abs(prefix) * Dyadic::from_integer((x - p) as i128);
        }
        prefix += v;
        last = Some(x);
    }
    cost
}

fn abs(x: Dyadic) -> Dyadic {
    if x < Dyadic::from_integer(0) {
        -x
    } else {
        x
    }
}

/// Deterministic dyadic scheme on the line: at iteration `t` every point
/// `x = 2^{t-1} (mod 2^t)` splits its demand evenly to `x - 2^{t-1}` and
/// `x + 2^{t-1}`; the last iteration moves the mass at 0 to `2^max_level`.
pub fn line_routing_demo(points: &[(f64, i64)], max_level: u32) -> Result<LineDemoReport> {
    if max_level > 60 {
        return Err(Error::InvalidParam("max_level too large".into()));
    }
    let top = 1i64 << max_level;
    let mut b: BTreeMap<i64, Dyadic> = BTreeMap::new();
    for &(x, d) in points {
        if x.fract() != 0.0 || x < 0.0 || x > top as f64 {
            return Err(Error::InvalidParam(format!("coordinate {x} is not an integer in [0, {top}]")));
        }
        *b.entry(x as i64).or_insert_with(|| Dyadic::from_integer(0)) += Dyadic::from_integer(d as i128);
    }
    let zero = Dyadic::from_integer(0);
    b.retain(|_, v| *v != zero);
    let mut costs = Vec::new();
    let mut level_opt = Vec::new();
    for t in 1..=max_level {
        level_opt.push(line_opt(&b) * Dyadic::from_integer(2));
        let half = 1i64 << (t - 1);
        let step = 1i64 << t;
        let mut next: BTreeMap<i64, Dyadic> = BTreeMap::new();
        let mut cost = zero;
        for (&x, &v) in &b {
            if x.rem_euclid(step) == half {
                let h = v / Dyadic::from_integer(2);
                *next.entry(x - half).or_insert(zero) += h;
                *next.entry(x + half).or_insert(zero) += h;
                cost += abs(v) * Dyadic::from_integer(half as i128);
            } else {
                *next.entry(x).or_insert(zero) += v;
            }
        }
        next.retain(|_, v| *v != zero);
        b = next;
        costs.push(cost);
    }
    level_opt.push(line_opt(&b) * Dyadic::from_integer(2));
    let at_zero = b.get(&0).copied().unwrap_or(zero);
    costs.push(abs(at_zero) * Dyadic::from_integer(top as i128));
    let total = costs.iter().fold(zero, |a, &c| a + c);
    Ok(LineDemoReport { iteration_costs: costs, total, level_opt })
}
