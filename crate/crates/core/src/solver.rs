//! Multiplicative-weights boosting of an oblivious routing matrix into a
//! (1+eps)-approximate flow-potential pair.

use crate::error::{Error, Result};
use crate::graph::{
    balance_tol, check_balanced, divergence, dot, flow_cost, l1, minimum_spanning_tree, route_on_tree, validate_potential,
    Graph, REL_TOL,
};
use crate::oracles::exact_transshipment;
use crate::routing::RoutingMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub kappa_override: Option<f64>,
    pub mwu_constant: f64,
    /// Repair rounds before the spanning-tree finish; `None` means `ceil(log2 n)`.
    pub max_repair_rounds: Option<usize>,
    /// Upper limit on MWU rounds per call, applied on top of the theoretical count.
    pub max_mwu_rounds: usize,
    /// Step size; `None` means `step_multiplier * eps / (2 kappa)`.
    pub step_override: Option<f64>,
    pub step_multiplier: f64,
    pub max_bisection_steps: usize,
    /// Relative bracket width at which bisection stops; `None` means `eps / 3`.
    pub bisection_tolerance: Option<f64>,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 0.1,
            kappa_override: None,
            mwu_constant: 3.0,
            max_repair_rounds: None,
            max_mwu_rounds: 4000,
            step_override: None,
            step_multiplier: 8.0,
            max_bisection_steps: 40,
            bisection_tolerance: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MwuOutcome {
    /// Cost at most `t` and `||R(Af - b)||_1 < eps t`.
    Flow { flow: Vec<f64>, residual: f64, rounds: usize },
    /// Feasible potential with `b . phi = t`.
    Potential { phi: Vec<f64>, rounds: usize },
    /// Round budget exhausted without either certificate; `phi` is the
    /// averaged potential scaled down to feasibility.
    Stalled { phi: Vec<f64>, value: f64, rounds: usize },
}

impl MwuOutcome {
    pub fn rounds(&self) -> usize {
        match self {
            MwuOutcome::Flow { rounds, .. } | MwuOutcome::Potential { rounds, .. } | MwuOutcome::Stalled { rounds, .. } => *rounds,
        }
    }
}

/// Theoretical round count `ceil(c omega^2 ln(2m) / delta^2)` with
/// `omega = 3 kappa` and `delta = eps / (2 kappa)`.
pub fn theoretical_rounds(m: usize, eps: f64, kappa: f64, c: f64) -> f64 {
    let omega = 3.0 * kappa;
    let delta = eps / (2.0 * kappa);
    (c * omega * omega * ((2 * m.max(1)) as f64).ln() / (delta * delta)).ceil()
}

/// Scales `phi` down so that every edge constraint holds; returns the
/// scaled potential and its objective.
pub fn scale_to_feasible(g: &Graph, b: &[f64], phi: &[f64]) -> (Vec<f64>, f64) {
    let ratio = g.edges().iter().map(|e| (phi[e.u] - phi[e.v]).abs() / e.w).fold(0.0, f64::max);
    let value = dot(b, phi);
    if ratio == 0.0 || value <= 0.0 {
        return (vec![0.0; g.n()], 0.0);
    }
    let out: Vec<f64> = phi.iter().map(|x| x / ratio).collect();
    let v = dot(b, &out);
    (out, v)
}

/// Coordinate ascent on a feasible potential: each vertex with positive
/// demand rises to its tightest neighbour bound, each with negative demand
/// falls to it. Stays feasible and never lowers `b . phi`. Returns the new
/// objective.
pub fn polish_potential(g: &Graph, b: &[f64], phi: &mut [f64], sweeps: usize) -> f64 {
    let mut value = dot(b, phi);
    for _ in 0..sweeps {
        for v in 0..g.n() {
            if b[v] == 0.0 {
                continue;
            }
            let nb = g.neighbors(v);
            if nb.is_empty() {
                continue;
            }
            let w = |&(u, e): &(usize, usize)| (phi[u], g.edge(e).w);
            phi[v] = if b[v] > 0.0 {
                nb.iter().map(w).map(|(p, w)| p + w).fold(f64::INFINITY, f64::min)
            } else {
                nb.iter().map(w).map(|(p, w)| p - w).fold(f64::NEG_INFINITY, f64::max)
            };
        }
        let next = dot(b, phi);
        if next <= value * (1.0 + 1e-12) {
            return next.max(value);
        }
        value = next;
    }
    value
}

fn max_ratio(g: &Graph, z: &[f64]) -> f64 {
    g.edges().iter().map(|e| (z[e.v] - z[e.u]).abs() / e.w).fold(0.0, f64::max)
}

pub fn mwu_round(m: &RoutingMatrix, g: &Graph, b: &[f64], t: f64, eps: f64, kappa: f64, cfg: &SolverConfig) -> Result<MwuOutcome> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParam("kappa must be positive".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParam("epsilon must lie in (0, 1]".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParam("t must be positive".into()));
    }
    let n = g.n();
    let me = g.m();
    let r = m.rows();
    let rb: Vec<f64> = m.matvec(b).iter().map(|x| x / t).collect();
    let delta = cfg.step_override.unwrap_or(cfg.step_multiplier * eps / (2.0 * kappa));
    let budget = theoretical_rounds(me, eps, kappa, cfg.mwu_constant).min(cfg.max_mwu_rounds as f64).max(1.0) as usize;
    let inv_w: Vec<f64> = g.edges().iter().map(|e| 1.0 / e.w).collect();

    let mut logit = vec![0.0f64; me];
    let mut q = vec![0.0; me];
    let mut q_sum = vec![0.0; me];
    let mut u = vec![0.0; r];
    let mut u_sum = vec![0.0; r];
    let mut y = vec![0.0; r];
    let mut z = vec![0.0; n];
    let mut z_sum = vec![0.0; n];
    for round in 1..=budget {
        let top = logit.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let mut norm = 0.0;
        for e in 0..me {
            let (a, c) = ((logit[e] - top).exp(), (-logit[e] - top).exp());
            q[e] = a - c;
            norm += a + c;
        }
        for e in 0..me {
            q[e] *= inv_w[e] / norm;
        }
        let aq = divergence(g, &q)?;
        m.matvec_into(&aq, &mut u);
        for i in 0..r {
            u[i] += rb[i];
        }
        let res = l1(&u);
        if res < eps {
            let flow = q.iter().map(|x| -t * x).collect();
            return Ok(MwuOutcome::Flow { flow, residual: res * t, rounds: round });
        }
        for e in 0..me {
            q_sum[e] += q[e];
        }
        let mut avg_res = 0.0;
        for i in 0..r {
            u_sum[i] += u[i];
            avg_res += u_sum[i].abs();
        }
        avg_res /= round as f64;
        if avg_res < eps {
            let flow: Vec<f64> = q_sum.iter().map(|x| -t * x / round as f64).collect();
            let flow = cancel_cycles(g, &flow);
            return Ok(MwuOutcome::Flow { flow, residual: avg_res * t, rounds: round });
        }
        for i in 0..r {
            y[i] = if u[i] > 0.0 {
                -1.0
            } else if u[i] < 0.0 {
                1.0
            } else {
                0.0
            };
        }
        m.matvec_transposed_into(&y, &mut z);
        for (e, edge) in g.edges().iter().enumerate() {
            logit[e] += delta * (z[edge.v] - z[edge.u]) * inv_w[e];
        }
        for v in 0..n {
            z_sum[v] += z[v];
        }
        let value = -dot(&z_sum, b);
        if value > 0.0 && t * max_ratio(g, &z_sum) < value * (1.0 - REL_TOL) {
            let phi: Vec<f64> = z_sum.iter().map(|x| -x * t / value).collect();
            return Ok(MwuOutcome::Potential { phi, rounds: round });
        }
    }
    let phi0: Vec<f64> = z_sum.iter().map(|x| -x).collect();
    let (phi, value) = scale_to_feasible(g, b, &phi0);
    Ok(MwuOutcome::Stalled { phi, value, rounds: budget })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub flow: Vec<f64>,
    pub potential: Vec<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    pub oracle_calls: usize,
    pub repair_rounds: usize,
    pub primal_cost: f64,
    pub dual_value: f64,
    pub used_exact: bool,
}

impl SolveReport {
    pub fn gap(&self) -> f64 {
        if self.dual_value > 0.0 {
            self.primal_cost / self.dual_value
        } else if self.primal_cost == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    }
}

struct Search {
    flow: Vec<f64>,
    potential: Vec<f64>,
    dual: f64,
    t_hi: f64,
    lo: f64,
    rounds: usize,
    calls: usize,
    steps: usize,
}

impl Search {
    fn keep(&mut self, g: &Graph, phi: Vec<f64>, value: f64) {
        if value > self.dual && validate_potential(g, &phi) {
            self.dual = value;
            self.potential = phi;
        }
    }
}

/// Geometric descent over `t` from a tree-routing upper bound, then
/// bisection until the bracket is within `gap` relative.
fn search(g: &Graph, tree: &[usize], b: &[f64], m: &RoutingMatrix, eps: f64, gap: f64, kappa: f64, cfg: &SolverConfig) -> Result<Search> {
    let direct = route_on_tree(g, tree, b)?;
    let t0 = flow_cost(g, &direct).min(g.n() as f64 * g.max_weight() * l1(b));
    let mut s = Search { flow: direct, potential: vec![0.0; g.n()], dual: 0.0, t_hi: t0, lo: 0.0, rounds: 0, calls: 0, steps: 0 };
    if t0 == 0.0 {
        return Ok(s);
    }
    let mut t = t0;
    loop {
        let out = mwu_round(m, g, b, t, eps, kappa, cfg)?;
        s.rounds += out.rounds();
        s.calls += 1;
        match out {
            MwuOutcome::Flow { flow, .. } => {
                s.t_hi = t;
                s.flow = flow;
                let next = (1.0 + eps) * t / 2.0;
                if next <= s.dual {
                    s.lo = s.dual;
                    break;
                }
                t = next;
            }
            MwuOutcome::Potential { phi, .. } => {
                s.keep(g, phi, t);
                s.lo = t;
                break;
            }
            MwuOutcome::Stalled { phi, value, .. } => {
                s.keep(g, phi, value);
                s.lo = t;
                break;
            }
        }
    }
    bisect(&mut s, g, b, m, eps, gap, kappa, cfg)?;
    Ok(s)
}

fn bisect(s: &mut Search, g: &Graph, b: &[f64], m: &RoutingMatrix, eps: f64, gap: f64, kappa: f64, cfg: &SolverConfig) -> Result<()> {
    while s.t_hi - s.lo > gap * s.lo.max(s.dual) && s.steps < cfg.max_bisection_steps {
        s.steps += 1;
        let mid = 0.5 * (s.lo + s.t_hi);
        let out = mwu_round(m, g, b, mid, eps, kappa, cfg)?;
        s.rounds += out.rounds();
        s.calls += 1;
        match out {
            MwuOutcome::Flow { flow, .. } => {
                s.t_hi = mid;
                s.flow = flow;
            }
            MwuOutcome::Potential { phi, .. } => {
                s.keep(g, phi, mid);
                s.lo = mid;
            }
            MwuOutcome::Stalled { phi, value, .. } => {
                s.keep(g, phi, value);
                s.lo = mid;
            }
        }
    }
    Ok(())
}

/// Flow of the descent and bisection over `t`, before residual repair.
pub fn approximate_flow(g: &Graph, b: &[f64], m: &RoutingMatrix, eps: f64, kappa: f64, cfg: &SolverConfig) -> Result<Vec<f64>> {
    check_balanced(b)?;
    g.require_connected()?;
    let tree = minimum_spanning_tree(g)?;
    let tol = cfg.bisection_tolerance.unwrap_or(eps / 3.0);
    Ok(search(g, &tree, b, m, eps, tol, kappa, cfg)?.flow)
}

/// Removes directed cycles from the support of `f`; cost does not increase
/// and the divergence is unchanged.
pub fn cancel_cycles(g: &Graph, f: &[f64]) -> Vec<f64> {
    let n = g.n();
    let mut f = f.to_vec();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, edge) in g.edges().iter().enumerate() {
        out[edge.u].push(e);
        out[edge.v].push(e);
    }
    let head = |f: &[f64], e: usize, x: usize| -> Option<usize> {
        let edge = g.edge(e);
        if edge.u == x && f[e] > 0.0 {
            Some(edge.v)
        } else if edge.v == x && f[e] < 0.0 {
            Some(edge.u)
        } else {
            None
        }
    };
    let mut state = vec![0u8; n];
    let mut ptr = vec![0usize; n];
    for root in 0..n {
        if state[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, usize::MAX)];
        state[root] = 1;
        while let Some(&(x, _)) = stack.last() {
            if ptr[x] >= out[x].len() {
                state[x] = 2;
                stack.pop();
                continue;
            }
            let e = out[x][ptr[x]];
            let Some(y) = head(&f, e, x) else {
                ptr[x] += 1;
                continue;
            };
            match state[y] {
                0 => {
                    state[y] = 1;
                    stack.push((y, e));
                }
                1 => {
                    let pos = stack.iter().position(|&(v, _)| v == y).expect("gray vertex on stack");
                    let mut cyc: Vec<usize> = stack[pos + 1..].iter().map(|&(_, pe)| pe).collect();
                    cyc.push(e);
                    let amount = cyc.iter().map(|&c| f[c].abs()).fold(f64::INFINITY, f64::min);
                    for &c in &cyc {
                        let s = f[c].signum();
                        f[c] -= s * amount;
                        if f[c].abs() <= amount * 1e-15 {
                            f[c] = 0.0;
                        }
                    }
                    for &(v, _) in &stack[pos + 1..] {
                        state[v] = 0;
                    }
                    stack.truncate(pos + 1);
                }
                _ => ptr[x] += 1,
            }
        }
    }
    f
}

/// Adds corrections for the residual `b - Af`: up to `rounds` calls of
/// `inner`, then an exact spanning-tree route of what remains.
pub fn repair_residual(
    g: &Graph,
    f: &[f64],
    b: &[f64],
    rounds: usize,
    mut inner: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, usize)> {
    let mut f = f.to_vec();
    let tree = minimum_spanning_tree(g)?;
    let tol = balance_tol(b);
    let mut used = 0;
    let residual = |f: &[f64]| -> Result<Vec<f64>> {
        let d = divergence(g, f)?;
        let mut r: Vec<f64> = b.iter().zip(&d).map(|(x, y)| x - y).collect();
        let s: f64 = r.iter().sum::<f64>() / r.len().max(1) as f64;
        r.iter_mut().for_each(|x| *x -= s);
        Ok(r)
    };
    for _ in 0..rounds {
        let r = residual(&f)?;
        if l1(&r) <= tol {
            return Ok((f, used));
        }
        let add = inner(&r)?;
        used += 1;
        for (a, x) in f.iter_mut().zip(&add) {
            *a += x;
        }
    }
    let r = residual(&f)?;
    if l1(&r) > tol {
        let add = route_on_tree(g, &tree, &r)?;
        for (a, x) in f.iter_mut().zip(&add) {
            *a += x;
        }
    }
    Ok((f, used))
}

/// `(1+eps)`-approximate flow-potential pair from a calibrated routing matrix
/// with condition estimate `kappa`.
pub fn solve_transshipment(g: &Graph, b: &[f64], eps: f64, m: &RoutingMatrix, kappa: f64, cfg: &SolverConfig) -> Result<SolveReport> {
    if b.len() != g.n() {
        return Err(Error::Structural("demand length mismatch".into()));
    }
    check_balanced(b)?;
    g.require_connected()?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParam("epsilon must lie in (0, 1]".into()));
    }
    let n = g.n();
    let mut report = SolveReport {
        flow: vec![0.0; g.m()],
        potential: vec![0.0; n],
        epsilon: eps,
        iterations: 0,
        oracle_calls: 0,
        repair_rounds: 0,
        primal_cost: 0.0,
        dual_value: 0.0,
        used_exact: false,
    };
    if l1(b) == 0.0 {
        return Ok(report);
    }
    if eps < 1.0 / (n as f64 * n as f64) {
        let r = exact_transshipment(g, b)?;
        report.flow = r.witness_flow.expect("oracle flow");
        report.potential = r.witness_potential.expect("oracle potential");
        report.primal_cost = flow_cost(g, &report.flow);
        report.dual_value = dot(b, &report.potential);
        report.used_exact = true;
        return Ok(report);
    }
    let kappa = cfg.kappa_override.unwrap_or(kappa);
    let tree = minimum_spanning_tree(g)?;
    let rounds = cfg.max_repair_rounds.unwrap_or(((n.max(2)) as f64).log2().ceil() as usize);
    let mut gap = cfg.bisection_tolerance.unwrap_or(eps / 3.0);
    let mut first = search(g, &tree, b, m, eps, gap, kappa, cfg)?;
    for attempt in 0.. {
        let cost0 = flow_cost(g, &first.flow);
        let mut iterations = 0;
        let mut calls = 0;
        let (flow, used) = repair_residual(g, &first.flow, b, rounds, |r| {
            let direct = route_on_tree(g, &tree, r)?;
            if flow_cost(g, &direct) <= 0.25 * eps * cost0 {
                return Ok(direct);
            }
            let s = search(g, &tree, r, m, eps, eps, kappa, cfg)?;
            iterations += s.rounds;
            calls += s.calls;
            Ok(s.flow)
        })?;
        report.iterations += iterations;
        report.oracle_calls += calls;
        report.repair_rounds += used;
        report.flow = cancel_cycles(g, &flow);
        report.primal_cost = flow_cost(g, &report.flow);
        report.potential = first.potential.clone();
        report.dual_value = polish_potential(g, b, &mut report.potential, n);
        if report.primal_cost <= (1.0 + eps) * report.dual_value || attempt == 2 || first.steps >= cfg.max_bisection_steps {
            break;
        }
        gap /= 3.0;
        bisect(&mut first, g, b, m, eps, gap, kappa, cfg)?;
    }
    report.iterations += first.rounds;
    report.oracle_calls += first.calls;
    Ok(report)
}
