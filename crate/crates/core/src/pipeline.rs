//! End-to-end transshipment: embedding, routing matrix, calibration and the
//! MWU solver, applied per connected component.

use std::time::{Duration, Instant};

use crate::embedding::{bourgain_embed, default_levels, default_trials, jl_reduce, Embedding, PotentialOracle, Projection};
use crate::error::{Error, Result};
use crate::graph::{balance_tol, check_balanced, dot, flow_cost, is_integral, l1, normalize_aspect_ratio, Graph};
use crate::rng::derive_seed;
use crate::routing::{all_pairs, assemble_matrix, build_basis_histories, calibrate, min_separation, sample_pairs, RoutingMatrix, RoutingParams};
use crate::solver::{solve_transshipment, SolveReport, SolverConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub epsilon: f64,
    pub seed: u64,
    pub samples_s: Option<usize>,
    pub grid_base_w: Option<usize>,
    /// Target dimension of the random projection; `None` means `2 ceil(log2 n)`.
    pub jl_dim: Option<usize>,
    pub calibration_pairs: usize,
    pub solver: SolverConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            epsilon: 0.1,
            seed: 0,
            samples_s: None,
            grid_base_w: None,
            jl_dim: None,
            calibration_pairs: 2016,
            solver: SolverConfig::default(),
        }
    }
}

pub fn default_jl_dim(n: usize) -> usize {
    2 * ((n.max(2) as f64).log2().ceil() as usize)
}

/// Wall-clock time per stage, summed over components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimes {
    pub embed: Duration,
    pub route: Duration,
    pub calibrate: Duration,
    pub solve: Duration,
}

impl StageTimes {
    fn add(&mut self, o: &StageTimes) {
        self.embed += o.embed;
        self.route += o.route;
        self.calibrate += o.calibrate;
        self.solve += o.solve;
    }
}

/// Calibrated routing matrix over an embedding of `g`, normalized so that
/// `||R(chi_u - chi_v)||_1 >= d(u, v)` on the calibration pairs.
#[derive(Clone, Debug)]
pub struct Preconditioner {
    pub matrix: RoutingMatrix,
    pub kappa: f64,
    pub kappa_routing: f64,
    pub embedding: Embedding,
    pub point_scale: f64,
    pub restarts: usize,
    pub times: StageTimes,
}

pub fn build_preconditioner(g: &Graph, oracle: &dyn PotentialOracle, cfg: &PipelineConfig) -> Result<Preconditioner> {
    let n = g.n();
    let mut times = StageTimes::default();
    let clock = Instant::now();
    let e = bourgain_embed(g, oracle, default_trials(n), default_levels(n), derive_seed(cfg.seed, 1, 0, 0))?;
    let target = cfg.jl_dim.unwrap_or_else(|| default_jl_dim(n));
    let e = if target < e.dim { project(&e, g, target, cfg.seed)? } else { e };
    if n > 1 && !(e.contraction > 0.0) {
        return Err(Error::Stage { stage: "embedding", msg: "embedding collapsed two vertices".into() });
    }
    times.embed = clock.elapsed();
    let clock = Instant::now();
    let sep = min_separation(&e.points);
    let lambda = if sep.is_finite() { 1.0 / sep } else { 1.0 };
    let points: Vec<Vec<f64>> = e.points.iter().map(|p| p.iter().map(|x| x * lambda).collect()).collect();
    let params = RoutingParams::for_points(&points, cfg.grid_base_w, cfg.samples_s);
    let h = build_basis_histories(&points, &params, derive_seed(cfg.seed, 3, 0, 0))?;
    let m = assemble_matrix(&h);
    times.route = clock.elapsed();
    let clock = Instant::now();
    let pairs = if n * (n - 1) / 2 <= cfg.calibration_pairs { all_pairs(n) } else { sample_pairs(n, cfg.calibration_pairs, cfg.seed) };
    let (mut m, kappa_routing) = calibrate(&m, &points, &pairs);
    let c = if n > 1 { e.contraction } else { 1.0 };
    m.scale(1.0 / (lambda * c));
    let kappa = kappa_routing * if n > 1 { e.distortion() } else { 1.0 };
    times.calibrate = clock.elapsed();
    Ok(Preconditioner { matrix: m, kappa, kappa_routing, embedding: e, point_scale: lambda, restarts: h.restarts, times })
}

/// Random projection to `target` dimensions; retries on collapse and keeps
/// the unprojected points if every attempt collapses.
fn project(e: &Embedding, g: &Graph, target: usize, seed: u64) -> Result<Embedding> {
    if g.n() < 2 {
        return Ok(e.clone());
    }
    for attempt in 0..4 {
        let p = jl_reduce(e, g, target, derive_seed(seed, 2, attempt, 0), Projection::RandomSigns)?;
        if p.contraction > 0.0 {
            return Ok(p);
        }
    }
    Ok(e.clone())
}

#[derive(Clone, Debug)]
pub struct TransshipReport {
    pub flow: Vec<f64>,
    pub potential: Vec<f64>,
    pub primal_cost: f64,
    pub dual_value: f64,
    pub iterations: usize,
    pub oracle_calls: usize,
    pub repair_rounds: usize,
    pub kappa: f64,
    pub components: usize,
    pub times: StageTimes,
}

/// Solves on one connected graph.
pub fn transship_connected(g: &Graph, b: &[f64], oracle: &dyn PotentialOracle, cfg: &PipelineConfig) -> Result<SolveReport> {
    Ok(solve_connected(g, b, oracle, cfg)?.0)
}

fn solve_connected(g: &Graph, b: &[f64], oracle: &dyn PotentialOracle, cfg: &PipelineConfig) -> Result<(SolveReport, f64, StageTimes)> {
    if l1(b) == 0.0 || g.n() < 2 {
        return Ok((solve_trivial(g, b)?, 1.0, StageTimes::default()));
    }
    let pre = build_preconditioner(g, oracle, cfg)?;
    let clock = Instant::now();
    let rep = solve_transshipment(g, b, cfg.epsilon, &pre.matrix, pre.kappa, &cfg.solver)?;
    let mut times = pre.times;
    times.solve = clock.elapsed();
    Ok((rep, pre.kappa, times))
}

fn solve_trivial(g: &Graph, b: &[f64]) -> Result<SolveReport> {
    check_balanced(b)?;
    Ok(SolveReport {
        flow: vec![0.0; g.m()],
        potential: vec![0.0; g.n()],
        epsilon: 0.0,
        iterations: 0,
        oracle_calls: 0,
        repair_rounds: 0,
        primal_cost: 0.0,
        dual_value: 0.0,
        used_exact: false,
    })
}

/// Full transshipment on a possibly disconnected graph: aspect-ratio
/// normalization for integral demands, then one solve per component.
pub fn transship(g: &Graph, b: &[f64], oracle: &dyn PotentialOracle, cfg: &PipelineConfig) -> Result<TransshipReport> {
    if b.len() != g.n() {
        return Err(Error::Structural("demand length mismatch".into()));
    }
    check_balanced(b)?;
    let (comp, count) = g.components();
    let mut sums = vec![0.0; count];
    let mut mass = vec![0.0; count];
    for v in 0..g.n() {
        sums[comp[v]] += b[v];
        mass[comp[v]] += b[v].abs();
    }
    for c in 0..count {
        if sums[c].abs() > balance_tol(b).max(1e-9 * mass[c]) {
            return Err(Error::Infeasible(format!("component {c} has unbalanced demand {}", sums[c])));
        }
    }
    let (work, kept) = if is_integral(b) {
        let (h, rep) = normalize_aspect_ratio(g, b)?;
        (h, rep.kept_edges)
    } else {
        (g.clone(), (0..g.m()).collect())
    };
    let mut flow = vec![0.0; g.m()];
    let mut potential = vec![0.0; g.n()];
    let mut out = TransshipReport {
        flow: Vec::new(),
        potential: Vec::new(),
        primal_cost: 0.0,
        dual_value: 0.0,
        iterations: 0,
        oracle_calls: 0,
        repair_rounds: 0,
        kappa: 1.0,
        components: 0,
        times: StageTimes::default(),
    };
    let (wcomp, wcount) = work.components();
    let mut members = vec![Vec::new(); wcount];
    for v in 0..g.n() {
        members[wcomp[v]].push(v);
    }
    for (c, verts) in members.iter().enumerate() {
        let local_b: Vec<f64> = verts.iter().map(|&v| b[v]).collect();
        if l1(&local_b) == 0.0 {
            continue;
        }
        let (sub, ids) = work.induced(verts);
        let mut local_cfg = cfg.clone();
        local_cfg.seed = derive_seed(cfg.seed, 7, c as u64, 0);
        let (rep, kappa, times) = solve_connected(&sub, &local_b, oracle, &local_cfg)?;
        out.kappa = out.kappa.max(kappa);
        out.times.add(&times);
        for (i, &id) in ids.iter().enumerate() {
            flow[kept[id]] = rep.flow[i];
        }
        for (i, &v) in verts.iter().enumerate() {
            potential[v] = rep.potential[i];
        }
        out.iterations += rep.iterations;
        out.oracle_calls += rep.oracle_calls;
        out.repair_rounds += rep.repair_rounds;
        out.components += 1;
    }
    let (potential, _) = feasible_on(g, b, &potential);
    out.primal_cost = flow_cost(g, &flow);
    out.dual_value = dot(b, &potential);
    out.flow = flow;
    out.potential = potential;
    Ok(out)
}

/// Scales `phi` down just enough to be feasible on `g`.
fn feasible_on(g: &Graph, b: &[f64], phi: &[f64]) -> (Vec<f64>, f64) {
    let ratio = g.edges().iter().map(|e| (phi[e.u] - phi[e.v]).abs() / e.w).fold(0.0, f64::max);
    if ratio <= 1.0 {
        return (phi.to_vec(), dot(b, phi));
    }
    let out: Vec<f64> = phi.iter().map(|x| x / ratio).collect();
    let v = dot(b, &out);
    (out, v)
}
