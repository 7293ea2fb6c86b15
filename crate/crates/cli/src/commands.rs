use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde_json::{json, Value};
use transship_core::embedding::{bourgain_embed, default_levels, default_trials, jl_reduce, DijkstraOracle, Projection};
use transship_core::error::Error;
use transship_core::gen as generate;
use transship_core::graph::{divergence, l1, Graph};
use transship_core::io;
use transship_core::oracles::{exact_apsp, line_routing_demo};
use transship_core::pipeline::{transship as run_transship, PipelineConfig};
use transship_core::rng::derive_seed;
use transship_core::routing::{run_routing, RoutingParams};
use transship_core::sparsify::{build_ultra_spanner, SpannerConfig};
use transship_core::sssp::{recursive_sssp, SsspConfig};

use crate::report::{num, path_value, read_file, write_file, Report};
use crate::{Common, Failure, GenKind, Routing};

pub fn load_graph(p: &PathBuf) -> Result<Graph, Failure> {
    Ok(io::parse_graph(&read_file(p)?)?)
}

pub fn check_epsilon(eps: f64) -> Result<(), Failure> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Failure::Core(Error::InvalidParam(format!("epsilon {eps} must lie in (0, 1]"))))
    }
}

fn routing_config(r: &Routing) -> Value {
    json!({ "samples_s": r.samples_s, "grid_base_w": r.grid_base_w, "kappa": r.kappa })
}

fn pipeline_config(eps: f64, seed: u64, r: &Routing) -> PipelineConfig {
    let mut cfg = PipelineConfig { epsilon: eps, seed, samples_s: r.samples_s, grid_base_w: r.grid_base_w, ..PipelineConfig::default() };
    cfg.solver.epsilon = eps;
    cfg.solver.kappa_override = r.kappa;
    cfg.solver.seed = seed;
    cfg
}

#[derive(Args, Debug)]
pub struct TransshipArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub demands: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[command(flatten)]
    pub routing: Routing,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub flow_out: Option<PathBuf>,
    #[arg(long)]
    pub potential_out: Option<PathBuf>,
}

pub fn transship(a: &TransshipArgs) -> Result<(), Failure> {
    let clock = Instant::now();
    check_epsilon(a.epsilon)?;
    let g = load_graph(&a.graph)?;
    let b = io::parse_demands(&read_file(&a.demands)?, g.n())?;
    let cfg = pipeline_config(a.epsilon, a.common.seed, &a.routing);
    let mut report = Report::new(
        "transship",
        json!({
            "graph": a.graph.display().to_string(),
            "demands": a.demands.display().to_string(),
            "epsilon": a.epsilon,
            "seed": a.common.seed,
            "routing": routing_config(&a.routing),
            "calibration_pairs": cfg.calibration_pairs,
            "jl_dim": cfg.jl_dim,
            "solver": {
                "mwu_constant": cfg.solver.mwu_constant,
                "max_mwu_rounds": cfg.solver.max_mwu_rounds,
                "step_multiplier": cfg.solver.step_multiplier,
                "max_bisection_steps": cfg.solver.max_bisection_steps,
                "max_repair_rounds": cfg.solver.max_repair_rounds,
            },
            "flow_out": path_value(&a.flow_out),
            "potential_out": path_value(&a.potential_out),
        }),
    );
    let r = run_transship(&g, &b, &DijkstraOracle, &cfg)?;
    let residual = l1(&divergence(&g, &r.flow)?.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
    let gap = if r.dual_value > 0.0 {
        r.primal_cost / r.dual_value
    } else if r.primal_cost == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    report.results = json!({
        "n": g.n(),
        "m": g.m(),
        "demand_l1": l1(&b),
        "primal_cost": num(r.primal_cost),
        "dual_value": num(r.dual_value),
        "gap": num(gap),
        "conservation_residual_l1": num(residual),
        "iterations": r.iterations,
        "oracle_calls": r.oracle_calls,
        "repair_rounds": r.repair_rounds,
        "kappa": num(r.kappa),
        "components_solved": r.components,
    });
    if let Some(p) = &a.flow_out {
        write_file(p, &io::format_flow(&r.flow))?;
    }
    if let Some(p) = &a.potential_out {
        write_file(p, &io::format_potential(&r.potential))?;
    }
    report.time("embed", r.times.embed);
    report.time("route", r.times.route);
    report.time("calibrate", r.times.calibrate);
    report.time("solve", r.times.solve);
    report.time("total", clock.elapsed());
    report.emit(&a.common)
}

#[derive(Args, Debug)]
pub struct SsspArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Source vertex; repeat for a source set.
    #[arg(long = "source", required = true)]
    pub sources: Vec<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub epsilon: f64,
    /// Graphs with at most this many edges are solved exactly.
    #[arg(long, default_value_t = 512)]
    pub base_threshold: usize,
    #[arg(long)]
    pub spanner_k: Option<f64>,
    #[command(flatten)]
    pub routing: Routing,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub tree_out: Option<PathBuf>,
    #[arg(long)]
    pub potential_out: Option<PathBuf>,
}

pub fn sssp(a: &SsspArgs) -> Result<(), Failure> {
    let clock = Instant::now();
    check_epsilon(a.epsilon)?;
    let g = load_graph(&a.graph)?;
    let cfg = SsspConfig {
        epsilon: a.epsilon,
        seed: a.common.seed,
        base_threshold: a.base_threshold,
        spanner_k: a.spanner_k,
        pipeline: pipeline_config(a.epsilon, a.common.seed, &a.routing),
        ..SsspConfig::default()
    };
    let mut report = Report::new(
        "sssp",
        json!({
            "graph": a.graph.display().to_string(),
            "sources": a.sources,
            "epsilon": a.epsilon,
            "seed": a.common.seed,
            "base_threshold": cfg.base_threshold,
            "max_depth": cfg.max_depth,
            "loop_constant": cfg.loop_constant,
            "epsilon_floor": cfg.epsilon_floor,
            "spanner_k": cfg.spanner_k,
            "spanner_c": cfg.spanner.c,
            "routing": routing_config(&a.routing),
            "tree_out": path_value(&a.tree_out),
            "potential_out": path_value(&a.potential_out),
        }),
    );
    let r = recursive_sssp(&g, &a.sources, &cfg)?;
    let tree = r.tree_distances(&g);
    report.results = json!({
        "n": g.n(),
        "m": g.m(),
        "rounds": r.rounds,
        "tree_valid": tree.is_some(),
        "tree_distance_sum": tree.as_ref().map(|d| num(d.iter().sum())),
        "distance_sum": num(r.dist.iter().sum()),
        "max_distance": num(r.dist.iter().cloned().fold(0.0, f64::max)),
        "potential_alpha": num(r.potential.alpha),
    });
    if let Some(p) = &a.tree_out {
        write_file(p, &io::format_tree(&r.parent, &r.dist))?;
    }
    if let Some(p) = &a.potential_out {
        write_file(p, &io::format_potential(&r.potential.phi))?;
    }
    report.time("total", clock.elapsed());
    report.emit(&a.common)
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Random sets per level; defaults to `8 ceil(log2 n)`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Sampling levels; defaults to `ceil(log2 n)`.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Project to this many dimensions with random signs.
    #[arg(long)]
    pub jl_dim: Option<usize>,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub points_out: Option<PathBuf>,
}

pub fn embed(a: &EmbedArgs) -> Result<(), Failure> {
    let clock = Instant::now();
    let g = load_graph(&a.graph)?;
    g.require_connected()?;
    let trials = a.trials.unwrap_or_else(|| default_trials(g.n()));
    let levels = a.levels.unwrap_or_else(|| default_levels(g.n()));
    let mut report = Report::new(
        "embed",
        json!({
            "graph": a.graph.display().to_string(),
            "seed": a.common.seed,
            "trials": trials,
            "levels": levels,
            "jl_dim": a.jl_dim,
            "points_out": path_value(&a.points_out),
        }),
    );
    let mut e = bourgain_embed(&g, &DijkstraOracle, trials, levels, a.common.seed)?;
    let full_dim = e.dim;
    if let Some(k) = a.jl_dim {
        e = jl_reduce(&e, &g, k, derive_seed(a.common.seed, 2, 0, 0), Projection::RandomSigns)?;
    }
    report.results = json!({
        "n": g.n(),
        "unprojected_dim": full_dim,
        "dim": e.dim,
        "contraction": num(e.contraction),
        "expansion": num(e.expansion),
        "distortion": num(e.distortion()),
        "scale": num(e.scale),
    });
    if let Some(p) = &a.points_out {
        write_file(p, &io::format_embedding(&e.points, e.scale))?;
    }
    report.time("total", clock.elapsed());
    report.emit(&a.common)
}

#[derive(Args, Debug)]
pub struct SpannerArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Stretch parameter; defaults to `max(3, ceil(log2 n))`.
    #[arg(long)]
    pub spanner_k: Option<f64>,
    /// Restarts after failed attempts; defaults to `ceil(log2 n)`.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Measure the exact stretch when `n` is at most this.
    #[arg(long, default_value_t = 256)]
    pub verify_cap: usize,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub subgraph_out: Option<PathBuf>,
}

pub fn spanner(a: &SpannerArgs) -> Result<(), Failure> {
    let clock = Instant::now();
    let g = load_graph(&a.graph)?;
    let n = g.n();
    let k = a.spanner_k.unwrap_or_else(|| (n.max(2) as f64).log2().ceil().max(3.0));
    let cfg = SpannerConfig { max_restarts: a.restarts, ..SpannerConfig::default() };
    let mut report = Report::new(
        "spanner",
        json!({
            "graph": a.graph.display().to_string(),
            "seed": a.common.seed,
            "spanner_k": k,
            "spanner_c": cfg.c,
            "restarts": a.restarts,
            "verify_cap": a.verify_cap,
            "subgraph_out": path_value(&a.subgraph_out),
        }),
    );
    let sp = build_ultra_spanner(&g, k, a.common.seed, &cfg)?;
    let stretch = (n <= a.verify_cap).then(|| {
        let d = exact_apsp(&g);
        let dh = exact_apsp(&sp.subgraph);
        let mut worst = 1.0f64;
        for u in 0..n {
            for v in u + 1..n {
                if d[u][v].is_finite() && d[u][v] > 0.0 {
                    worst = worst.max(dh[u][v] / d[u][v]);
                }
            }
        }
        num(worst)
    });
    report.results = json!({
        "n": n,
        "m": g.m(),
        "edges": sp.subgraph.m(),
        "excess": sp.subgraph.m() as i64 - (n as i64 - 1),
        "edge_bound": (n as f64 - 1.0) + 2.0 * sp.beta * g.m() as f64,
        "beta": sp.beta,
        "rounds_used": sp.rounds_used,
        "stretch": stretch,
    });
    if let Some(p) = &a.subgraph_out {
        write_file(p, &io::format_graph(&sp.subgraph))?;
    }
    report.time("total", clock.elapsed());
    report.emit(&a.common)
}

#[derive(Args, Debug)]
pub struct RouteDemoArgs {
    /// Comma-separated `coordinate:demand` pairs on the integer line.
    #[arg(long, default_value = "5:1,14:-1", allow_hyphen_values = true)]
    pub points: String,
    /// Largest level; coordinates lie in `[0, 2^max_level]`.
    #[arg(long, default_value_t = 4)]
    pub max_level: u32,
    #[command(flatten)]
    pub routing: Routing,
    #[command(flatten)]
    pub common: Common,
}

fn parse_points(s: &str) -> Result<Vec<(f64, i64)>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (x, d) = t.split_once(':').ok_or_else(|| Failure::Input(format!("point '{t}' is not coordinate:demand")))?;
            let x: f64 = x.trim().parse().map_err(|_| Failure::Input(format!("bad coordinate in '{t}'")))?;
            let d: i64 = d.trim().parse().map_err(|_| Failure::Input(format!("bad demand in '{t}'")))?;
            Ok((x, d))
        })
        .collect()
}

pub fn route_demo(a: &RouteDemoArgs) -> Result<(), Failure> {
    let clock = Instant::now();
    let pts = parse_points(&a.points)?;
    let mut report = Report::new(
        "route-demo",
        json!({
            "points": pts.iter().map(|&(x, d)| json!([x, d])).collect::<Vec<_>>(),
            "max_level": a.max_level,
            "seed": a.common.seed,
            "routing": { "samples_s": a.routing.samples_s, "grid_base_w": a.routing.grid_base_w },
        }),
    );
    let demo = line_routing_demo(&pts, a.max_level)?;
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for &(x, d) in &pts {
        match merged.iter_mut().find(|p| p.0 == x) {
            Some(p) => p.1 += d as f64,
            None => merged.push((x, d as f64)),
        }
    }
    let trace = if merged.is_empty() {
        Value::Null
    } else {
        let points: Vec<Vec<f64>> = merged.iter().map(|p| vec![p.0]).collect();
        let b: Vec<f64> = merged.iter().map(|p| p.1).collect();
        let params = RoutingParams::for_points(&points, a.routing.grid_base_w, a.routing.samples_s);
        let t = run_routing(&points, &b, &params, a.common.seed)?;
        json!({
            "w": params.w,
            "s": params.s,
            "levels": params.levels,
            "iteration_costs": t.iteration_costs.iter().map(|&c| num(c)).collect::<Vec<_>>(),
            "total": num(t.total),
        })
    };
    let ratio = |r: &transship_core::oracles::Dyadic| r.to_string();
    report.results = json!({
        "iteration_costs": demo.iteration_costs.iter().map(ratio).collect::<Vec<_>>(),
        "total": ratio(&demo.total),
        "level_opt": demo.level_opt.iter().map(ratio).collect::<Vec<_>>(),
        "shifted_grid_trace": trace,
    });
    report.time("total", clock.elapsed());
    report.emit(&a.common)
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub kind: GenKind,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Edge count for `random-connected`; defaults to `2n`.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub rows: usize,
    #[arg(long, default_value_t = 4)]
    pub cols: usize,
    /// Uniform weight for the structured families.
    #[arg(long, default_value_t = 1.0)]
    pub weight: f64,
    /// Largest integral weight for `random-connected`.
    #[arg(long, default_value_t = 100)]
    pub max_w: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Graph file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write random balanced integral demands here.
    #[arg(long)]
    pub demands_out: Option<PathBuf>,
    /// Largest demand magnitude; defaults to `n - 1`.
    #[arg(long)]
    pub max_abs: Option<i64>,
}

pub fn gen(a: &GenArgs) -> Result<(), Failure> {
    let need = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Failure::Core(Error::InvalidParam(msg.into()))) };
    need(a.weight > 0.0 && a.weight.is_finite(), "weight must be positive")?;
    let g = match a.kind {
        GenKind::Path => {
            need(a.n >= 1, "n must be positive")?;
            generate::path(a.n, a.weight)
        }
        GenKind::Cycle => {
            need(a.n >= 3, "a cycle needs at least 3 vertices")?;
            generate::cycle(a.n, a.weight)
        }
        GenKind::Grid => {
            need(a.rows >= 1 && a.cols >= 1, "grid sides must be positive")?;
            generate::grid(a.rows, a.cols, a.weight)
        }
        GenKind::Complete => {
            need(a.n >= 1, "n must be positive")?;
            generate::complete(a.n, a.weight)
        }
        GenKind::RandomConnected => {
            let m = a.m.unwrap_or(2 * a.n);
            need(a.n >= 1, "n must be positive")?;
            need(a.max_w >= 1, "max-w must be positive")?;
            generate::random_connected(a.n, m, a.max_w, a.seed)
        }
    };
    let text = io::format_graph(&g);
    match &a.output {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &a.demands_out {
        let max_abs = a.max_abs.unwrap_or(g.n() as i64 - 1).max(0);
        let b = generate::random_demands(g.n(), max_abs, derive_seed(a.seed, 0xDE, 0, 0));
        write_file(p, &io::format_demands(&b))?;
    }
    Ok(())
}
