//! Acceptance criteria, one PASS/FAIL line each. Pass criterion numbers as
//! arguments to run a subset.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;
use transship_core::embedding::{bourgain_embed, default_levels, default_trials, l1_dist, DijkstraOracle};
use transship_core::gen;
use transship_core::graph::{
    dijkstra, divergence, dot, flow_cost, l1, minimum_spanning_tree, validate_sssp_potential, validate_sssp_potential_tol, Graph, SsspPotential,
};
use transship_core::io;
use transship_core::oracles::{exact_apsp, exact_transshipment};
use transship_core::pipeline::{build_preconditioner, PipelineConfig};
use transship_core::routing::{all_pairs, assemble_matrix, build_basis_histories, calibrate, sample_pairs, RoutingParams};
use transship_core::sparsify::{build_ultra_spanner, decompose_core, extend_potential, SpannerConfig};
use transship_core::sssp::{expected_sssp_from_flow, level_epsilon, EsssConfig, PipelineSolver, TsSolver};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn bin(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_transship")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

fn bin_ok(args: &[&str]) -> Value {
    let (code, out) = bin(args);
    assert_eq!(code, 0, "{args:?}");
    serde_json::from_str(&out).expect("json report")
}

fn gen_ok(args: &[&str]) {
    assert_eq!(bin(args).0, 0, "{args:?}");
}

fn p(x: &Path) -> &str {
    x.to_str().unwrap()
}

fn read(x: &Path) -> String {
    std::fs::read_to_string(x).unwrap()
}

fn le(a: f64, b: f64) -> bool {
    a <= b + 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn figure() -> Outcome {
    let clock = Instant::now();
    let v = bin_ok(&["route-demo", "--points", "5:1,14:-1", "--max-level", "4"]);
    let costs: Vec<String> = v["results"]["iteration_costs"].as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect();
    let opt: Vec<String> = v["results"]["level_opt"].as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect();
    let pass = costs == ["1", "3", "5", "3", "9"] && opt.iter().all(|x| x == "18") && clock.elapsed().as_secs_f64() < 1.0;
    outcome(pass, format!("iteration costs {}, level opt {}", costs.join(","), opt.join(",")))
}

/// Criteria 2 and 3 share their runs.
fn transshipment(dir: &TempDir) -> (Outcome, Outcome) {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut within, mut sandwich, mut exact_flow) = (0, 0, 0);
    let mut worst_ratio = 1.0f64;
    let mut worst_residual = 0.0f64;
    let runs = 100;
    for i in 0..runs {
        let n = [16, 32, 64][i % 3];
        let m = rng.gen_range(n..=4 * n);
        let g = dir.path().join(format!("t{i}.g"));
        let b = dir.path().join(format!("t{i}.b"));
        let f = dir.path().join(format!("t{i}.f"));
        let phi = dir.path().join(format!("t{i}.p"));
        let seed = i.to_string();
        gen_ok(&["gen", "random-connected", "--n", &n.to_string(), "--m", &m.to_string(), "--max-w", "100", "--seed", &seed, "--output", p(&g), "--demands-out", p(&b)]);
        bin_ok(&["transship", "--graph", p(&g), "--demands", p(&b), "--epsilon", "0.1", "--seed", &seed, "--flow-out", p(&f), "--potential-out", p(&phi)]);
        let graph = io::parse_graph(&read(&g)).unwrap();
        let demand = io::parse_demands(&read(&b), n).unwrap();
        let flow = io::parse_flow(&read(&f), graph.m()).unwrap();
        let pot = io::parse_potential(&read(&phi), n).unwrap();
        let opt = exact_transshipment(&graph, &demand).unwrap().opt_cost;
        let cost = flow_cost(&graph, &flow);
        let dual = dot(&demand, &pot);
        let residual = l1(&divergence(&graph, &flow).unwrap().iter().zip(&demand).map(|(x, y)| x - y).collect::<Vec<_>>());
        if le(cost, 1.1 * opt) {
            within += 1;
        }
        if le(dual, opt) && le(opt, cost) {
            sandwich += 1;
        }
        if residual <= 1e-9 * l1(&demand) {
            exact_flow += 1;
        }
        if opt > 0.0 {
            worst_ratio = worst_ratio.max(cost / opt);
        }
        worst_residual = worst_residual.max(residual / l1(&demand).max(1.0));
    }
    let secs = clock.elapsed().as_secs_f64();
    (
        outcome(
            within >= 95 && sandwich == runs && secs < 300.0,
            format!("{within}/{runs} within 1.1 opt (worst {worst_ratio:.4}), sandwich {sandwich}/{runs}, {secs:.0} s"),
        ),
        outcome(exact_flow == runs, format!("{exact_flow}/{runs} flows conserve, worst relative residual {worst_residual:.2e}")),
    )
}

/// Tree distances from a parsed tree file; `None` if it is not a spanning
/// tree of graph edges rooted at `s`.
fn tree_check(g: &Graph, lines: &[io::TreeLine], s: usize) -> Option<Vec<f64>> {
    let n = g.n();
    let roots: Vec<usize> = lines.iter().filter(|l| l.parent.is_none()).map(|l| l.vertex).collect();
    if roots != [s] {
        return None;
    }
    let mut children = vec![Vec::new(); n];
    for l in lines {
        if let Some(q) = l.parent {
            let w = g.neighbors(l.vertex).iter().filter(|x| x.0 == q).map(|x| g.edge(x.1).w).reduce(f64::min)?;
            children[q].push((l.vertex, w));
        }
    }
    let mut dist = vec![f64::NAN; n];
    dist[s] = 0.0;
    let mut stack = vec![s];
    let mut reached = 1;
    while let Some(v) = stack.pop() {
        for &(c, w) in &children[v] {
            dist[c] = dist[v] + w;
            reached += 1;
            stack.push(c);
        }
    }
    (reached == n).then_some(dist)
}

fn sssp_sandwich(dir: &TempDir) -> Outcome {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let runs = 50;
    let (mut good, mut succeeded, mut trees) = (0, 0, 0);
    let mut worst = 1.0f64;
    for i in 0..runs {
        let n = [16, 32, 48, 64][i % 4];
        let m = rng.gen_range(n..=3 * n);
        let s = rng.gen_range(0..n);
        let g = dir.path().join(format!("s{i}.g"));
        let t = dir.path().join(format!("s{i}.t"));
        let phi = dir.path().join(format!("s{i}.p"));
        let seed = i.to_string();
        gen_ok(&["gen", "random-connected", "--n", &n.to_string(), "--m", &m.to_string(), "--max-w", "50", "--seed", &seed, "--output", p(&g)]);
        let (code, _) = bin(&[
            "sssp", "--graph", p(&g), "--source", &s.to_string(), "--epsilon", "0.2", "--base-threshold", "0", "--seed", &seed, "--tree-out", p(&t),
            "--potential-out", p(&phi),
        ]);
        if code != 0 {
            continue;
        }
        succeeded += 1;
        let graph = io::parse_graph(&read(&g)).unwrap();
        let lines = io::parse_tree(&read(&t), n).unwrap();
        let pot = io::parse_potential(&read(&phi), n).unwrap();
        let (d, _) = dijkstra(&graph, &[s]).unwrap();
        let Some(dt) = tree_check(&graph, &lines, s) else { continue };
        trees += 1;
        let ok_dist = (0..n).all(|v| le(d[v], lines[v].dist) && le(dt[v], lines[v].dist) && le(lines[v].dist, 1.2 * d[v]));
        worst = (0..n).filter(|&v| d[v] > 0.0).map(|v| lines[v].dist / d[v]).fold(worst, f64::max);
        if ok_dist && validate_sssp_potential(&graph, &pot, &[s], 1.2, &d) {
            good += 1;
        }
    }
    outcome(
        good * 100 >= 95 * runs && trees == succeeded,
        format!("{good}/{runs} sandwiched with valid potential (worst d*/d {worst:.4}), trees {trees}/{succeeded}, {:.0} s", clock.elapsed().as_secs_f64()),
    )
}

fn expected_sssp() -> Outcome {
    let g = gen::random_connected(48, 144, 20, 3);
    let s = 0;
    let mut b = vec![1.0; 48];
    b[s] = -47.0;
    let (d, _) = dijkstra(&g, &[s]).unwrap();
    let opt: f64 = d.iter().sum();
    let cfg = PipelineConfig::default();
    let pre = build_preconditioner(&g, &DijkstraOracle, &cfg).unwrap();
    let mut solver = PipelineSolver::new(cfg, 0.1);
    solver.pin(g.clone(), pre);
    let eps = 0.5;
    let neg: Vec<f64> = b.iter().map(|x| -x).collect();
    let flow = solver.solve(&g, &neg, level_epsilon(eps, 48)).unwrap().flow;
    let runs = 200;
    let samples: Vec<f64> = (0..runs)
        .map(|seed| expected_sssp_from_flow(&g, s, &b, &flow, eps, &mut solver, &EsssConfig::default(), seed).unwrap().weighted_cost(&g, &b))
        .collect();
    let mean = samples.iter().sum::<f64>() / runs as f64;
    let se = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64 / runs as f64).sqrt();
    let bound = 1.5 * opt + 3.0 * se;
    outcome(mean <= bound, format!("mean {mean:.2}, optimum {opt}, bound {bound:.2}"))
}

fn ultra_spanner() -> Outcome {
    let n = 128usize;
    let m = 1024usize;
    let k = 8.0;
    let (mut ok, mut built) = (0, 0);
    let mut worst = 1.0f64;
    let mut max_edges = 0;
    for seed in 0..20 {
        let g = gen::random_connected(n, m, (n * n * n) as u64, seed);
        let Ok(sp) = build_ultra_spanner(&g, k, seed, &SpannerConfig::default()) else { continue };
        let restarts = (n as f64).log2().ceil() as usize;
        if sp.rounds_used > restarts {
            continue;
        }
        built += 1;
        let dg = exact_apsp(&g);
        let dh = exact_apsp(&sp.subgraph);
        let stretch = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).map(|(u, v)| dh[u][v] / dg[u][v]).fold(1.0, f64::max);
        worst = worst.max(stretch);
        max_edges = max_edges.max(sp.subgraph.m());
        let bound = (n - 1) as f64 + 2.0 * (2.0 * (n as f64).ln() / k) * m as f64;
        if stretch <= k * k && sp.subgraph.m() as f64 <= bound {
            ok += 1;
        }
    }
    outcome(built == 20 && ok == built, format!("{built}/20 built, {ok} within bounds, worst stretch {worst:.3}, most edges {max_edges}"))
}

fn vertex_sparsification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut size_ok, mut potential_ok) = (0, 0);
    for seed in 0..50u64 {
        let n = rng.gen_range(20..=200usize);
        let t = rng.gen_range(1..=64usize);
        let g = gen::random_connected(n, n - 1 + t, 100, seed);
        let tree = minimum_spanning_tree(&g).unwrap();
        let s = rng.gen_range(0..n);
        let dec = decompose_core(&g, &tree, s).unwrap();
        if dec.core.n() <= 4 * t && dec.core.m() <= 5 * t {
            size_ok += 1;
        }
        let sid = dec.core_index(s).unwrap();
        let (core_d, _) = dijkstra(&dec.core, &[sid]).unwrap();
        let core_phi = SsspPotential { phi: core_d, sources: vec![sid], alpha: 1.0 };
        let phi = extend_potential(&g, &dec, &core_phi).unwrap();
        let (d, _) = dijkstra(&g, &[s]).unwrap();
        if validate_sssp_potential_tol(&g, &phi.phi, &[s], 1.0, &d, 1e-7) {
            potential_ok += 1;
        }
    }
    outcome(size_ok == 50 && potential_ok == 50, format!("core size {size_ok}/50, exact extension {potential_ok}/50"))
}

fn embedding() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut upper, mut contraction) = (0, 0);
    let mut worst = f64::INFINITY;
    for seed in 0..20u64 {
        let n = [32, 64, 128, 256][seed as usize % 4];
        let g = gen::random_connected(n, rng.gen_range(n..=4 * n), 100, seed);
        let e = bourgain_embed(&g, &DijkstraOracle, default_trials(n), default_levels(n), seed).unwrap();
        let d = exact_apsp(&g);
        let mut lo = f64::INFINITY;
        let mut bounded = true;
        for u in 0..n {
            for v in u + 1..n {
                let x = l1_dist(&e.points[u], &e.points[v]);
                bounded &= x <= d[u][v] * (1.0 + 1e-9);
                lo = lo.min(x / d[u][v]);
            }
        }
        upper += bounded as usize;
        let l = (n as f64).log2();
        if lo >= 1.0 / (64.0 * l * l * l) {
            contraction += 1;
        }
        worst = worst.min(lo * 64.0 * l * l * l);
    }
    outcome(
        upper == 20 && contraction * 100 >= 95 * 20,
        format!("upper bound {upper}/20, contraction {contraction}/20, weakest contraction at {worst:.1}x the floor"),
    )
}

fn embedded_points(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let g = gen::random_connected(n, 4 * n, 20, seed);
    let cfg = PipelineConfig { seed, ..PipelineConfig::default() };
    let pre = build_preconditioner(&g, &DijkstraOracle, &cfg).unwrap();
    pre.embedding.points.iter().map(|x| x.iter().map(|c| c * pre.point_scale).collect()).collect()
}

fn routing_sandwich() -> Outcome {
    let n = 64;
    let mut pass = true;
    let mut worst_in = 1.0f64;
    let mut worst_kappa_ratio = 0.0f64;
    let mut worst_out = 1.0f64;
    for seed in 0..10u64 {
        let pts = embedded_points(n, seed);
        let params = RoutingParams::for_points(&pts, None, None);
        let m = assemble_matrix(&build_basis_histories(&pts, &params, seed).unwrap());
        let pairs = sample_pairs(n, 200, seed + 100);
        let (c, kappa) = calibrate(&m, &pts, &all_pairs(n));
        let cap = 8.0 * pts[0].len() as f64 * params.w as f64 * params.levels as f64;
        let lower = pairs.iter().filter(|&&(u, v)| c.pair_cost(u, v) >= l1_dist(&pts[u], &pts[v])).count();
        let upper = pairs.iter().filter(|&&(u, v)| c.pair_cost(u, v) <= kappa * l1_dist(&pts[u], &pts[v]) * (1.0 + 1e-9)).count();
        worst_in = worst_in.min(lower as f64 / 200.0);
        worst_kappa_ratio = worst_kappa_ratio.max(kappa / cap);
        let (c_out, _) = calibrate(&m, &pts, &sample_pairs(n, 200, seed + 200));
        let out = pairs.iter().filter(|&&(u, v)| c_out.pair_cost(u, v) >= l1_dist(&pts[u], &pts[v])).count();
        worst_out = worst_out.min(out as f64 / 200.0);
        pass &= lower == 200 && upper == 200 && kappa <= cap && out >= 180;
    }
    outcome(
        pass,
        format!("in-sample lower bound {worst_in:.3}, out-of-sample {worst_out:.3}, largest kappa / (8 k w T) {worst_kappa_ratio:.4}"),
    )
}

fn adjoint() -> Outcome {
    let pts = embedded_points(64, 10);
    let params = RoutingParams::for_points(&pts, None, None);
    let m = assemble_matrix(&build_basis_histories(&pts, &params, 10).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    let mut ok = 0;
    for _ in 0..100 {
        let b: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..m.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rb = m.matvec(&b);
        let lhs = dot(&y, &rb);
        let rhs = dot(&m.matvec_transposed(&y), &b);
        let scale = dot(&y, &y).sqrt() * dot(&rb, &rb).sqrt() + 1.0;
        worst = worst.max((lhs - rhs).abs() / scale);
        if (lhs - rhs).abs() <= 1e-9 * scale {
            ok += 1;
        }
    }
    outcome(ok == 100, format!("{ok}/100 pairs, worst relative gap {worst:.2e}"))
}

fn strip_timing(report: &str) -> String {
    let mut v: Value = serde_json::from_str(report).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v.to_string()
}

fn determinism(dir: &TempDir) -> Outcome {
    let path = |name: &str| dir.path().join(name);
    let (g, b) = (path("d.g"), path("d.b"));
    gen_ok(&["gen", "random-connected", "--n", "40", "--m", "120", "--seed", "11", "--output", p(&g), "--demands-out", p(&b)]);
    let commands: Vec<(&str, Vec<String>, Vec<&str>)> = vec![
        ("gen", vec!["gen".into(), "random-connected".into(), "--n".into(), "40".into(), "--m".into(), "120".into(), "--seed".into(), "11".into()], vec![]),
        ("transship", vec!["transship".into(), "--graph".into(), p(&g).into(), "--demands".into(), p(&b).into(), "--seed".into(), "5".into()], vec!["--flow-out", "--potential-out"]),
        ("sssp", vec!["sssp".into(), "--graph".into(), p(&g).into(), "--source".into(), "3".into(), "--base-threshold".into(), "0".into(), "--seed".into(), "5".into()], vec!["--tree-out", "--potential-out"]),
        ("embed", vec!["embed".into(), "--graph".into(), p(&g).into(), "--seed".into(), "5".into(), "--jl-dim".into(), "8".into()], vec!["--points-out"]),
        ("spanner", vec!["spanner".into(), "--graph".into(), p(&g).into(), "--spanner-k".into(), "4".into(), "--seed".into(), "5".into()], vec!["--subgraph-out"]),
        ("route-demo", vec!["route-demo".into(), "--seed".into(), "5".into()], vec![]),
    ];
    let mut differing = Vec::new();
    let mut runs: Vec<Vec<(String, String)>> = Vec::new();
    for _ in 0..2 {
        let mut got = Vec::new();
        for (name, args, outs) in &commands {
            let mut args = args.clone();
            let files: Vec<PathBuf> = outs.iter().enumerate().map(|(i, _)| path(&format!("{name}.{i}"))).collect();
            for (flag, f) in outs.iter().zip(&files) {
                args.push(flag.to_string());
                args.push(p(f).to_string());
            }
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            let (_, stdout) = bin(&refs);
            let report = if *name == "gen" { stdout } else { strip_timing(&stdout) };
            let artifacts: String = files.iter().map(|f| read(f)).collect();
            got.push((report, artifacts));
        }
        runs.push(got);
    }
    let (f, phi) = (path("transship.0"), path("transship.1"));
    let verify = ["verify", "--graph", p(&g), "--demands", p(&b), "--flow", p(&f), "--potential", p(&phi)];
    let v1 = strip_timing(&bin(&verify).1);
    let v2 = strip_timing(&bin(&verify).1);
    for (i, (name, _, _)) in commands.iter().enumerate() {
        if runs[0][i] != runs[1][i] {
            differing.push(*name);
        }
    }
    if v1 != v2 {
        differing.push("verify");
    }
    let detail = if differing.is_empty() { format!("{} commands byte-identical apart from timing", commands.len() + 1) } else { format!("differ: {differing:?}") };
    outcome(differing.is_empty(), detail)
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |i: usize| wanted.is_empty() || wanted.contains(&i);
    let dir = TempDir::new().unwrap();
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |i: usize, o: Outcome| {
        println!("criterion {i:>2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((i, o));
    };
    if want(1) {
        report(1, figure());
    }
    if want(2) || want(3) {
        let (a, b) = transshipment(&dir);
        report(2, a);
        report(3, b);
    }
    if want(4) {
        report(4, sssp_sandwich(&dir));
    }
    if want(5) {
        report(5, expected_sssp());
    }
    if want(6) {
        report(6, ultra_spanner());
    }
    if want(7) {
        report(7, vertex_sparsification());
    }
    if want(8) {
        report(8, embedding());
    }
    if want(9) {
        report(9, routing_sandwich());
    }
    if want(10) {
        report(10, adjoint());
    }
    if want(11) {
        report(11, determinism(&dir));
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
