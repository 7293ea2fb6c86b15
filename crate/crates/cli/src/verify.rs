use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde_json::{json, Value};
use transship_core::graph::{dijkstra, divergence, dot, flow_cost, l1, validate_potential, validate_sssp_potential, Graph, REL_TOL};
use transship_core::io::{self, TreeLine};
use transship_core::oracles::exact_transshipment;

use crate::commands::{check_epsilon, load_graph};
use crate::report::{num, path_value, read_file, Report};
use crate::{Common, Failure};

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Demand file; required with `--flow`, and makes `--potential` a transshipment dual.
    #[arg(long)]
    pub demands: Option<PathBuf>,
    #[arg(long)]
    pub flow: Option<PathBuf>,
    #[arg(long)]
    pub potential: Option<PathBuf>,
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Expected source set of a tree or shortest-path potential.
    #[arg(long = "source")]
    pub sources: Vec<usize>,
    /// Check the `(1 + epsilon)` guarantee against the oracles.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Run exact oracles only when `n` is at most this.
    #[arg(long, default_value_t = 256)]
    pub verify_cap: usize,
    #[command(flatten)]
    pub common: Common,
}

struct Checks(Vec<Value>);

impl Checks {
    fn add(&mut self, name: &str, passed: bool, detail: impl Into<String>) -> bool {
        self.0.push(json!({ "check": name, "passed": passed, "detail": detail.into() }));
        passed
    }

    fn all_passed(&self) -> bool {
        self.0.iter().all(|c| c["passed"] == json!(true))
    }
}

fn le(a: f64, b: f64) -> bool {
    a <= b + REL_TOL * a.abs().max(b.abs()).max(1.0)
}

pub fn verify(a: &VerifyArgs) -> Result<(), Failure> {
    let clock = Instant::now();
    if let Some(e) = a.epsilon {
        check_epsilon(e)?;
    }
    let g = load_graph(&a.graph)?;
    let n = g.n();
    if let Some(&s) = a.sources.iter().find(|&&s| s >= n) {
        return Err(Failure::Input(format!("source {s} out of range")));
    }
    if a.flow.is_some() && a.demands.is_none() {
        return Err(Failure::Input("--flow needs --demands".into()));
    }
    let b = match &a.demands {
        Some(p) => Some(io::parse_demands(&read_file(p)?, n)?),
        None => None,
    };
    let f = match &a.flow {
        Some(p) => Some(io::parse_flow(&read_file(p)?, g.m())?),
        None => None,
    };
    let phi = match &a.potential {
        Some(p) => Some(io::parse_potential(&read_file(p)?, n)?),
        None => None,
    };
    let tree = match &a.tree {
        Some(p) => Some(io::parse_tree(&read_file(p)?, n)?),
        None => None,
    };
    let oracle = n <= a.verify_cap;
    let mut report = Report::new(
        "verify",
        json!({
            "graph": a.graph.display().to_string(),
            "demands": path_value(&a.demands),
            "flow": path_value(&a.flow),
            "potential": path_value(&a.potential),
            "tree": path_value(&a.tree),
            "sources": a.sources,
            "epsilon": a.epsilon,
            "verify_cap": a.verify_cap,
        }),
    );
    let mut checks = Checks(Vec::new());
    if let Some(b) = &b {
        check_transshipment(&g, b, f.as_deref(), phi.as_deref(), oracle, a.epsilon, &mut checks);
    }
    let mut roots = a.sources.clone();
    if let Some(t) = &tree {
        let found = check_tree(&g, t, &a.sources, oracle, a.epsilon, &mut checks);
        if roots.is_empty() {
            roots = found;
        }
    }
    if let (Some(phi), None) = (&phi, &b) {
        check_sssp_potential(&g, phi, &roots, oracle, a.epsilon, &mut checks);
    }
    let passed = checks.all_passed();
    report.results = json!({ "n": n, "m": g.m(), "oracle_used": oracle, "passed": passed, "checks": checks.0 });
    report.time("total", clock.elapsed());
    report.emit(&a.common)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn check_transshipment(g: &Graph, b: &[f64], f: Option<&[f64]>, phi: Option<&[f64]>, oracle: bool, eps: Option<f64>, c: &mut Checks) {
    let cost = f.map(|f| flow_cost(g, f));
    if let Some(f) = f {
        let div = divergence(g, f).expect("flow length checked on parse");
        let residual = l1(&div.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
        let tol = 1e-9 * l1(b);
        c.add("flow.conservation", residual <= tol, format!("||div f - b||_1 = {residual:e}, tolerance {tol:e}"));
    }
    if let Some(phi) = phi {
        c.add("potential.feasible", validate_potential(g, phi), "|phi_u - phi_v| <= w(u, v) on every edge");
        if let Some(cost) = cost {
            let dual = dot(b, phi);
            c.add("duality.weak", le(dual, cost), format!("b.phi = {dual}, cost = {cost}"));
        }
    }
    if !oracle || (f.is_none() && phi.is_none()) {
        return;
    }
    let opt = match exact_transshipment(g, b) {
        Ok(r) => r.opt_cost,
        Err(e) => {
            c.add("oracle.solvable", false, e.to_string());
            return;
        }
    };
    if let Some(cost) = cost {
        c.add("oracle.primal_bound", le(opt, cost), format!("opt = {opt}, cost = {cost}"));
        if let Some(eps) = eps {
            c.add("oracle.approximation", le(cost, (1.0 + eps) * opt), format!("cost / opt = {}", cost / opt));
        }
    }
    if let Some(phi) = phi {
        let dual = dot(b, phi);
        c.add("oracle.dual_bound", le(dual, opt), format!("b.phi = {dual}, opt = {opt}"));
    }
}

/// Returns the roots found in the tree file.
fn check_tree(g: &Graph, t: &[TreeLine], sources: &[usize], oracle: bool, eps: Option<f64>, c: &mut Checks) -> Vec<usize> {
    let n = g.n();
    let roots: Vec<usize> = t.iter().filter(|l| l.parent.is_none()).map(|l| l.vertex).collect();
    let mut weight = vec![None; n];
    let mut missing = Vec::new();
    for l in t {
        if let Some(p) = l.parent {
            let w = g.neighbors(l.vertex).iter().filter(|&&(u, _)| u == p).map(|&(_, e)| g.edge(e).w).fold(None, |a: Option<f64>, w| {
                Some(a.map_or(w, |a| a.min(w)))
            });
            match w {
                Some(w) => weight[l.vertex] = Some(w),
                None => missing.push(l.vertex),
            }
        }
    }
    let edges_ok = c.add("tree.edges_exist", missing.is_empty(), format!("{} parent links without a graph edge {:?}", missing.len(), &missing[..missing.len().min(8)]));
    if !sources.is_empty() {
        let mut want = sources.to_vec();
        want.sort_unstable();
        want.dedup();
        c.add("tree.roots", roots == want, format!("roots {roots:?}, sources {want:?}"));
    }
    // 0 unvisited, 1 on the current chain, 2 resolved
    let mut state = vec![0u8; n];
    let mut on_cycle = Vec::new();
    for start in 0..n {
        let mut chain = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            chain.push(v);
            match t[v].parent {
                Some(p) => v = p,
                None => break,
            }
        }
        if state[v] == 1 && t[v].parent.is_some() {
            on_cycle.push(v);
        }
        for x in chain {
            state[x] = 2;
        }
    }
    let acyclic = c.add("tree.acyclic", on_cycle.is_empty(), format!("{} parent cycles", on_cycle.len()));
    let spanning = c.add("tree.spanning", acyclic && !roots.is_empty(), format!("{} vertices, {} roots", n, roots.len()));
    if !(edges_ok && acyclic && spanning) {
        return roots;
    }
    let mut dt = vec![f64::NAN; n];
    fn depth(v: usize, t: &[TreeLine], w: &[Option<f64>], dt: &mut [f64]) -> f64 {
        let mut chain = Vec::new();
        let mut x = v;
        while dt[x].is_nan() {
            match t[x].parent {
                Some(p) => {
                    chain.push(x);
                    x = p;
                }
                None => {
                    dt[x] = 0.0;
                }
            }
        }
        for &y in chain.iter().rev() {
            dt[y] = dt[t[y].parent.expect("non-root")] + w[y].expect("edge exists");
        }
        dt[v]
    }
    for v in 0..n {
        depth(v, t, &weight, &mut dt);
    }
    let over: Vec<usize> = (0..n).filter(|&v| !le(dt[v], t[v].dist)).collect();
    c.add("tree.distance_bound", over.is_empty(), format!("{} vertices with tree distance above the reported distance", over.len()));
    if oracle {
        let (d, _) = dijkstra(g, &roots).expect("roots in range");
        let under: Vec<usize> = (0..n).filter(|&v| !le(d[v], dt[v])).collect();
        c.add("oracle.tree_lower_bound", under.is_empty(), format!("{} vertices below the exact distance", under.len()));
        if let Some(eps) = eps {
            let worst = (0..n).filter(|&v| d[v] > 0.0).map(|v| t[v].dist / d[v]).fold(1.0, f64::max);
            c.add("oracle.tree_approximation", le(worst, 1.0 + eps), format!("worst reported / exact = {worst}"));
        }
    }
    roots
}

fn check_sssp_potential(g: &Graph, phi: &[f64], roots: &[usize], oracle: bool, eps: Option<f64>, c: &mut Checks) {
    c.add("potential.feasible", validate_potential(g, phi), "|phi_u - phi_v| <= w(u, v) on every edge");
    if roots.is_empty() {
        return;
    }
    let base = phi[roots[0]];
    let spread = roots.iter().map(|&s| (phi[s] - base).abs()).fold(0.0, f64::max);
    c.add("potential.sources_level", spread == 0.0 || le(spread, 0.0), format!("max spread over sources {spread}"));
    if let (true, Some(eps)) = (oracle, eps) {
        let (d, _) = dijkstra(g, roots).expect("roots in range");
        let ok = validate_sssp_potential(g, phi, roots, 1.0 + eps, &d);
        let worst = (0..g.n()).filter(|&v| d[v] > 0.0).map(|v| d[v] / (phi[v] - base).max(0.0)).fold(1.0, f64::max);
        c.add("oracle.sssp_potential", ok, format!("worst exact / potential = {}", num(worst)));
    }
}
