#![allow(dead_code)]

use transship_core::graph::Graph;

pub fn bellman_ford(g: &Graph, sources: &[usize]) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; g.n()];
    for &s in sources {
        d[s] = 0.0;
    }
    for _ in 0..g.n() {
        let mut changed = false;
        for e in g.edges() {
            if d[e.u] + e.w < d[e.v] {
                d[e.v] = d[e.u] + e.w;
                changed = true;
            }
            if d[e.v] + e.w < d[e.u] {
                d[e.u] = d[e.v] + e.w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    d
}

pub fn floyd_warshall(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.n();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in g.edges() {
        d[e.u][e.v] = d[e.u][e.v].min(e.w);
        d[e.v][e.u] = d[e.v][e.u].min(e.w);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Per-vertex scan over all edges.
pub fn divergence_by_scan(g: &Graph, f: &[f64]) -> Vec<f64> {
    (0..g.n())
        .map(|v| {
            let mut s = 0.0;
            for (i, e) in g.edges().iter().enumerate() {
                if e.v == v {
                    s += f[i];
                }
                if e.u == v {
                    s -= f[i];
                }
            }
            s
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// True when `f` routes `b` and `phi` is feasible with equal objective, which
/// certifies optimality of both by weak duality.
pub fn certifies_optimum(g: &Graph, b: &[f64], f: &[f64], phi: &[f64], tol: f64) -> bool {
    let div = divergence_by_scan(g, f);
    let scale: f64 = b.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
    let routes = div.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale);
    let feasible = g.edges().iter().all(|e| (phi[e.u] - phi[e.v]).abs() <= e.w * (1.0 + tol));
    let cost: f64 = g.edges().iter().zip(f).map(|(e, x)| e.w * x.abs()).sum();
    let dual: f64 = b.iter().zip(phi).map(|(x, y)| x * y).sum();
    routes && feasible && rel_close(cost, dual, tol)
}

/// Cycle check and counting on directed support of a flow via Kahn's algorithm.
pub fn flow_support_acyclic(g: &Graph, f: &[f64]) -> bool {
    let n = g.n();
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, &x) in g.edges().iter().zip(f) {
        if x > 0.0 {
            out[e.u].push(e.v);
            indeg[e.v] += 1;
        } else if x < 0.0 {
            out[e.v].push(e.u);
            indeg[e.u] += 1;
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(x) = stack.pop() {
        seen += 1;
        for &y in &out[x] {
            indeg[y] -= 1;
            if indeg[y] == 0 {
                stack.push(y);
            }
        }
    }
    seen == n
}
