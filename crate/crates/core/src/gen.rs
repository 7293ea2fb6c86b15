//! Graph and demand generators.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::Graph;

pub fn path(n: usize, w: f64) -> Graph {
    Graph::new(n, (1..n).map(|i| (i - 1, i, w)).collect()).expect("path")
}

pub fn cycle(n: usize, w: f64) -> Graph {
    let mut e: Vec<_> = (1..n).map(|i| (i - 1, i, w)).collect();
    if n >= 3 {
        e.push((n - 1, 0, w));
    }
    Graph::new(n, e).expect("cycle")
}

pub fn grid(rows: usize, cols: usize, w: f64) -> Graph {
    let id = |r: usize, c: usize| r * cols + c;
    let mut e = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                e.push((id(r, c), id(r, c + 1), w));
            }
            if r + 1 < rows {
                e.push((id(r, c), id(r + 1, c), w));
            }
        }
    }
    Graph::new(rows * cols, e).expect("grid")
}

pub fn complete(n: usize, w: f64) -> Graph {
    let mut e = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            e.push((u, v, w));
        }
    }
    Graph::new(n, e).expect("complete")
}

/// Random connected simple graph: a random spanning tree plus uniformly
/// chosen extra edges, integer weights uniform in `1..=max_w`.
pub fn random_connected(n: usize, m: usize, max_w: u64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_m = n * n.saturating_sub(1) / 2;
    let m = m.clamp(n.saturating_sub(1), max_m);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut seen = HashSet::new();
    let mut e = Vec::with_capacity(m);
    let weight = |rng: &mut ChaCha8Rng| rng.gen_range(1..=max_w.max(1)) as f64;
    for i in 1..n {
        let u = order[i];
        let v = order[rng.gen_range(0..i)];
        seen.insert((u.min(v), u.max(v)));
        e.push((u, v, weight(&mut rng)));
    }
    while e.len() < m {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v || !seen.insert((u.min(v), u.max(v))) {
            continue;
        }
        e.push((u, v, weight(&mut rng)));
    }
    Graph::new(n, e).expect("random graph")
}

/// Balanced integral demands with `|b_v| <= max_abs`.
pub fn random_demands(n: usize, max_abs: i64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut b: Vec<i64> = (0..n).map(|_| rng.gen_range(-max_abs..=max_abs)).collect();
    let mut sum: i64 = b.iter().sum();
    let mut guard = 0;
    while sum != 0 && guard < 100 * n {
        let v = rng.gen_range(0..n);
        if sum > 0 && b[v] > -max_abs {
            b[v] -= 1;
            sum -= 1;
        } else if sum < 0 && b[v] < max_abs {
            b[v] += 1;
            sum += 1;
        }
        guard += 1;
    }
    if sum != 0 {
        b[0] -= sum;
    }
    b.into_iter().map(|x| x as f64).collect()
}
