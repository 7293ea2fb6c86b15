//! l1 embeddings of graph metrics from approximate SSSP potentials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{dijkstra, validate_potential, Graph, SsspPotential};
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    /// Unscaled points, one per vertex.
    pub points: Vec<Vec<f64>>,
    pub dim: usize,
    pub scale: f64,
    pub contraction: f64,
    pub expansion: f64,
}

impl Embedding {
    pub fn distortion(&self) -> f64 {
        self.expansion / self.contraction
    }

    pub fn scaled_points(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.iter().map(|x| x * self.scale).collect()).collect()
    }
}

pub fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Source of approximate `S`-SSSP potentials.
pub trait PotentialOracle {
    fn sssp_potential(&self, g: &Graph, sources: &[usize]) -> Result<SsspPotential>;
}

/// Exact potentials from multi-source Dijkstra.
#[derive(Clone, Copy, Debug, Default)]
pub struct DijkstraOracle;

impl PotentialOracle for DijkstraOracle {
    fn sssp_potential(&self, g: &Graph, sources: &[usize]) -> Result<SsspPotential> {
        let (phi, _) = dijkstra(g, sources)?;
        Ok(SsspPotential { phi, sources: sources.to_vec(), alpha: 1.0 })
    }
}

pub fn default_trials(n: usize) -> usize {
    (8.0 * (n.max(2) as f64).log2()).ceil() as usize
}

pub fn default_levels(n: usize) -> usize {
    ((n.max(2) as f64).log2()).ceil() as usize
}

/// Bourgain-style embedding: coordinate `(i, t)` is `phi_{i,t} / (N T)` for a
/// potential of a random set sampled with per-vertex probability `2^-t`.
pub fn bourgain_embed(g: &Graph, oracle: &dyn PotentialOracle, trials: usize, levels: usize, seed: u64) -> Result<Embedding> {
    g.require_connected()?;
    if trials == 0 || levels == 0 {
        return Err(Error::InvalidParam("trials and levels must be positive".into()));
    }
    let n = g.n();
    let dim = trials * levels;
    let norm = dim as f64;
    let mut points = vec![vec![0.0; dim]; n];
    for i in 0..trials {
        for t in 1..=levels {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xB0, i as u64, t as u64));
            let p = 0.5f64.powi(t as i32);
            let sample: Vec<usize> = (0..n).filter(|_| rng.gen_bool(p)).collect();
            if sample.is_empty() {
                continue;
            }
            let pot = oracle.sssp_potential(g, &sample)?;
            if !validate_potential(g, &pot.phi) {
                return Err(Error::Stage { stage: "embedding", msg: format!("oracle returned an infeasible potential in trial ({i}, {t})") });
            }
            let lo = pot.phi.iter().cloned().fold(f64::INFINITY, f64::min);
            let c = i * levels + (t - 1);
            for v in 0..n {
                points[v][c] = (pot.phi[v] - lo) / norm;
            }
        }
    }
    let mut e = Embedding { points, dim, scale: 1.0, contraction: 1.0, expansion: 1.0 };
    remeasure(&mut e, g, None);
    Ok(e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    RandomSigns,
    Identity,
}

/// Multiplies every point by a random `target_dim x k` sign matrix scaled by
/// `1/sqrt(target_dim)`.
pub fn jl_project(points: &[Vec<f64>], target_dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let k = points.first().map_or(0, |p| p.len());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x11, k as u64, target_dim as u64));
    let s = 1.0 / (target_dim as f64).sqrt();
    let mat: Vec<Vec<f64>> = (0..target_dim).map(|_| (0..k).map(|_| if rng.gen_bool(0.5) { s } else { -s }).collect()).collect();
    points.iter().map(|p| mat.iter().map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum()).collect()).collect()
}

/// Random sign projection scaled by `1/sqrt(target_dim)`; distortion is
/// re-measured on `g`.
pub fn jl_reduce(e: &Embedding, g: &Graph, target_dim: usize, seed: u64, mode: Projection) -> Result<Embedding> {
    if target_dim == 0 {
        return Err(Error::InvalidParam("target_dim must be positive".into()));
    }
    let points = match mode {
        Projection::Identity => {
            if target_dim != e.dim {
                return Err(Error::InvalidParam("identity projection needs target_dim = dim".into()));
            }
            e.points.clone()
        }
        Projection::RandomSigns => jl_project(&e.points, target_dim, seed),
    };
    let mut out = Embedding { points, dim: target_dim, scale: 1.0, contraction: 1.0, expansion: 1.0 };
    remeasure(&mut out, g, None);
    Ok(out)
}

fn remeasure(e: &mut Embedding, g: &Graph, budget: Option<usize>) {
    let (c, x) = measure_distortion(e, g, budget.unwrap_or(4096), 0);
    e.contraction = c;
    e.expansion = x;
    e.scale = if c > 0.0 { 1.0 / c } else { 1.0 };
}

/// `(min, max)` of `||x_u - x_v||_1 / d(u, v)`: exact over all pairs when
/// `n <= 512`, otherwise over `pair_budget` sampled pairs.
pub fn measure_distortion(e: &Embedding, g: &Graph, pair_budget: usize, seed: u64) -> (f64, f64) {
    let n = g.n();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut visit = |u: usize, v: usize, d: f64| {
        if u != v && d.is_finite() && d > 0.0 {
            let r = l1_dist(&e.points[u], &e.points[v]) / d;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    };
    if n <= 512 {
        for u in 0..n {
            let (d, _) = dijkstra(g, &[u]).expect("valid source");
            for v in u + 1..n {
                visit(u, v, d[v]);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xD1, n as u64, pair_budget as u64));
        let sources = (pair_budget / 16).max(1);
        let per = pair_budget.div_ceil(sources);
        for _ in 0..sources {
            let u = rng.gen_range(0..n);
            let (d, _) = dijkstra(g, &[u]).expect("valid source");
            for _ in 0..per {
                let v = rng.gen_range(0..n);
                visit(u, v, d[v]);
            }
        }
    }
    if !lo.is_finite() {
        return (1.0, 1.0);
    }
    (lo, hi)
}
