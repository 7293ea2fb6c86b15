//! Oblivious routing of demands on an l1 point set by randomly shifted grids,
//! and the sparse matrix `R` whose `||Rb||_1` estimates the routing cost.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::l1_dist;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingParams {
    /// Grid base `w`; level `t` uses cell width `w^t`.
    pub w: usize,
    /// Shifted grids per level.
    pub s: usize,
    /// Last grid level `T`.
    pub levels: usize,
    /// A basis history whose support exceeds `support_factor * s` triggers a restart.
    pub support_factor: usize,
    pub max_restarts: usize,
}

impl RoutingParams {
    pub fn default_w(n: usize) -> usize {
        ((n.max(2) as f64).log2().ceil() as usize).max(2)
    }

    pub fn default_s(n: usize) -> usize {
        let l = (n.max(2) as f64).log2();
        (l * l).ceil() as usize
    }

    /// Defaults for `points`, with `T = ceil(log_w spread)`.
    pub fn for_points(points: &[Vec<f64>], w: Option<usize>, s: Option<usize>) -> Self {
        let n = points.len();
        let w = w.unwrap_or_else(|| Self::default_w(n)).max(2);
        let s = s.unwrap_or_else(|| Self::default_s(n)).max(1);
        let spread = max_spread(points);
        RoutingParams { w, s, levels: levels_for(spread, w), support_factor: 64, max_restarts: 10 }
    }
}

pub fn levels_for(spread: f64, w: usize) -> usize {
    if spread <= 1.0 {
        return 0;
    }
    let mut t = 0;
    let mut width = 1.0;
    while width < spread {
        width *= w as f64;
        t += 1;
    }
    t
}

fn max_spread(points: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.max(l1_dist(&points[i], &points[j]));
        }
    }
    best
}

/// Smallest nonzero pairwise l1 distance.
pub fn min_separation(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = l1_dist(&points[i], &points[j]);
            if d > 0.0 {
                best = best.min(d);
            }
        }
    }
    best
}

/// Axis-aligned grid of cell width `width`, offset by `-shifts`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftedGrid {
    pub level: usize,
    pub width: f64,
    pub shifts: Vec<f64>,
}

impl ShiftedGrid {
    pub fn random(level: usize, width: f64, k: usize, rng: &mut impl Rng) -> Self {
        let shifts = (0..k).map(|_| rng.gen::<f64>() * width).collect();
        ShiftedGrid { level, width, shifts }
    }

    /// Cell index per coordinate; quotients within `1e-9` of an integer
    /// count as lying on that boundary.
    pub fn cell(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .zip(&self.shifts)
            .map(|(xi, ri)| {
                let q = (xi + ri) / self.width;
                let c = q.round();
                if (q - c).abs() <= 1e-9 * c.abs().max(1.0) {
                    c as i64
                } else {
                    q.floor() as i64
                }
            })
            .collect()
    }

    pub fn corner(&self, cell: &[i64]) -> Vec<f64> {
        cell.iter().zip(&self.shifts).map(|(&c, ri)| c as f64 * self.width - ri).collect()
    }

    /// `h(x)_i = floor((x_i + r_i) / W) W - r_i`.
    pub fn snap(&self, x: &[f64]) -> Vec<f64> {
        self.corner(&self.cell(x))
    }
}

/// The shared grid-shift stream: `grids[t][j]` for `t in 0..=T`, `j < s`.
#[derive(Clone, Debug)]
pub struct ShiftStream {
    pub grids: Vec<Vec<ShiftedGrid>>,
}

impl ShiftStream {
    pub fn new(k: usize, params: &RoutingParams, seed: u64) -> Self {
        let mut width = 1.0;
        let mut grids = Vec::with_capacity(params.levels + 1);
        for t in 0..=params.levels {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x6D, t as u64, k as u64));
            grids.push((0..params.s).map(|_| ShiftedGrid::random(t, width, k, &mut rng)).collect());
            width *= params.w as f64;
        }
        ShiftStream { grids }
    }
}

/// Points of every level, keyed by `(grid index, cell vector)`; level-0 points
/// are the distinct input coordinates.
struct PointTable {
    s: usize,
    coords: Vec<Vec<Vec<f64>>>,
    keys: Vec<Vec<Vec<i64>>>,
    index: Vec<HashMap<Vec<i64>, u32>>,
    images: Vec<Vec<Option<Box<[(u32, f64)]>>>>,
}

impl PointTable {
    fn new(levels: usize, s: usize) -> Self {
        PointTable {
            s,
            coords: vec![Vec::new(); levels + 2],
            keys: vec![Vec::new(); levels + 2],
            index: vec![HashMap::new(); levels + 2],
            images: vec![Vec::new(); levels + 2],
        }
    }

    fn intern(&mut self, level: usize, key: Vec<i64>, coords: impl FnOnce() -> Vec<f64>) -> u32 {
        if let Some(&id) = self.index[level].get(&key) {
            return id;
        }
        let id = self.coords[level].len() as u32;
        self.coords[level].push(coords());
        self.keys[level].push(key.clone());
        self.images[level].push(None);
        self.index[level].insert(key, id);
        id
    }

    fn base_point(&mut self, x: &[f64]) -> u32 {
        let key: Vec<i64> = x.iter().map(|v| (*v + 0.0).to_bits() as i64).collect();
        self.intern(0, key, || x.to_vec())
    }

    /// Images of point `id` of level `t` under the `s` grids of level `t`,
    /// with the l1 length of each move.
    fn images(&mut self, t: usize, id: u32, stream: &ShiftStream) -> &[(u32, f64)] {
        if self.images[t][id as usize].is_none() {
            let x = self.coords[t][id as usize].clone();
            let mut out = Vec::with_capacity(self.s);
            for (j, grid) in stream.grids[t].iter().enumerate() {
                let cell = grid.cell(&x);
                let mut key = Vec::with_capacity(cell.len() + 1);
                key.push(j as i64);
                key.extend_from_slice(&cell);
                let y = grid.corner(&cell);
                let len = l1_dist(&x, &y);
                let yid = self.intern(t + 1, key, || y);
                out.push((yid, len));
            }
            self.images[t][id as usize] = Some(out.into_boxed_slice());
        }
        self.images[t][id as usize].as_deref().expect("computed above")
    }
}

/// Sparse level-by-level values `b_t(x)` of one run, as `(point id, value)`
/// sorted by point id.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisHistory {
    pub vertex: usize,
    pub levels: Vec<Vec<(u32, f64)>>,
}

impl BasisHistory {
    pub fn support(&self) -> usize {
        self.levels.iter().map(|l| l.len()).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingTrace {
    /// Cost of levels `0..=T` followed by the final merge.
    pub iteration_costs: Vec<f64>,
    pub total: f64,
    pub final_point: Option<Vec<f64>>,
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let k = points.first().map_or(0, |p| p.len());
    if points.iter().any(|p| p.len() != k || p.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidParam("points must share one finite dimension".into()));
    }
    if min_separation(points) < 1.0 - 1e-12 {
        return Err(Error::InvalidParam("points violate the minimum separation 1".into()));
    }
    Ok(k)
}

fn propagate(
    table: &mut PointTable,
    stream: &ShiftStream,
    start: Vec<(u32, f64)>,
    levels: usize,
    mut on_level: impl FnMut(usize, &[(u32, f64)], f64),
) -> Vec<(u32, f64)> {
    let s = stream.grids.first().map_or(1, |g| g.len()) as f64;
    let mut cur = start;
    for t in 0..=levels {
        let mut next: HashMap<u32, f64> = HashMap::new();
        let mut cost = 0.0;
        for &(x, val) in &cur {
            let share = val / s;
            for &(y, len) in table.images(t, x, stream).iter() {
                *next.entry(y).or_insert(0.0) += share;
                cost += share.abs() * len;
            }
        }
        on_level(t, &cur, cost);
        let mut v: Vec<(u32, f64)> = next.into_iter().filter(|(_, x)| *x != 0.0).collect();
        v.sort_unstable_by_key(|p| p.0);
        cur = v;
    }
    cur
}

fn merge_base(table: &mut PointTable, points: &[Vec<f64>], b: &[f64]) -> Vec<(u32, f64)> {
    let mut acc: HashMap<u32, f64> = HashMap::new();
    for (v, x) in points.iter().enumerate() {
        let id = table.base_point(x);
        *acc.entry(id).or_insert(0.0) += b[v];
    }
    let mut out: Vec<(u32, f64)> = acc.into_iter().filter(|(_, x)| *x != 0.0).collect();
    out.sort_unstable_by_key(|p| p.0);
    out
}

/// Routes `b` through `T + 1` levels of shifted grids and finally to one
/// surviving point, returning the cost of every stage.
pub fn run_routing(points: &[Vec<f64>], b: &[f64], params: &RoutingParams, seed: u64) -> Result<RoutingTrace> {
    let k = check_points(points)?;
    run_routing_on(points, b, params, &ShiftStream::new(k, params, seed))
}

/// `run_routing` over an explicit shift stream.
pub fn run_routing_on(points: &[Vec<f64>], b: &[f64], params: &RoutingParams, stream: &ShiftStream) -> Result<RoutingTrace> {
    check_points(points)?;
    if b.len() != points.len() {
        return Err(Error::Structural("demand length mismatch".into()));
    }
    if stream.grids.len() != params.levels + 1 {
        return Err(Error::InvalidParam("shift stream does not match the level count".into()));
    }
    if b.iter().all(|&x| x == 0.0) {
        return Ok(RoutingTrace { iteration_costs: Vec::new(), total: 0.0, final_point: None });
    }
    let mut table = PointTable::new(params.levels, params.s);
    let start = merge_base(&mut table, points, b);
    let mut costs = Vec::new();
    let last = propagate(&mut table, stream, start, params.levels, |_, _, c| costs.push(c));
    let top = params.levels + 1;
    let (final_point, merge) = match last.first() {
        Some(&(target, _)) => {
            let y = table.coords[top][target as usize].clone();
            let c = last.iter().map(|&(x, v)| v.abs() * l1_dist(&table.coords[top][x as usize], &y)).sum();
            (Some(y), c)
        }
        None => (None, 0.0),
    };
    costs.push(merge);
    let total = costs.iter().sum();
    Ok(RoutingTrace { iteration_costs: costs, total, final_point })
}

/// Histories of all unit demands `chi_v` over one shared shift stream.
pub struct Histories {
    pub params: RoutingParams,
    pub seed: u64,
    pub restarts: usize,
    pub k: usize,
    pub per_vertex: Vec<BasisHistory>,
    keys: Vec<Vec<Vec<i64>>>,
}

impl Histories {
    pub fn mean_support(&self, level: usize) -> f64 {
        let n = self.per_vertex.len().max(1) as f64;
        self.per_vertex.iter().map(|h| h.levels[level].len() as f64).sum::<f64>() / n
    }
}

pub fn build_basis_histories(points: &[Vec<f64>], params: &RoutingParams, seed: u64) -> Result<Histories> {
    let k = check_points(points)?;
    let cap = params.support_factor * params.s;
    let mut max_seen = 0;
    for restart in 0..=params.max_restarts {
        let run_seed = derive_seed(seed, 0x8A, restart as u64, 0);
        let stream = ShiftStream::new(k, params, run_seed);
        let mut table = PointTable::new(params.levels, params.s);
        let mut per_vertex = Vec::with_capacity(points.len());
        let mut blown = false;
        for (v, x) in points.iter().enumerate() {
            let id = table.base_point(x);
            let mut levels = Vec::with_capacity(params.levels + 2);
            let last = propagate(&mut table, &stream, vec![(id, 1.0)], params.levels, |_, cur, _| levels.push(cur.to_vec()));
            levels.push(last);
            let h = BasisHistory { vertex: v, levels };
            max_seen = max_seen.max(h.support());
            if h.support() > cap {
                blown = true;
                break;
            }
            per_vertex.push(h);
        }
        if !blown {
            return Ok(Histories { params: params.clone(), seed: run_seed, restarts: restart, k, per_vertex, keys: table.keys });
        }
    }
    Err(Error::Stage { stage: "routing", msg: format!("basis support {max_seen} exceeds cap {cap} after {} restarts", params.max_restarts) })
}

/// Sparse matrix in compressed-row form with one row per `(level, point)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingMatrix {
    pub n: usize,
    pub params: RoutingParams,
    pub seed: u64,
    pub row_level: Vec<usize>,
    pub row_key: Vec<Vec<i64>>,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

pub fn assemble_matrix(h: &Histories) -> RoutingMatrix {
    let n = h.per_vertex.len();
    let levels = h.params.levels + 2;
    let mut rows: Vec<Vec<Vec<(u32, f64)>>> = h.keys.iter().map(|k| vec![Vec::new(); k.len()]).collect();
    let mut weight = h.k as f64;
    for t in 0..levels {
        for hist in &h.per_vertex {
            for &(x, val) in &hist.levels[t] {
                rows[t][x as usize].push((hist.vertex as u32, weight * val));
            }
        }
        weight *= h.params.w as f64;
    }
    let mut m = RoutingMatrix {
        n,
        params: h.params.clone(),
        seed: h.seed,
        row_level: Vec::new(),
        row_key: Vec::new(),
        row_ptr: vec![0],
        cols: Vec::new(),
        vals: Vec::new(),
    };
    for t in 0..levels {
        let mut order: Vec<usize> = (0..rows[t].len()).filter(|&x| !rows[t][x].is_empty()).collect();
        order.sort_by(|&a, &b| h.keys[t][a].cmp(&h.keys[t][b]));
        for x in order {
            let mut entries = std::mem::take(&mut rows[t][x]);
            entries.sort_by_key(|e| e.0);
            for (v, c) in entries {
                m.cols.push(v);
                m.vals.push(c);
            }
            m.row_level.push(t);
            m.row_key.push(h.keys[t][x].clone());
            m.row_ptr.push(m.cols.len());
        }
    }
    m
}

impl RoutingMatrix {
    pub fn rows(&self) -> usize {
        self.row_level.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        self.matvec_into(b, &mut out);
        out
    }

    pub fn matvec_into(&self, b: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[i] * b[self.cols[i] as usize];
            }
            *o = acc;
        }
    }

    pub fn matvec_transposed(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec_transposed_into(y, &mut out);
        out
    }

    pub fn matvec_transposed_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.cols[i] as usize] += self.vals[i] * yr;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.vals.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn estimate_cost(&self, b: &[f64]) -> f64 {
        self.matvec(b).iter().map(|x| x.abs()).sum()
    }

    /// `||R (chi_u - chi_v)||_1` without forming the demand.
    pub fn pair_cost(&self, u: usize, v: usize) -> f64 {
        let mut b = vec![0.0; self.n];
        b[u] += 1.0;
        b[v] -= 1.0;
        self.estimate_cost(&b)
    }
}

pub fn estimate_cost(m: &RoutingMatrix, b: &[f64]) -> f64 {
    m.estimate_cost(b)
}

/// `count` random pairs of distinct vertices.
pub fn sample_pairs(n: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xCA, n as u64, count as u64));
    (0..count)
        .map(|_| {
            let u = rng.gen_range(0..n);
            let mut v = rng.gen_range(0..n - 1);
            if v >= u {
                v += 1;
            }
            (u, v)
        })
        .collect()
}

/// Every unordered pair of distinct vertices.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect()
}

/// Scales `m` so that `||R(chi_u - chi_v)||_1 >= 1.01 ||x_u - x_v||_1` on the
/// given pairs, returning the scaled matrix and the largest ratio after
/// scaling.
pub fn calibrate(m: &RoutingMatrix, points: &[Vec<f64>], pairs: &[(usize, usize)]) -> (RoutingMatrix, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &(u, v) in pairs {
        let d = l1_dist(&points[u], &points[v]);
        if d == 0.0 {
            continue;
        }
        let r = m.pair_cost(u, v) / d;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let mut out = m.clone();
    if !lo.is_finite() || lo <= 0.0 {
        return (out, 1.0);
    }
    let factor = 1.01 / lo;
    out.scale(factor);
    (out, (hi * factor).max(1.0))
}

/// Text dump: a header line with the parameters, then one line per row.
pub fn dump_matrix(m: &RoutingMatrix) -> String {
    let mut s = format!(
        "# n={} rows={} w={} s={} T={} seed={}\n",
        m.n,
        m.rows(),
        m.params.w,
        m.params.s,
        m.params.levels,
        m.seed
    );
    for r in 0..m.rows() {
        let key: Vec<String> = m.row_key[r].iter().map(|x| x.to_string()).collect();
        let entries: Vec<String> = (m.row_ptr[r]..m.row_ptr[r + 1]).map(|i| format!("{}:{:e}", m.cols[i], m.vals[i])).collect();
        s.push_str(&format!("{} {} {{{}}}\n", m.row_level[r], key.join(","), entries.join(",")));
    }
    s
}
