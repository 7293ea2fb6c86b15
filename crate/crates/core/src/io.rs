//! Plain-text formats: edge lists, demands, flows, potentials, trees,
//! embeddings and core mappings. Lines starting with `#` and blank lines are
//! ignored on input.

use crate::error::{Error, Result};
use crate::graph::Graph;

fn body(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Structural(format!("line {line}: {msg}"))
}

fn field<T: std::str::FromStr>(line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| bad(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| bad(line, format!("cannot parse {what} '{tok}'")))
}

fn finish(line: usize, mut toks: std::str::SplitWhitespace) -> Result<()> {
    match toks.next() {
        Some(t) => Err(bad(line, format!("unexpected trailing token '{t}'"))),
        None => Ok(()),
    }
}

/// `n m` header, then `m` lines `u v w`.
pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut lines = body(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::Structural("empty graph file".into()))?;
    let mut t = header.split_whitespace();
    let n: usize = field(hl, t.next(), "vertex count")?;
    let m: usize = field(hl, t.next(), "edge count")?;
    finish(hl, t)?;
    let mut edges = Vec::with_capacity(m);
    for (ln, l) in lines {
        let mut t = l.split_whitespace();
        let u: usize = field(ln, t.next(), "endpoint")?;
        let v: usize = field(ln, t.next(), "endpoint")?;
        let w: f64 = field(ln, t.next(), "weight")?;
        finish(ln, t)?;
        edges.push((u, v, w));
    }
    if edges.len() != m {
        return Err(Error::Structural(format!("header announces {m} edges, file has {}", edges.len())));
    }
    Graph::new(n, edges)
}

pub fn format_graph(g: &Graph) -> String {
    let mut s = format!("{} {}\n", g.n(), g.m());
    for e in g.edges() {
        s.push_str(&format!("{} {} {}\n", e.u, e.v, e.w));
    }
    s
}

/// `index value` lines over `len` slots; unlisted slots are 0.
fn parse_indexed(text: &str, len: usize, what: &str) -> Result<Vec<f64>> {
    let mut out = vec![0.0; len];
    let mut seen = vec![false; len];
    for (ln, l) in body(text) {
        let mut t = l.split_whitespace();
        let i: usize = field(ln, t.next(), "index")?;
        let x: f64 = field(ln, t.next(), what)?;
        finish(ln, t)?;
        if i >= len {
            return Err(bad(ln, format!("index {i} out of range 0..{len}")));
        }
        if seen[i] {
            return Err(bad(ln, format!("index {i} listed twice")));
        }
        if !x.is_finite() {
            return Err(bad(ln, format!("non-finite {what}")));
        }
        seen[i] = true;
        out[i] = x;
    }
    Ok(out)
}

fn format_indexed(x: &[f64], skip_zero: bool) -> String {
    let mut s = String::new();
    for (i, v) in x.iter().enumerate() {
        if !(skip_zero && *v == 0.0) {
            s.push_str(&format!("{i} {v}\n"));
        }
    }
    s
}

/// Demand file: `v b_v` lines.
pub fn parse_demands(text: &str, n: usize) -> Result<Vec<f64>> {
    parse_indexed(text, n, "demand")
}

pub fn format_demands(b: &[f64]) -> String {
    format_indexed(b, true)
}

/// Flow file: `e f_e` lines, signed along the stored edge orientation.
pub fn parse_flow(text: &str, m: usize) -> Result<Vec<f64>> {
    parse_indexed(text, m, "flow value")
}

pub fn format_flow(f: &[f64]) -> String {
    format_indexed(f, true)
}

/// Potential file: `v phi_v` lines.
pub fn parse_potential(text: &str, n: usize) -> Result<Vec<f64>> {
    parse_indexed(text, n, "potential")
}

pub fn format_potential(phi: &[f64]) -> String {
    format_indexed(phi, false)
}

/// One line of a tree file.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeLine {
    pub vertex: usize,
    pub parent: Option<usize>,
    pub dist: f64,
}

/// Tree file: `v parent(v) d*(v)` lines, parent `-` at sources.
pub fn parse_tree(text: &str, n: usize) -> Result<Vec<TreeLine>> {
    let mut out: Vec<Option<TreeLine>> = vec![None; n];
    for (ln, l) in body(text) {
        let mut t = l.split_whitespace();
        let v: usize = field(ln, t.next(), "vertex")?;
        let p = t.next().ok_or_else(|| bad(ln, "missing parent"))?;
        let parent = if p == "-" { None } else { Some(p.parse::<usize>().map_err(|_| bad(ln, format!("cannot parse parent '{p}'")))?) };
        let dist: f64 = field(ln, t.next(), "distance")?;
        finish(ln, t)?;
        if v >= n || parent.is_some_and(|p| p >= n) {
            return Err(bad(ln, "vertex out of range"));
        }
        if out[v].is_some() {
            return Err(bad(ln, format!("vertex {v} listed twice")));
        }
        out[v] = Some(TreeLine { vertex: v, parent, dist });
    }
    out.into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| Error::Structural(format!("vertex {v} missing from tree file"))))
        .collect()
}

pub fn format_tree(parent: &[Option<usize>], dist: &[f64]) -> String {
    let mut s = String::new();
    for (v, (p, d)) in parent.iter().zip(dist).enumerate() {
        match p {
            Some(p) => s.push_str(&format!("{v} {p} {d}\n")),
            None => s.push_str(&format!("{v} - {d}\n")),
        }
    }
    s
}

/// Embedding dump: `n k scale` header, then one row of `k` coordinates per
/// vertex.
pub fn format_embedding(points: &[Vec<f64>], scale: f64) -> String {
    let k = points.first().map_or(0, |p| p.len());
    let mut s = format!("{} {} {}\n", points.len(), k, scale);
    for p in points {
        let row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_embedding(text: &str) -> Result<(Vec<Vec<f64>>, f64)> {
    let mut lines = body(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::Structural("empty embedding file".into()))?;
    let mut t = header.split_whitespace();
    let n: usize = field(hl, t.next(), "point count")?;
    let k: usize = field(hl, t.next(), "dimension")?;
    let scale: f64 = field(hl, t.next(), "scale")?;
    finish(hl, t)?;
    let mut points = Vec::with_capacity(n);
    for (ln, l) in lines {
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| bad(ln, format!("cannot parse coordinate '{x}'"))))
            .collect::<Result<_>>()?;
        if row.len() != k {
            return Err(bad(ln, format!("expected {k} coordinates, found {}", row.len())));
        }
        points.push(row);
    }
    if points.len() != n {
        return Err(Error::Structural(format!("header announces {n} points, file has {}", points.len())));
    }
    Ok((points, scale))
}

/// Core mapping: `core-vertex original-vertex` lines.
pub fn format_mapping(core_vertices: &[usize]) -> String {
    core_vertices.iter().enumerate().map(|(i, v)| format!("{i} {v}\n")).collect()
}

pub fn parse_mapping(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (ln, l) in body(text) {
        let mut t = l.split_whitespace();
        let i: usize = field(ln, t.next(), "core vertex")?;
        let v: usize = field(ln, t.next(), "original vertex")?;
        finish(ln, t)?;
        if i != out.len() {
            return Err(bad(ln, format!("core vertex {i} out of order")));
        }
        out.push(v);
    }
    Ok(out)
}
