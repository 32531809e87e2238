//! Transfer-entropy dependency networks over decoded state trajectories.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::ReturnSeries;
use crate::error::{Error, Result};
use crate::linkage::{average, Dendrogram};
use crate::stats::{quantiles, xlogx};

/// Default block width for lag-and-lead summarization, in grid units.
pub const DEFAULT_BLOCK: usize = 5;

/// Default cap on distinct history patterns for [`te_classic`].
pub const DEFAULT_PATTERN_CAP: usize = 1 << 16;

/// Ordinal symbols on a uniform grid. Symbol 0 marks an empty unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSeries {
    symbols: Vec<usize>,
    /// Largest admissible symbol.
    top: usize,
    /// Grid units that held more than one observation.
    pub collisions: usize,
}

impl SymbolSeries {
    pub fn new(symbols: Vec<usize>, top: usize) -> Result<Self> {
        if let Some(i) = symbols.iter().position(|&s| s > top) {
            return Err(Error::InvalidInput(format!(
                "symbol {} at index {i} exceeds the top symbol {top}",
                symbols[i]
            )));
        }
        Ok(Self {
            symbols,
            top,
            collisions: 0,
        })
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn top(&self) -> usize {
        self.top
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// A uniform clock grid shared by several instruments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockGrid {
    pub origin: f64,
    pub unit: f64,
    pub len: usize,
}

impl ClockGrid {
    pub fn new(origin: f64, unit: f64, len: usize) -> Result<Self> {
        if !(unit > 0.0 && unit.is_finite()) || !origin.is_finite() {
            return Err(Error::InvalidParams(
                "clock unit must be positive and finite".into(),
            ));
        }
        Ok(Self { origin, unit, len })
    }

    /// The smallest grid starting at the earliest timestamp that covers all series.
    pub fn covering<'a>(series: impl IntoIterator<Item = &'a [f64]>, unit: f64) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for ts in series {
            for &t in ts {
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
        if lo > hi {
            return Err(Error::InsufficientData(
                "no timestamps to build a clock grid".into(),
            ));
        }
        let probe = Self::new(lo, unit, 0)?;
        Self::new(lo, unit, probe.index(hi) + 1)
    }

    fn index(&self, t: f64) -> usize {
        ((t - self.origin) / self.unit).floor() as usize
    }
}

/// Places transaction-time states on a clock grid. Units with several
/// transactions keep the largest state and are counted in `collisions`.
pub fn to_clock_symbols(
    labels: &[usize],
    timestamps: &[f64],
    top: usize,
    grid: &ClockGrid,
) -> Result<SymbolSeries> {
    if labels.len() != timestamps.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: timestamps.len(),
        });
    }
    if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::UnsortedTimestamps { index: i + 1 });
    }
    let mut symbols = vec![0; grid.len];
    let mut hits = vec![0u32; grid.len];
    for (&s, &t) in labels.iter().zip(timestamps) {
        if t < grid.origin {
            return Err(Error::InvalidInput(format!(
                "timestamp {t} precedes the grid origin"
            )));
        }
        let i = grid.index(t);
        if i >= grid.len {
            return Err(Error::InvalidInput(format!(
                "timestamp {t} lies past the end of the grid"
            )));
        }
        symbols[i] = symbols[i].max(s);
        hits[i] += 1;
    }
    let mut out = SymbolSeries::new(symbols, top)?;
    out.collisions = hits.iter().filter(|&&h| h > 1).count();
    Ok(out)
}

/// Centred sliding maximum of width `w` (odd). The output covers only
/// positions with a full window, so it is `2 * (w / 2)` shorter.
pub fn block_max_summarize(s: &SymbolSeries, w: usize) -> Result<SymbolSeries> {
    if w == 0 || w.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!(
            "block width {w} must be odd and positive"
        )));
    }
    if w > s.len() {
        return Err(Error::InsufficientData(format!(
            "block width {w} exceeds series length {}",
            s.len()
        )));
    }
    let symbols = s
        .symbols
        .windows(w)
        .map(|win| win.iter().copied().max().unwrap_or(0))
        .collect();
    Ok(SymbolSeries {
        symbols,
        top: s.top,
        collisions: s.collisions,
    })
}

/// Flow from `x` into the top state of `y`:
/// `sum_a P(y=top, x=a) ln[P(y=top | x=a) / P(y=top)]`.
pub fn te_lag_lead(x: &SymbolSeries, y: &SymbolSeries) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut by_source = vec![0usize; x.top + 1];
    let mut joint_top = vec![0usize; x.top + 1];
    let mut top = 0usize;
    for (&a, &b) in x.symbols.iter().zip(&y.symbols) {
        by_source[a] += 1;
        if b == y.top {
            joint_top[a] += 1;
            top += 1;
        }
    }
    if top == 0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let p_top = top as f64 / nf;
    let sum: f64 = joint_top
        .iter()
        .zip(&by_source)
        .filter(|(&j, _)| j > 0)
        .map(|(&j, &c)| {
            let j = j as f64;
            j / nf * (j / c as f64 / p_top).ln()
        })
        .sum();
    Ok(sum.max(0.0))
}

fn count<K: Hash + Eq>(keys: impl Iterator<Item = K>) -> HashMap<K, usize> {
    let mut m = HashMap::new();
    for k in keys {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

fn sum_xlogx<K>(m: &HashMap<K, usize>) -> f64 {
    m.values().map(|&c| xlogx(c as f64)).sum()
}

/// Plug-in transfer entropy from `x` to `y` with `lag` steps of history.
///
/// Fails when the joint histories of both series take more than `cap`
/// distinct values, where the plug-in estimate would be meaningless.
pub fn te_classic(x: &SymbolSeries, y: &SymbolSeries, lag: usize, cap: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if lag == 0 {
        return Err(Error::InvalidParams("lag must be at least 1".into()));
    }
    if x.len() <= lag {
        return Err(Error::InsufficientData(format!(
            "series of length {} is too short for lag {lag}",
            x.len()
        )));
    }
    let (xs, ys) = (&x.symbols, &y.symbols);
    let times = lag..xs.len();
    let past = |t: usize| (&ys[t - lag..t], &xs[t - lag..t]);
    let joint_past = count(times.clone().map(past));
    if joint_past.len() > cap {
        return Err(Error::AlphabetExplosion {
            patterns: joint_past.len(),
            cap,
        });
    }
    let full = count(times.clone().map(|t| (ys[t], past(t))));
    let own_past = count(times.clone().map(|t| &ys[t - lag..t]));
    let own_full = count(times.clone().map(|t| (ys[t], &ys[t - lag..t])));
    let n = times.len() as f64;
    // conditional mutual information I(y_t ; x_past | y_past) written with counts
    let te = (sum_xlogx(&full) - sum_xlogx(&joint_past) - sum_xlogx(&own_full)
        + sum_xlogx(&own_past))
        / n;
    Ok(te.max(0.0))
}

/// Symbols `1..=q` by empirical quantile bin. The flag is set for a
/// constant series, which maps entirely to symbol 1.
pub fn simple_binning(returns: &ReturnSeries, q: usize) -> Result<(SymbolSeries, bool)> {
    if q < 2 {
        return Err(Error::InvalidParams(format!(
            "bin count {q} must be at least 2"
        )));
    }
    let v = returns.values();
    let constant = v.iter().all(|&y| y == v[0]);
    if constant {
        return Ok((SymbolSeries::new(vec![1; v.len()], q)?, true));
    }
    let levels: Vec<f64> = (1..q).map(|i| i as f64 / q as f64).collect();
    let cuts = quantiles(v, &levels);
    let symbols = v
        .iter()
        .map(|&y| 1 + cuts.partition_point(|&c| c < y))
        .collect();
    Ok((SymbolSeries::new(symbols, q)?, false))
}

/// Square flow matrix; entry `(i, j)` is the flow from node `i` to node `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeMatrix {
    nodes: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl TeMatrix {
    /// Validates shape and finiteness and zeroes the diagonal.
    pub fn new(nodes: Vec<String>, mut values: Vec<Vec<f64>>) -> Result<Self> {
        let p = nodes.len();
        if values.len() != p {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: p,
            });
        }
        for (i, row) in values.iter_mut().enumerate() {
            if row.len() != p {
                return Err(Error::LengthMismatch {
                    left: row.len(),
                    right: p,
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "row {i} has a non-finite entry"
                )));
            }
            row[i] = 0.0;
        }
        Ok(Self { nodes, values })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The matrix with rows and columns permuted independently.
    pub fn permuted(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&r| cols.iter().map(|&c| self.values[r][c]).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum TeEstimator {
    LagLead,
    Classic { lag: usize, cap: usize },
}

/// Flow between every ordered pair of series, computed in parallel.
pub fn te_matrix(
    nodes: Vec<String>,
    series: &[SymbolSeries],
    est: TeEstimator,
) -> Result<TeMatrix> {
    let p = series.len();
    if nodes.len() != p {
        return Err(Error::LengthMismatch {
            left: nodes.len(),
            right: p,
        });
    }
    let cells: Vec<f64> = (0..p * p)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / p, ij % p);
            if i == j {
                return Ok(0.0);
            }
            match est {
                TeEstimator::LagLead => te_lag_lead(&series[i], &series[j]),
                TeEstimator::Classic { lag, cap } => te_classic(&series[i], &series[j], lag, cap),
            }
        })
        .collect::<Result<_>>()?;
    let values = cells.chunks(p.max(1)).map(<[f64]>::to_vec).collect();
    TeMatrix::new(nodes, if p == 0 { Vec::new() } else { values })
}

/// Incoming (column) and outgoing (row) sums, diagonal excluded.
pub fn node_strengths(m: &TeMatrix) -> (Vec<f64>, Vec<f64>) {
    let p = m.len();
    let mut incoming = vec![0.0; p];
    let mut outgoing = vec![0.0; p];
    for (i, row) in m.values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j {
                outgoing[i] += v;
                incoming[j] += v;
            }
        }
    }
    (incoming, outgoing)
}

/// Row order by ascending outgoing strength and column order by ascending
/// incoming strength; ties keep node order.
pub fn reorder_matrix(m: &TeMatrix) -> (Vec<usize>, Vec<usize>) {
    let (incoming, outgoing) = node_strengths(m);
    let order = |s: &[f64]| {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
        idx
    };
    (order(&outgoing), order(&incoming))
}

/// Min-max rescaled dissimilarity of the symmetrized flow. The most similar
/// pair maps to 0 and the least similar to 1; the diagonal is 0.
pub fn dissimilarity(m: &TeMatrix) -> Result<Vec<Vec<f64>>> {
    let p = m.len();
    if p < 2 {
        return Err(Error::InsufficientData(
            "dissimilarity needs at least two nodes".into(),
        ));
    }
    let v = &m.values;
    let sim = |i: usize, j: usize| (v[i][j] + v[j][i]) / 2.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..p {
        for j in i + 1..p {
            lo = lo.min(sim(i, j));
            hi = hi.max(sim(i, j));
        }
    }
    if hi <= lo {
        return Err(Error::DegenerateSimilarity);
    }
    Ok((0..p)
        .map(|i| {
            (0..p)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        (hi - sim(i, j)) / (hi - lo)
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeFilter {
    /// The `k` heaviest edges.
    TopK(usize),
    /// Edges with weight at least this value.
    MinWeight(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    /// Nodes incident to at least one kept edge, in matrix order.
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
}

impl Network {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Graphviz text for external renderers.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph te {\n");
        for n in &self.nodes {
            let _ = writeln!(s, "  {n:?};");
        }
        for e in &self.edges {
            let _ = writeln!(s, "  {:?} -> {:?} [weight={}];", e.src, e.dst, e.weight);
        }
        s.push_str("}\n");
        s
    }
}

/// Keeps the strongest positive edges and drops nodes left isolated.
/// Edges are listed by descending weight, ties in row-major order.
pub fn build_network(m: &TeMatrix, filter: EdgeFilter) -> Network {
    let p = m.len();
    let mut cand: Vec<(usize, usize, f64)> = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && m.values[i][j] > 0.0)
        .map(|(i, j)| (i, j, m.values[i][j]))
        .collect();
    cand.sort_by(|a, b| b.2.total_cmp(&a.2));
    match filter {
        EdgeFilter::TopK(k) => cand.truncate(k),
        EdgeFilter::MinWeight(w) => cand.retain(|e| e.2 >= w),
    }
    let mut used = vec![false; p];
    for &(i, j, _) in &cand {
        used[i] = true;
        used[j] = true;
    }
    Network {
        nodes: (0..p)
            .filter(|&i| used[i])
            .map(|i| m.nodes[i].clone())
            .collect(),
        edges: cand
            .into_iter()
            .map(|(i, j, w)| Edge {
                src: m.nodes[i].clone(),
                dst: m.nodes[j].clone(),
                weight: w,
            })
            .collect(),
    }
}

/// Average-linkage tree over a precomputed dissimilarity, with the leaf
/// order used to lay out a heatmap.
pub fn cluster_dissimilarity(d: &[Vec<f64>]) -> Result<(Dendrogram, Vec<usize>)> {
    let p = d.len();
    for (i, row) in d.iter().enumerate() {
        if row.len() != p {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: p,
            });
        }
        for j in 0..i {
            if (row[j] - d[j][i]).abs() > 1e-12 {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }
    let mut forced = d.to_vec();
    for (i, row) in forced.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    let tree = average(&forced);
    let order = tree.leaf_order();
    Ok((tree, order))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ss(v: &[usize], top: usize) -> SymbolSeries {
        SymbolSeries::new(v.to_vec(), top).unwrap()
    }

    #[test]
    fn single_transaction_placement() {
        let grid = ClockGrid::new(0.0, 1.0, 5).unwrap();
        let s = to_clock_symbols(&[2], &[2.5], 3, &grid).unwrap();
        assert_eq!(s.symbols(), &[0, 0, 2, 0, 0]);
        assert_eq!(s.collisions, 0);
    }

    #[test]
    fn collisions_keep_max() {
        let grid = ClockGrid::new(0.0, 1.0, 3).unwrap();
        let s = to_clock_symbols(&[1, 3, 2], &[0.0, 1.2, 1.7], 3, &grid).unwrap();
        assert_eq!(s.symbols(), &[1, 3, 0]);
        assert_eq!(s.collisions, 1);
        assert!(matches!(
            to_clock_symbols(&[1, 1], &[1.0, 0.0], 3, &grid),
            Err(Error::UnsortedTimestamps { index: 1 })
        ));
    }

    #[test]
    fn block_max_interior() {
        let s = ss(&[0, 1, 0, 3, 2], 3);
        assert_eq!(block_max_summarize(&s, 3).unwrap().symbols(), &[1, 3, 3]);
        assert_eq!(block_max_summarize(&s, 1).unwrap(), s);
        assert!(block_max_summarize(&s, 7).is_err());
        assert!(block_max_summarize(&s, 2).is_err());
    }

    #[test]
    fn lag_lead_hand_table() {
        // (y=3, x=1):4, (y=3, x=0):1, (y<3, x=1):1, (y<3, x=0):4
        let mut x = vec![1; 4];
        let mut y = vec![3; 4];
        x.push(0);
        y.push(3);
        x.push(1);
        y.push(1);
        x.extend([0; 4]);
        y.extend([2; 4]);
        let te = te_lag_lead(&ss(&x, 3), &ss(&y, 3)).unwrap();
        let expect = 0.4 * (0.8f64 / 0.5).ln() + 0.1 * (0.2f64 / 0.5).ln();
        assert!((te - expect).abs() < 1e-12);
    }

    #[test]
    fn classic_binary_hand_value() {
        // y copies x with one step delay except one flip
        let x = [0, 1, 1, 0, 1, 0, 0, 1, 0];
        let y = [0, 0, 1, 1, 0, 1, 0, 1, 1];
        let te = te_classic(&ss(&x, 1), &ss(&y, 1), 1, 16).unwrap();
        // oracle: direct sum over observed (y_t, y_{t-1}, x_{t-1})
        let mut triples = Vec::new();
        for t in 1..9 {
            triples.push((y[t], y[t - 1], x[t - 1]));
        }
        let n = triples.len() as f64;
        let c = |f: &dyn Fn(&(usize, usize, usize)) -> bool| {
            triples.iter().filter(|t| f(t)).count() as f64
        };
        let mut expect = 0.0;
        let mut seen = Vec::new();
        for tr in &triples {
            if seen.contains(tr) {
                continue;
            }
            seen.push(*tr);
            let (a, b, d) = *tr;
            let full = c(&|t| *t == (a, b, d));
            let bd = c(&|t| t.1 == b && t.2 == d);
            let ab = c(&|t| t.0 == a && t.1 == b);
            let bb = c(&|t| t.1 == b);
            expect += full / n * ((full / bd) / (ab / bb)).ln();
        }
        assert!((te - expect).abs() < 1e-12, "{te} vs {expect}");
        assert!(te > 0.0);
    }

    #[test]
    fn classic_cap() {
        let x: Vec<usize> = (0..200).map(|i| i % 5).collect();
        let y: Vec<usize> = (0..200).map(|i| (i * 7 / 3) % 5).collect();
        assert!(matches!(
            te_classic(&ss(&x, 4), &ss(&y, 4), 3, 4),
            Err(Error::AlphabetExplosion { .. })
        ));
    }

    #[test]
    fn strengths_and_order() {
        let m = TeMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                vec![9.0, 1.0, 2.0],
                vec![3.0, 0.0, 4.0],
                vec![5.0, 6.0, 0.0],
            ],
        )
        .unwrap();
        let (i, o) = node_strengths(&m);
        assert_eq!(i, vec![8.0, 7.0, 6.0]);
        assert_eq!(o, vec![3.0, 7.0, 11.0]);
        let (r, c) = reorder_matrix(&m);
        assert_eq!(r, vec![0, 1, 2]);
        assert_eq!(c, vec![2, 1, 0]);
    }

    #[test]
    fn dissimilarity_three_nodes() {
        let m = TeMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                vec![0.0, 0.2, 0.0],
                vec![0.4, 0.0, 0.1],
                vec![0.2, 0.3, 0.0],
            ],
        )
        .unwrap();
        // sims: ab 0.3, ac 0.1, bc 0.2
        let d = dissimilarity(&m).unwrap();
        assert!((d[0][1] - 0.0).abs() < 1e-12);
        assert!((d[0][2] - 1.0).abs() < 1e-12);
        assert!((d[1][2] - 0.5).abs() < 1e-12);
        assert_eq!(d[2][1], d[1][2]);
        let flat = TeMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap();
        assert!(matches!(
            dissimilarity(&flat),
            Err(Error::DegenerateSimilarity)
        ));
    }

    #[test]
    fn network_filters() {
        let m = TeMatrix::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![
                vec![0.0, 0.5, 0.1, 0.0],
                vec![0.0, 0.0, 0.3, 0.0],
                vec![0.2, 0.0, 0.0, 0.05],
                vec![0.0, 0.0, 0.0, 0.0],
            ],
        )
        .unwrap();
        assert!(build_network(&m, EdgeFilter::MinWeight(0.6)).is_empty());
        let top = build_network(&m, EdgeFilter::TopK(1));
        assert_eq!(top.nodes, vec!["a", "b"]);
        assert_eq!(top.edges.len(), 1);
        let net = build_network(&m, EdgeFilter::MinWeight(0.2));
        let pairs: Vec<(&str, &str)> = net
            .edges
            .iter()
            .map(|e| (e.src.as_str(), e.dst.as_str()))
            .collect();
        assert_eq!(pairs, vec![("a", "b"), ("b", "c"), ("c", "a")]);
        assert_eq!(net.nodes, vec!["a", "b", "c"]);
        assert!(net.to_dot().contains("\"a\" -> \"b\""));
    }

    #[test]
    fn two_blocks_two_branches() {
        let d = vec![
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
        ];
        let (tree, order) = cluster_dissimilarity(&d).unwrap();
        assert_eq!(tree.cut(2), vec![1, 1, 2, 2]);
        let pos: Vec<usize> = (0..4)
            .map(|i| order.iter().position(|&o| o == i).unwrap())
            .collect();
        assert_eq!(pos[0].abs_diff(pos[1]), 1);
        let mut bad = d.clone();
        bad[0][1] = 0.3;
        assert!(matches!(
            cluster_dissimilarity(&bad),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn binning_median_split() {
        let r = ReturnSeries::from_values(vec![0.3, -1.0, 2.0, 0.1]).unwrap();
        let (s, flat) = simple_binning(&r, 2).unwrap();
        assert!(!flat);
        assert_eq!(s.symbols(), &[2, 1, 2, 1]);
        let c = ReturnSeries::from_values(vec![1.0; 5]).unwrap();
        assert!(simple_binning(&c, 5).unwrap().1);
    }
}
