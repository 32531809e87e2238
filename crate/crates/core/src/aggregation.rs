//! Multi-threshold decoding and state aggregation.
//!
//! Each threshold of a ladder produces its own excursion process and its own
//! decode. The per-time emission estimates are stacked into column vectors,
//! which are then grouped with Ward clustering.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{encode_one_sided, ReturnSeries};
use crate::error::{Error, Result};
use crate::linkage::{silhouette, ward, Dendrogram};
use crate::segmentation::SearchParams;
use crate::selection::{optimize_theta, LossConfig};
use crate::stats::{isotonic_nondecreasing, quantiles};

/// Quantile levels `0.9, 0.8, .., 0.1`.
pub const DEFAULT_LEVELS: [f64; 9] = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];

/// Ordered one-sided thresholds. Positive entries mark upper-tail events,
/// negative entries lower-tail events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdLadder {
    pis: Vec<f64>,
    levels: Option<Vec<f64>>,
}

impl ThresholdLadder {
    pub fn new(pis: Vec<f64>) -> Result<Self> {
        if pis.is_empty() {
            return Err(Error::InvalidParams(
                "ladder needs at least one threshold".into(),
            ));
        }
        for &p in &pis {
            if !p.is_finite() {
                return Err(Error::InvalidParams(format!("threshold {p} is not finite")));
            }
            if p == 0.0 {
                return Err(Error::AmbiguousTail);
            }
        }
        let mut sorted = pis.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParams(
                "ladder thresholds must be distinct".into(),
            ));
        }
        Ok(Self { pis, levels: None })
    }

    /// Thresholds at the empirical quantiles `levels` of `returns`.
    pub fn from_quantiles(returns: &ReturnSeries, levels: &[f64]) -> Result<Self> {
        if levels.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::InvalidParams(
                "quantile levels must lie in [0, 1]".into(),
            ));
        }
        if returns.is_empty() {
            return Err(Error::InsufficientData(
                "no returns to take quantiles of".into(),
            ));
        }
        let mut ladder = Self::new(quantiles(returns.values(), levels))?;
        ladder.levels = Some(levels.to_vec());
        Ok(ladder)
    }

    pub fn pis(&self) -> &[f64] {
        &self.pis
    }

    pub fn levels(&self) -> Option<&[f64]> {
        self.levels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.pis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pis.is_empty()
    }

    /// Row indices ordered by ascending threshold value.
    pub fn ascending_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.pis.len()).collect();
        idx.sort_by(|&a, &b| self.pis[a].total_cmp(&self.pis[b]));
        idx
    }
}

/// Summary of one row's decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDecode {
    pub pi: f64,
    pub params: SearchParams,
    pub loss: f64,
    pub alternations: usize,
    pub events: usize,
}

/// `V x n` matrix of decoded emission probabilities, one row per threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionMatrix {
    ladder: ThresholdLadder,
    values: Vec<Vec<f64>>,
    rows: Vec<RowDecode>,
}

impl EmissionMatrix {
    pub fn new(ladder: ThresholdLadder, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != ladder.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: ladder.len(),
            });
        }
        let n = values.first().map_or(0, Vec::len);
        if values.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("emission rows differ in length".into()));
        }
        if values.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput(
                "emission entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            ladder,
            values,
            rows: Vec::new(),
        })
    }

    pub fn ladder(&self) -> &ThresholdLadder {
        &self.ladder
    }

    /// Raw tail probabilities, `values()[row][t]`.
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Per-row decode summaries (empty when built from raw values).
    pub fn row_decodes(&self) -> &[RowDecode] {
        &self.rows
    }

    /// Number of time points.
    pub fn width(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[t]).collect()
    }

    /// Entry as a lower-tail probability `P(Y < pi)`: upper-tail rows store
    /// `P(Y >= pi)` and are flipped.
    pub fn lower_tail(&self, row: usize, t: usize) -> f64 {
        let p = self.values[row][t];
        if self.ladder.pis[row] > 0.0 {
            1.0 - p
        } else {
            p
        }
    }
}

/// One-sided encode and decode at every ladder threshold. Rows run in
/// parallel and do not depend on each other.
pub fn encode_decode(
    returns: &ReturnSeries,
    ladder: &ThresholdLadder,
    cfg: &LossConfig,
) -> Result<EmissionMatrix> {
    if returns.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "decoding needs at least 2 returns, got {}",
            returns.len()
        )));
    }
    let decoded: Vec<Result<(Vec<f64>, RowDecode)>> = ladder
        .pis()
        .par_iter()
        .map(|&pi| {
            let x = encode_one_sided(returns, pi)?;
            let result = optimize_theta(&x, cfg)?;
            let row = result.best_assignment.emission_path();
            Ok((
                row,
                RowDecode {
                    pi,
                    params: result.best_params,
                    loss: result.best_loss,
                    alternations: result.best_assignment.num_alternations(),
                    events: x.event_count(),
                },
            ))
        })
        .collect();
    let mut values = Vec::with_capacity(ladder.len());
    let mut rows = Vec::with_capacity(ladder.len());
    for r in decoded {
        let (v, info) = r?;
        values.push(v);
        rows.push(info);
    }
    Ok(EmissionMatrix {
        ladder: ladder.clone(),
        values,
        rows,
    })
}

/// Hidden-state clustering of the emission columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster of every time point, `1..=k`, ordered by rising volatility.
    pub labels: Vec<usize>,
    pub k: usize,
    /// Tree over the distinct column vectors.
    pub tree: Dendrogram,
    /// Index into the tree's leaves for every time point.
    pub leaf_of: Vec<usize>,
    /// Multiplicity of each distinct column.
    pub leaf_weights: Vec<f64>,
    /// Threshold values in ascending order.
    pub cdf_thresholds: Vec<f64>,
    /// `per_cluster_cdf[c][i]`: mean lower-tail probability of cluster
    /// `c + 1` at `cdf_thresholds[i]`.
    pub per_cluster_cdf: Vec<Vec<f64>>,
    /// Set when a cluster CDF needed isotonic repair.
    pub cdf_repaired: bool,
    /// Mean silhouette of the final cut (0 for a single cluster).
    pub silhouette: f64,
    /// Set when every column was identical.
    pub degenerate: bool,
}

/// Ward clustering of the columns of `em`.
///
/// With `k = None` the cluster count is chosen from `2..=6` by mean
/// silhouette. Identical columns are collapsed into weighted points first.
pub fn cluster_states(em: &EmissionMatrix, k: Option<usize>) -> Result<ClusterResult> {
    let n = em.width();
    if n == 0 {
        return Err(Error::InsufficientData("no time points to cluster".into()));
    }
    if let Some(k) = k {
        if k == 0 || k > n {
            return Err(Error::InvalidParams(format!(
                "cluster count {k} must lie in 1..={n}"
            )));
        }
    }

    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut leaf_of = Vec::with_capacity(n);
    for t in 0..n {
        let col = em.column(t);
        let key: Vec<u64> = col.iter().map(|v| v.to_bits()).collect();
        let id = *index.entry(key).or_insert_with(|| {
            points.push(col);
            weights.push(0.0);
            points.len() - 1
        });
        weights[id] += 1.0;
        leaf_of.push(id);
    }

    let tree = ward(&points, &weights);
    let distinct = points.len();
    let degenerate = distinct == 1;
    let (leaf_labels, sil) = if degenerate {
        (vec![1], 0.0)
    } else if let Some(k) = k {
        let cut = tree.cut(k.min(distinct));
        let s = silhouette(&points, &weights, &cut);
        (cut, s)
    } else {
        let mut best: Option<(Vec<usize>, f64)> = None;
        for kk in 2..=6.min(distinct) {
            let cut = tree.cut(kk);
            let s = silhouette(&points, &weights, &cut);
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((cut, s));
            }
        }
        best.expect("at least two distinct columns")
    };
    let k_found = leaf_labels.iter().copied().max().unwrap_or(1);

    // order clusters by mean raw tail probability, calmest first
    let v = em.ladder().len();
    let mut mass = vec![0.0; k_found];
    let mut tail = vec![0.0; k_found];
    for (leaf, p) in points.iter().enumerate() {
        let c = leaf_labels[leaf] - 1;
        mass[c] += weights[leaf];
        tail[c] += weights[leaf] * p.iter().sum::<f64>() / v as f64;
    }
    let mut order: Vec<usize> = (0..k_found).collect();
    order.sort_by(|&a, &b| {
        (tail[a] / mass[a])
            .total_cmp(&(tail[b] / mass[b]))
            .then(a.cmp(&b))
    });
    let mut rank = vec![0usize; k_found];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r + 1;
    }
    let leaf_labels: Vec<usize> = leaf_labels.iter().map(|&l| rank[l - 1]).collect();
    let labels: Vec<usize> = leaf_of.iter().map(|&leaf| leaf_labels[leaf]).collect();

    let asc = em.ladder().ascending_order();
    let cdf_thresholds: Vec<f64> = asc.iter().map(|&i| em.ladder().pis()[i]).collect();
    let mut per_cluster_cdf = vec![vec![0.0; v]; k_found];
    let mut cluster_mass = vec![0.0; k_found];
    for (leaf, p) in points.iter().enumerate() {
        let c = leaf_labels[leaf] - 1;
        cluster_mass[c] += weights[leaf];
        for (slot, &row) in asc.iter().enumerate() {
            let lower = if em.ladder().pis()[row] > 0.0 {
                1.0 - p[row]
            } else {
                p[row]
            };
            per_cluster_cdf[c][slot] += weights[leaf] * lower;
        }
    }
    let mut cdf_repaired = false;
    for (c, cdf) in per_cluster_cdf.iter_mut().enumerate() {
        for v in cdf.iter_mut() {
            *v /= cluster_mass[c];
        }
        if cdf.windows(2).any(|w| w[0] > w[1]) {
            *cdf = isotonic_nondecreasing(cdf);
            cdf_repaired = true;
        }
    }

    Ok(ClusterResult {
        labels,
        k: k_found,
        tree,
        leaf_of,
        leaf_weights: weights,
        cdf_thresholds,
        per_cluster_cdf,
        cdf_repaired,
        silhouette: sil,
        degenerate,
    })
}
