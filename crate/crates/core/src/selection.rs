//! Penalized-likelihood scoring and parameter search for the segmentation.
//!
//! Each candidate `θ = (T_1, .., T_{m-1}, T*)` yields a state assignment.
//! Within a state the events are scored as Bernoulli trials with the
//! state's event frequency, and the number of alternating segments `N` is
//! charged `k` per segment (`k = 2` for AIC, `k = ln n` for BIC).

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{recurrence_times, ExcursionProcess};
use crate::error::{Error, Result};
use crate::segmentation::{search_segments, SearchParams, StateAssignment};
use crate::stats::quantiles;

/// Penalty per alternating segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// `k = 2`.
    #[default]
    Aic,
    /// `k = ln n`.
    Bic,
    /// Explicit `k`.
    Custom(f64),
}

impl Criterion {
    pub fn penalty(self, n: usize) -> f64 {
        match self {
            Criterion::Aic => 2.0,
            Criterion::Bic => (n.max(1) as f64).ln(),
            Criterion::Custom(k) => k,
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|k| *k > 0.0)
                .map(Criterion::Custom)
                .ok_or_else(|| Error::InvalidInput(format!("unknown criterion `{s}`"))),
        }
    }
}

/// Candidate values for the gap thresholds and the run threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub gap_candidates: Vec<usize>,
    pub run_candidates: Vec<usize>,
}

impl Grid {
    /// Default grid derived from the recurrence sequence of `x`.
    ///
    /// Gap candidates are the distinct rounded 0.50, 0.55, .., 0.95
    /// quantiles of the recurrence times. Run candidates cover
    /// `2..=ceil(n*/4)`: every integer up to 12, then geometrically spaced.
    pub fn default_for(x: &ExcursionProcess, states: usize) -> Self {
        let rec = recurrence_times(x);
        let gaps: Vec<f64> = rec.gaps().iter().map(|&g| g as f64).collect();
        let levels: Vec<f64> = (10..=19).map(|i| i as f64 * 0.05).collect();
        let mut gap_candidates: Vec<usize> = quantiles(&gaps, &levels)
            .into_iter()
            .map(|q| (q.round() as usize).max(1))
            .collect();
        gap_candidates.sort_unstable();
        gap_candidates.dedup();
        let needed = states.saturating_sub(1);
        while gap_candidates.len() < needed {
            let next = gap_candidates.last().map_or(1, |&g| g + 1);
            gap_candidates.push(next);
        }

        let cap = rec.gaps().len().div_ceil(4).max(2);
        let mut run_candidates: Vec<usize> = (2..=cap.min(12)).collect();
        if cap > 12 {
            let steps = 16;
            let ratio = (cap as f64 / 12.0).powf(1.0 / steps as f64);
            let mut v = 12.0;
            for _ in 0..steps {
                v *= ratio;
                run_candidates.push((v.round() as usize).min(cap));
            }
            run_candidates.sort_unstable();
            run_candidates.dedup();
        }
        Self {
            gap_candidates,
            run_candidates,
        }
    }

    fn normalized(&self) -> Self {
        let mut gap_candidates = self.gap_candidates.clone();
        gap_candidates.retain(|&g| g >= 1);
        gap_candidates.sort_unstable();
        gap_candidates.dedup();
        let mut run_candidates = self.run_candidates.clone();
        run_candidates.retain(|&g| g >= 1);
        run_candidates.sort_unstable();
        run_candidates.dedup();
        Self {
            gap_candidates,
            run_candidates,
        }
    }
}

/// Search configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub criterion: Criterion,
    /// Intended state count `m >= 2`.
    pub states: usize,
    /// `None` uses [`Grid::default_for`].
    pub grid: Option<Grid>,
    /// Maximum number of candidates scored; larger grids are subsampled.
    pub budget: usize,
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::Aic,
            states: 2,
            grid: None,
            budget: 2000,
            seed: 0,
        }
    }
}

impl LossConfig {
    pub fn with_states(mut self, states: usize) -> Self {
        self.states = states;
        self
    }

    pub fn with_criterion(mut self, criterion: Criterion) -> Self {
        self.criterion = criterion;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_grid(mut self, grid: Grid) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.states < 2 {
            return Err(Error::InvalidParams(
                "state count must be at least 2".into(),
            ));
        }
        if self.budget == 0 {
            return Err(Error::InvalidParams("budget must be at least 1".into()));
        }
        if let Criterion::Custom(k) = self.criterion {
            if !(k > 0.0) {
                return Err(Error::InvalidParams(
                    "penalty coefficient must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub params: SearchParams,
    pub loss: f64,
    pub alternations: usize,
}

/// Outcome of the parameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub best_params: SearchParams,
    pub best_assignment: StateAssignment,
    pub best_loss: f64,
    pub trace: Vec<TraceEntry>,
}

/// Event frequency on a set of time indices.
pub fn estimate_emission(x: &ExcursionProcess, segment: &[usize]) -> Result<f64> {
    if segment.is_empty() {
        return Err(Error::EmptySegment);
    }
    let bits = x.bits();
    let mut ones = 0usize;
    for &t in segment {
        let b = bits
            .get(t)
            .ok_or_else(|| Error::InvalidInput(format!("index {t} outside the process")))?;
        ones += usize::from(*b);
    }
    Ok(ones as f64 / segment.len() as f64)
}

/// Penalized loss `-2 log L + k N` of an assignment.
///
/// Emission estimates are clamped to `[1/(2n), 1 - 1/(2n)]` before taking
/// logs. Labels with no support contribute nothing.
pub fn loss(x: &ExcursionProcess, a: &StateAssignment, k: f64) -> f64 {
    if a.len() != x.len() || x.is_empty() {
        return f64::INFINITY;
    }
    let n = x.len();
    let (ones, totals) = label_counts(x.bits(), a.labels(), a.states());
    data_term(&ones, &totals, n) + k * a.num_alternations() as f64
}

fn label_counts(bits: &[bool], labels: &[usize], states: usize) -> (Vec<usize>, Vec<usize>) {
    let mut ones = vec![0usize; states];
    let mut totals = vec![0usize; states];
    for (&b, &l) in bits.iter().zip(labels) {
        totals[l - 1] += 1;
        ones[l - 1] += usize::from(b);
    }
    (ones, totals)
}

fn data_term(ones: &[usize], totals: &[usize], n: usize) -> f64 {
    let floor = 1.0 / (2.0 * n as f64);
    let mut ll = 0.0;
    for (&o, &tot) in ones.iter().zip(totals) {
        if tot == 0 {
            continue;
        }
        let p = (o as f64 / tot as f64).clamp(floor, 1.0 - floor);
        ll += o as f64 * p.ln() + (tot - o) as f64 * (1.0 - p).ln();
    }
    -2.0 * ll
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// The `rank`-th (lexicographic) `k`-combination of `0..n`.
fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0usize;
    for slot in 0..k {
        let remaining = k - slot - 1;
        loop {
            let count = binomial(n - next - 1, remaining);
            if rank < count {
                out.push(next);
                next += 1;
                break;
            }
            rank -= count;
            next += 1;
        }
    }
    out
}

fn candidate(grid: &Grid, states: usize, idx: u128) -> SearchParams {
    let runs = grid.run_candidates.len() as u128;
    let combo = unrank_combination(grid.gap_candidates.len(), states - 1, idx / runs);
    let gaps = combo.iter().map(|&i| grid.gap_candidates[i]).collect();
    let run = grid.run_candidates[(idx % runs) as usize];
    SearchParams::new(gaps, run).expect("grid candidates are valid by construction")
}

/// Searches the grid for the loss-minimizing parameters.
///
/// The grid is enumerated exhaustively when it fits in the budget and
/// otherwise subsampled uniformly without replacement using `seed`. Ties in
/// loss go to fewer alternations, then to the lexicographically smaller
/// parameter vector, so the result does not depend on evaluation order.
pub fn optimize_theta(x: &ExcursionProcess, cfg: &LossConfig) -> Result<DecodeResult> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::InsufficientData(
            "cannot decode an empty process".into(),
        ));
    }
    let grid = match &cfg.grid {
        Some(g) => g.normalized(),
        None => Grid::default_for(x, cfg.states),
    };
    let combos = binomial(grid.gap_candidates.len(), cfg.states - 1);
    let total = combos * grid.run_candidates.len() as u128;
    if total == 0 {
        return Err(Error::NoModel);
    }

    let indices: Vec<u128> = if total <= cfg.budget as u128 {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bound = usize::try_from(total).unwrap_or(usize::MAX);
        let mut picked: Vec<u128> = index::sample(&mut rng, bound, cfg.budget)
            .into_iter()
            .map(|i| i as u128)
            .collect();
        picked.sort_unstable();
        picked
    };

    let k = cfg.criterion.penalty(x.len());
    // assignments are rebuilt for the winner only, keeping memory at O(n)
    let trace: Vec<TraceEntry> = indices
        .par_iter()
        .map(|&i| {
            let params = candidate(&grid, cfg.states, i);
            let assignment = search_segments(x, &params);
            TraceEntry {
                loss: loss(x, &assignment, k),
                alternations: assignment.num_alternations(),
                params,
            }
        })
        .collect();

    let best = trace
        .iter()
        .filter(|e| e.loss.is_finite())
        .min_by(|a, b| {
            a.loss
                .total_cmp(&b.loss)
                .then(a.alternations.cmp(&b.alternations))
                .then_with(|| a.params.cmp(&b.params))
        })
        .ok_or(Error::NoModel)?;
    let best = (
        best.params.clone(),
        search_segments(x, &best.params),
        best.loss,
    );

    Ok(DecodeResult {
        best_params: best.0,
        best_assignment: best.1,
        best_loss: best.2,
        trace,
    })
}

/// Threshold chosen by the max-min separation rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMinChoice {
    pub pi: f64,
    pub separation: f64,
    /// `(pi, min pairwise separation)` for every candidate with at least two
    /// decoded states.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the threshold whose decoded states have the largest minimum
/// pairwise emission gap.
///
/// `decode` maps a threshold to the emission estimates of its decoded
/// states. Candidates with fewer than two states are skipped. Ties go to the
/// earlier candidate.
pub fn max_min_threshold<F>(candidates: &[f64], mut decode: F) -> Result<MaxMinChoice>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    let mut scores = Vec::new();
    for &pi in candidates {
        let emissions = decode(pi)?;
        if emissions.len() < 2 {
            continue;
        }
        let mut min_gap = f64::INFINITY;
        for i in 0..emissions.len() {
            for j in i + 1..emissions.len() {
                min_gap = min_gap.min((emissions[i] - emissions[j]).abs());
            }
        }
        scores.push((pi, min_gap));
    }
    let mut best: Option<(f64, f64)> = None;
    for &(pi, s) in &scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((pi, s));
        }
    }
    match best {
        Some((pi, separation)) if separation > 0.0 => Ok(MaxMinChoice {
            pi,
            separation,
            scores,
        }),
        _ => Err(Error::NoSeparatingThreshold),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> ExcursionProcess {
        ExcursionProcess::from_bits(s.chars().map(|c| c == '1').collect())
    }

    #[test]
    fn emission_count_ratio() {
        let x = bits("00101");
        assert!((estimate_emission(&x, &[0, 1, 2, 3, 4]).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(estimate_emission(&bits("111"), &[0, 1, 2]).unwrap(), 1.0);
        assert!(matches!(
            estimate_emission(&x, &[]),
            Err(Error::EmptySegment)
        ));
    }

    #[test]
    fn single_segment_loss() {
        let x = bits("1010");
        let a = StateAssignment::from_labels(&x, vec![2; 4], 2).unwrap();
        let l = loss(&x, &a, 2.0);
        let expect = -2.0 * 4.0 * 0.5f64.ln() + 2.0;
        assert!((l - expect).abs() < 1e-12);
        assert!((l - 7.545).abs() < 1e-3);
    }

    #[test]
    fn criterion_penalties() {
        assert_eq!(Criterion::Aic.penalty(100), 2.0);
        assert!((Criterion::Bic.penalty(100) - 100f64.ln()).abs() < 1e-15);
        assert_eq!("bic".parse::<Criterion>().unwrap(), Criterion::Bic);
        assert_eq!("3.5".parse::<Criterion>().unwrap(), Criterion::Custom(3.5));
        assert!("nope".parse::<Criterion>().is_err());
    }

    #[test]
    fn unranking_is_lexicographic() {
        let all: Vec<Vec<usize>> = (0..binomial(5, 3))
            .map(|r| unrank_combination(5, 3, r))
            .collect();
        assert_eq!(all.len(), 10);
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[9], vec![2, 3, 4]);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_bad_config() {
        let x = bits("0101");
        assert!(optimize_theta(&x, &LossConfig::default().with_states(1)).is_err());
        assert!(optimize_theta(&x, &LossConfig::default().with_budget(0)).is_err());
        let empty_grid = Grid {
            gap_candidates: vec![],
            run_candidates: vec![2],
        };
        assert!(matches!(
            optimize_theta(&x, &LossConfig::default().with_grid(empty_grid)),
            Err(Error::NoModel)
        ));
    }

    #[test]
    fn max_min_picks_widest_gap() {
        let table = [
            (-1.0, vec![0.1, 0.12]),
            (-0.5, vec![0.2, 0.5]),
            (0.5, vec![0.4, 0.6]),
        ];
        let choice = max_min_threshold(&[-1.0, -0.5, 0.5], |pi| {
            Ok(table.iter().find(|(p, _)| *p == pi).unwrap().1.clone())
        })
        .unwrap();
        assert_eq!(choice.pi, -0.5);
        assert!((choice.separation - 0.3).abs() < 1e-12);
    }

    #[test]
    fn max_min_signals_no_separation() {
        let r = max_min_threshold(&[1.0, 2.0], |_| Ok(vec![0.3, 0.3]));
        assert!(matches!(r, Err(Error::NoSeparatingThreshold)));
        let r = max_min_threshold(&[1.0], |_| Ok(vec![0.3]));
        assert!(matches!(r, Err(Error::NoSeparatingThreshold)));
    }
}
