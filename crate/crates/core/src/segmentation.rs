//! Multiple-state search over recurrence times.
//!
//! The recurrence sequence of an excursion process is coded a second time:
//! a gap at least `T_i` long becomes a second-level event. Long stretches
//! without second-level events (at least `T*` consecutive short gaps) are
//! dense-event periods and are recorded as `Seg_i`. Raising `T_i` widens
//! `Seg_i`, so the set differences `Seg_i \ Seg_{i-1}` peel off successively
//! lower intensity levels; whatever is left over forms the last state.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::encoding::{recurrence_of_bits, ExcursionProcess, RecurrenceSequence};
use crate::error::{Error, Result};

/// Tuning parameters of the search: `m - 1` gap thresholds and one run
/// threshold.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SearchParams {
    gap_thresholds: Vec<usize>,
    run_threshold: usize,
}

impl SearchParams {
    pub fn new(gap_thresholds: Vec<usize>, run_threshold: usize) -> Result<Self> {
        if gap_thresholds.is_empty() {
            return Err(Error::InvalidParams(
                "at least one gap threshold (m >= 2) is required".into(),
            ));
        }
        if gap_thresholds.contains(&0) || run_threshold == 0 {
            return Err(Error::InvalidParams("thresholds must be at least 1".into()));
        }
        if gap_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams(
                "gap thresholds must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            gap_thresholds,
            run_threshold,
        })
    }

    /// `T_1 < ... < T_{m-1}`.
    pub fn gap_thresholds(&self) -> &[usize] {
        &self.gap_thresholds
    }

    /// `T*`.
    pub fn run_threshold(&self) -> usize {
        self.run_threshold
    }

    /// Number of states `m`.
    pub fn states(&self) -> usize {
        self.gap_thresholds.len() + 1
    }
}

/// Per-time-point state labels with per-state emission estimates.
///
/// Labels run over `1..=m`. States are ranked by estimated emission
/// probability so that state `m` is the lowest-intensity state present and
/// higher intensities get smaller labels. States that end up empty take the
/// smallest labels and carry no emission estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAssignment {
    labels: Vec<usize>,
    states: usize,
    seg_sets: Vec<Vec<Range<usize>>>,
    num_alternations: usize,
    emissions: Vec<Option<f64>>,
    degenerate: bool,
}

impl StateAssignment {
    /// Assignment from arbitrary labels in `1..=states`, with emissions
    /// re-estimated from `x`. Labels are kept as given.
    pub fn from_labels(x: &ExcursionProcess, labels: Vec<usize>, states: usize) -> Result<Self> {
        if labels.len() != x.len() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: x.len(),
            });
        }
        if labels.iter().any(|&l| l == 0 || l > states) {
            return Err(Error::InvalidInput(format!(
                "labels must lie in 1..={states}"
            )));
        }
        let emissions = state_emissions(x.bits(), &labels, states);
        let num_alternations = count_runs(&labels);
        Ok(Self {
            labels,
            states,
            seg_sets: Vec::new(),
            num_alternations,
            emissions,
            degenerate: x.event_count() == 0,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// Raw `Seg_i` interval sets, in search order (before ranking).
    pub fn seg_sets(&self) -> &[Vec<Range<usize>>] {
        &self.seg_sets
    }

    /// Number of maximal constant-label runs, `N`.
    pub fn num_alternations(&self) -> usize {
        self.num_alternations
    }

    /// Emission estimate of each label (`None` for empty states).
    pub fn emissions(&self) -> &[Option<f64>] {
        &self.emissions
    }

    /// Emission estimate attached to every time point.
    pub fn emission_path(&self) -> Vec<f64> {
        self.labels
            .iter()
            .map(|&l| self.emissions[l - 1].unwrap_or(0.0))
            .collect()
    }

    /// Set when the source had no events, so everything collapsed to one state.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub(crate) fn count_runs<T: PartialEq>(labels: &[T]) -> usize {
    if labels.is_empty() {
        return 0;
    }
    1 + labels.windows(2).filter(|w| w[0] != w[1]).count()
}

fn state_emissions(bits: &[bool], labels: &[usize], states: usize) -> Vec<Option<f64>> {
    let mut ones = vec![0usize; states];
    let mut totals = vec![0usize; states];
    for (&b, &l) in bits.iter().zip(labels) {
        totals[l - 1] += 1;
        ones[l - 1] += usize::from(b);
    }
    ones.iter()
        .zip(&totals)
        .map(|(&o, &n)| (n > 0).then(|| o as f64 / n as f64))
        .collect()
}

/// Second-level coding: a gap at least `threshold` long becomes an event.
pub fn second_level_code(gaps: &[usize], threshold: usize) -> Vec<bool> {
    gaps.iter().map(|&g| g >= threshold).collect()
}

/// Original-time intervals of the dense periods found with gap threshold
/// `gap_threshold` and run threshold `run_threshold`.
///
/// Each element of the second-level recurrence sequence is a run of short
/// first-level gaps. A run of at least `run_threshold` short gaps maps to
/// the union of the time spans those gaps own, i.e. from one past the event
/// that opens the run through the event that closes it.
pub fn dense_segments(
    recurrence: &RecurrenceSequence,
    gap_threshold: usize,
    run_threshold: usize,
) -> Vec<Range<usize>> {
    let coded = second_level_code(recurrence.gaps(), gap_threshold);
    let second = recurrence_of_bits(&coded);
    let mut segments = Vec::new();
    let mut cursor = 0usize;
    for &run in second.gaps() {
        if run >= run_threshold && run > 0 {
            let first = recurrence.gap_span(cursor);
            let last = recurrence.gap_span(cursor + run - 1);
            if last.end > first.start {
                segments.push(first.start..last.end);
            }
        }
        // skip the run and the long gap that terminates it
        cursor += run + 1;
    }
    segments
}

/// Runs the multiple-state search and assigns every time point a state.
pub fn search_segments(x: &ExcursionProcess, params: &SearchParams) -> StateAssignment {
    let n = x.len();
    let m = params.states();
    let recurrence = recurrence_of_bits(x.bits());
    let degenerate = recurrence.event_count() == 0;

    let seg_sets: Vec<Vec<Range<usize>>> = params
        .gap_thresholds()
        .iter()
        .map(|&t| dense_segments(&recurrence, t, params.run_threshold()))
        .collect();

    // S_i = Seg_i minus all earlier Seg_j; the rest is S_m
    let mut raw = vec![m; n];
    let mut claimed = vec![false; n];
    for (i, segs) in seg_sets.iter().enumerate() {
        for r in segs {
            for t in r.clone() {
                if !claimed[t] {
                    claimed[t] = true;
                    raw[t] = i + 1;
                }
            }
        }
    }

    let raw_emissions = state_emissions(x.bits(), &raw, m);
    let labels = rank_by_intensity(&raw, &raw_emissions, m);
    let emissions = state_emissions(x.bits(), &labels, m);
    StateAssignment {
        num_alternations: count_runs(&labels),
        labels,
        states: m,
        seg_sets,
        emissions,
        degenerate,
    }
}

/// Relabels so that the lowest-intensity nonempty state becomes `m`, the
/// next lowest `m - 1`, and so on. Ties keep search order.
fn rank_by_intensity(raw: &[usize], emissions: &[Option<f64>], m: usize) -> Vec<usize> {
    let mut present: Vec<(usize, f64)> = emissions
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.map(|p| (i + 1, p)))
        .collect();
    // stable: descending emission, original index breaks ties
    present.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let offset = m - present.len();
    let mut mapping = vec![0usize; m + 1];
    let mut next_empty = 1;
    for (rank, &(raw_label, _)) in present.iter().enumerate() {
        mapping[raw_label] = offset + rank + 1;
    }
    for slot in mapping.iter_mut().skip(1) {
        if *slot == 0 {
            *slot = next_empty;
            next_empty += 1;
        }
    }
    raw.iter().map(|&l| mapping[l]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> ExcursionProcess {
        ExcursionProcess::from_bits(s.chars().map(|c| c == '1').collect())
    }

    #[test]
    fn second_level_examples() {
        assert_eq!(second_level_code(&[2, 1, 1], 2), vec![true, false, false]);
        assert!(second_level_code(&[1, 3, 2], 1).iter().all(|&b| b));
        assert!(second_level_code(&[1, 3, 2], 4).iter().all(|&b| !b));
    }

    #[test]
    fn params_validation() {
        assert!(SearchParams::new(vec![], 2).is_err());
        assert!(SearchParams::new(vec![3, 3], 2).is_err());
        assert!(SearchParams::new(vec![0], 2).is_err());
        assert!(SearchParams::new(vec![2], 0).is_err());
        assert_eq!(SearchParams::new(vec![2, 5], 3).unwrap().states(), 3);
    }

    #[test]
    fn run_threshold_beyond_length_gives_single_state() {
        let x = bits("0101100010000100");
        let p = SearchParams::new(vec![2], x.len() + 1).unwrap();
        let a = search_segments(&x, &p);
        assert!(a.labels().iter().all(|&l| l == 2));
        assert_eq!(a.num_alternations(), 1);
        assert!(a.seg_sets()[0].is_empty());
    }

    /// Hand trace on a 20-point instance with events dense in the first
    /// eight positions.
    ///
    /// bits     1 1 0 1 1 0 1 1 | 0 x 12
    /// gaps     0 0 1 0 0 1 0 12   (seven gaps, six events)
    /// T_1 = 3: second-level bits 0 0 0 0 0 0 0 1 -> a run of 7 short gaps
    /// T* = 2 : the run qualifies and spans gap 0 .. gap 6, i.e. positions 0..=7
    #[test]
    fn hand_traced_dense_block() {
        let x = bits("11011011000000000000");
        let p = SearchParams::new(vec![3], 2).unwrap();
        let a = search_segments(&x, &p);
        assert_eq!(a.seg_sets()[0], vec![0..8]);
        let expect: Vec<usize> = (0..20).map(|t| if t < 8 { 1 } else { 2 }).collect();
        assert_eq!(a.labels(), expect.as_slice());
        assert_eq!(a.num_alternations(), 2);
        assert_eq!(a.emissions()[0], Some(6.0 / 8.0));
        assert_eq!(a.emissions()[1], Some(0.0));
    }

    #[test]
    fn wider_gap_threshold_widens_segment() {
        // three intensity levels: dense, medium, sparse
        let mut s = String::new();
        s.push_str(&"1".repeat(30));
        s.push_str(&"100".repeat(20));
        s.push_str(&"1000000000".repeat(6));
        let x = bits(&s);
        let p = SearchParams::new(vec![1, 3], 3).unwrap();
        let a = search_segments(&x, &p);
        let seg1: usize = a.seg_sets()[0].iter().map(|r| r.len()).sum();
        let seg2: usize = a.seg_sets()[1].iter().map(|r| r.len()).sum();
        assert!(seg2 > seg1);
        // medium block gets its own label and the ranking puts it between
        assert_eq!(a.labels()[0], 1);
        assert_eq!(a.labels()[50], 2);
        assert_eq!(a.labels()[s.len() - 1], 3);
        let e: Vec<f64> = a.emissions().iter().map(|e| e.unwrap()).collect();
        assert!(e[0] > e[1] && e[1] > e[2]);
    }

    #[test]
    fn no_events_is_degenerate() {
        let x = bits("0000000");
        let a = search_segments(&x, &SearchParams::new(vec![2], 1).unwrap());
        assert!(a.is_degenerate());
        assert!(a.labels().iter().all(|&l| l == 2));
    }

    #[test]
    fn from_labels_counts_runs() {
        let x = bits("1100");
        let a = StateAssignment::from_labels(&x, vec![1, 1, 2, 2], 2).unwrap();
        assert_eq!(a.num_alternations(), 2);
        assert_eq!(a.emissions(), &[Some(1.0), Some(0.0)]);
        assert!(StateAssignment::from_labels(&x, vec![1, 3, 1, 1], 2).is_err());
    }
}
