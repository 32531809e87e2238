//! Excursion coding of return series and recurrence-time extraction.
//!
//! A return series is turned into a 0-1 excursion process by marking every
//! observation that lands in a tail beyond a threshold. The waiting times
//! between successive marks form the recurrence sequence consumed by the
//! segmentation search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timestamped log returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    timestamps: Vec<f64>,
    values: Vec<f64>,
}

impl ReturnSeries {
    /// Builds a series, checking finiteness and timestamp ordering.
    pub fn new(timestamps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: timestamps.len(),
                right: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "return at index {i} is not finite"
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::UnsortedTimestamps { index: i + 1 });
        }
        Ok(Self { timestamps, values })
    }

    /// Series indexed by transaction count `0..n`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let timestamps = (0..values.len()).map(|i| i as f64).collect();
        Self::new(timestamps, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Log returns `ln(p_t / p_{t-1})` of a positive price series.
///
/// Timestamps of the result are those of the later price in each pair.
pub fn log_returns(timestamps: &[f64], prices: &[f64]) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::InsufficientData(
            "at least two prices are needed for a return".into(),
        ));
    }
    if timestamps.len() != prices.len() {
        return Err(Error::LengthMismatch {
            left: timestamps.len(),
            right: prices.len(),
        });
    }
    if let Some((index, &value)) = prices
        .iter()
        .enumerate()
        .find(|(_, p)| !(**p > 0.0) || !p.is_finite())
    {
        return Err(Error::NonPositivePrice { index, value });
    }
    let values = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    ReturnSeries::new(timestamps[1..].to_vec(), values)
}

/// How an excursion process was thresholded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdSpec {
    /// Marks `r <= lower` or `r >= upper`.
    TwoSided { lower: f64, upper: f64 },
    /// Marks `r <= pi` when `pi < 0`, `r >= pi` when `pi > 0`.
    OneSided { pi: f64 },
}

/// A binary event sequence together with the threshold that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionProcess {
    bits: Vec<bool>,
    threshold: Option<ThresholdSpec>,
}

impl ExcursionProcess {
    /// Wraps raw bits with no associated threshold (simulated Bernoulli data).
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self {
            bits,
            threshold: None,
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn threshold(&self) -> Option<ThresholdSpec> {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Two-sided excursion coding: an event is a return at or beyond either bound.
pub fn encode_excursion(
    returns: &ReturnSeries,
    lower: f64,
    upper: f64,
) -> Result<ExcursionProcess> {
    if !(lower < upper) {
        return Err(Error::InvalidThresholdPair { lower, upper });
    }
    let bits = returns
        .values()
        .iter()
        .map(|&r| r <= lower || r >= upper)
        .collect();
    Ok(ExcursionProcess {
        bits,
        threshold: Some(ThresholdSpec::TwoSided { lower, upper }),
    })
}

/// One-sided excursion coding; the sign of `pi` selects the tail.
pub fn encode_one_sided(returns: &ReturnSeries, pi: f64) -> Result<ExcursionProcess> {
    if pi == 0.0 || pi.is_nan() {
        return Err(Error::AmbiguousTail);
    }
    let bits = returns
        .values()
        .iter()
        .map(|&r| if pi < 0.0 { r <= pi } else { r >= pi })
        .collect();
    Ok(ExcursionProcess {
        bits,
        threshold: Some(ThresholdSpec::OneSided { pi }),
    })
}

/// Waiting times between successive events of a binary sequence.
///
/// `gaps[0]` counts the zeros before the first event, `gaps[i]` the zeros
/// between events `i - 1` and `i`, and the final element the trailing zeros
/// after the last event. There is always one more gap than there are events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrenceSequence {
    gaps: Vec<usize>,
    event_positions: Vec<usize>,
    len: usize,
}

impl RecurrenceSequence {
    pub fn gaps(&self) -> &[usize] {
        &self.gaps
    }

    /// 0-based positions of the events in the source sequence.
    pub fn event_positions(&self) -> &[usize] {
        &self.event_positions
    }

    /// Length of the source sequence.
    pub fn source_len(&self) -> usize {
        self.len
    }

    pub fn event_count(&self) -> usize {
        self.event_positions.len()
    }

    /// Reconstructs the source bits.
    pub fn to_bits(&self) -> Vec<bool> {
        let mut bits = vec![false; self.len];
        for &p in &self.event_positions {
            bits[p] = true;
        }
        bits
    }

    /// Rebuilds the sequence from gaps alone.
    pub fn from_gaps(gaps: Vec<usize>) -> Result<Self> {
        if gaps.is_empty() {
            return Err(Error::InvalidInput(
                "a recurrence sequence has at least one gap".into(),
            ));
        }
        let mut event_positions = Vec::with_capacity(gaps.len() - 1);
        let mut cursor = 0usize;
        for &g in &gaps[..gaps.len() - 1] {
            cursor += g;
            event_positions.push(cursor);
            cursor += 1;
        }
        let len = cursor + gaps[gaps.len() - 1];
        Ok(Self {
            gaps,
            event_positions,
            len,
        })
    }

    /// Half-open range of source positions owned by gap `j`: the zeros of
    /// the gap plus the event that closes it. The trailing gap has no closing
    /// event and may be empty.
    pub fn gap_span(&self, j: usize) -> std::ops::Range<usize> {
        let start = if j == 0 {
            0
        } else {
            self.event_positions[j - 1] + 1
        };
        let end = match self.event_positions.get(j) {
            Some(&p) => p + 1,
            None => self.len,
        };
        start..end
    }
}

/// Recurrence times of an excursion process.
pub fn recurrence_times(x: &ExcursionProcess) -> RecurrenceSequence {
    recurrence_of_bits(x.bits())
}

pub(crate) fn recurrence_of_bits(bits: &[bool]) -> RecurrenceSequence {
    let mut gaps = Vec::new();
    let mut event_positions = Vec::new();
    let mut run = 0usize;
    for (t, &b) in bits.iter().enumerate() {
        if b {
            gaps.push(run);
            event_positions.push(t);
            run = 0;
        } else {
            run += 1;
        }
    }
    gaps.push(run);
    RecurrenceSequence {
        gaps,
        event_positions,
        len: bits.len(),
    }
}
