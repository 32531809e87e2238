//! Regime decoding for univariate series.
//!
//! Returns are encoded as 0-1 excursion processes over a ladder of
//! thresholds, each process is segmented by a two-level recurrence-time
//! search scored with a penalized Bernoulli likelihood, and the stacked
//! per-threshold emission estimates are clustered into hidden states. The
//! decoded states feed a pattern-matching forecaster and transfer-entropy
//! dependency networks. Hidden Markov models are included as baselines.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aggregation;
pub mod encoding;
pub mod error;
pub mod experiments;
pub mod forecasting;
pub mod hmm;
pub mod io;
pub mod linkage;
pub mod network;
pub mod segmentation;
pub mod selection;
pub mod simulation;
pub mod stats;

pub use encoding::{
    encode_excursion, encode_one_sided, log_returns, recurrence_times, ExcursionProcess,
    RecurrenceSequence, ReturnSeries, ThresholdSpec,
};
pub use error::{Error, Result};
pub use segmentation::{search_segments, second_level_code, SearchParams, StateAssignment};
pub use selection::{
    estimate_emission, loss, max_min_threshold, optimize_theta, Criterion, DecodeResult, Grid,
    LossConfig,
};
