//! One-step-ahead forecasting by historical pattern matching.
//!
//! The latest `D` observations form the training window. Every earlier
//! window of the same length is scored under a probability model, the
//! window whose log-probability is closest to the training window's wins,
//! and the increment that followed it is replayed on top of the last value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{cluster_states, encode_decode, ThresholdLadder, DEFAULT_LEVELS};
use crate::encoding::ReturnSeries;
use crate::error::{Error, Result};
use crate::hmm::{baum_welch, log_likelihood, EmConfig, EmissionFamily, HmmParams, InitStrategy};
use crate::selection::LossConfig;

/// Probabilities below this are floored before taking logs.
pub const MASS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum Engine {
    /// Gaussian HMM fitted to the training window, scored by the forward pass.
    GaussianHmm { states: usize, restarts: usize },
    /// Decoded per-state CDFs over a quantile ladder.
    Nonparametric {
        levels: Vec<f64>,
        row_states: usize,
        /// Cluster count; `None` selects it by silhouette.
        clusters: Option<usize>,
    },
}

impl Engine {
    pub fn nonparametric_default() -> Self {
        Engine::Nonparametric {
            levels: DEFAULT_LEVELS.to_vec(),
            row_states: 2,
            clusters: Some(2),
        }
    }

    pub fn gaussian_hmm_default() -> Self {
        Engine::GaussianHmm {
            states: 4,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    /// Training window length `D`.
    pub window: usize,
    pub engine: Engine,
    /// Decode settings for the nonparametric engine.
    pub loss: LossConfig,
    pub seed: u64,
}

impl ForecastConfig {
    pub fn new(window: usize, engine: Engine) -> Self {
        Self {
            window,
            engine,
            loss: LossConfig::default(),
            seed: 0,
        }
    }

    fn validate(&self, history: usize) -> Result<()> {
        if self.window < 10 {
            return Err(Error::InvalidParams(format!(
                "window length {} is below the minimum of 10",
                self.window
            )));
        }
        if history < 2 * self.window {
            return Err(Error::InsufficientData(format!(
                "history of {history} points is shorter than twice the window ({})",
                2 * self.window
            )));
        }
        Ok(())
    }
}

fn check_cdf(cdf: &[f64], thresholds: &[f64]) -> Result<()> {
    if cdf.len() != thresholds.len() {
        return Err(Error::LengthMismatch {
            left: cdf.len(),
            right: thresholds.len(),
        });
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams(
            "thresholds must be strictly ascending".into(),
        ));
    }
    if cdf.iter().any(|p| !(0.0..=1.0).contains(p)) || cdf.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::NonMonotoneCdf);
    }
    Ok(())
}

/// Probability mass of the ladder bin holding `y`.
///
/// `thresholds` ascend and `cdf[i]` is the lower-tail probability at
/// `thresholds[i]`. Bins are `(-inf, t_1], (t_1, t_2], .., (t_V, inf)`.
pub fn obs_prob_nonparam(y: f64, cdf: &[f64], thresholds: &[f64]) -> Result<f64> {
    check_cdf(cdf, thresholds)?;
    let bin = thresholds.partition_point(|&t| t < y);
    let upper = cdf.get(bin).copied().unwrap_or(1.0);
    let lower = if bin == 0 { 0.0 } else { cdf[bin - 1] };
    Ok(upper - lower)
}

/// All `V + 1` bin masses; they always sum to 1.
pub fn bin_masses(cdf: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    check_cdf(cdf, thresholds)?;
    let mut out = Vec::with_capacity(cdf.len() + 1);
    let mut prev = 0.0;
    for &c in cdf {
        out.push(c - prev);
        prev = c;
    }
    out.push(1.0 - prev);
    Ok(out)
}

/// Decoded history: a state for every time point plus per-state CDFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonparamModel {
    pub thresholds: Vec<f64>,
    /// `cdfs[state - 1]`, over `thresholds`.
    pub cdfs: Vec<Vec<f64>>,
    pub states: Vec<usize>,
    /// Set when a cluster CDF needed isotonic repair.
    pub repaired: bool,
}

impl NonparamModel {
    /// Decodes `values` over the quantile ladder at `levels`.
    pub fn fit(
        values: &[f64],
        levels: &[f64],
        clusters: Option<usize>,
        loss: &LossConfig,
    ) -> Result<Self> {
        let series = ReturnSeries::from_values(values.to_vec())?;
        let ladder = ThresholdLadder::from_quantiles(&series, levels)?;
        let em = encode_decode(&series, &ladder, loss)?;
        let c = cluster_states(&em, clusters)?;
        Ok(Self {
            thresholds: c.cdf_thresholds,
            cdfs: c.per_cluster_cdf,
            states: c.labels,
            repaired: c.cdf_repaired,
        })
    }

    /// Log-probability of each observation under its decoded state, with
    /// the number of masses that hit [`MASS_FLOOR`].
    pub fn point_log_probs(&self, values: &[f64]) -> Result<(Vec<f64>, usize)> {
        if values.len() != self.states.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: self.states.len(),
            });
        }
        let mut floored = 0;
        let mut out = Vec::with_capacity(values.len());
        for (&y, &s) in values.iter().zip(&self.states) {
            let p = obs_prob_nonparam(y, &self.cdfs[s - 1], &self.thresholds)?;
            if p < MASS_FLOOR {
                floored += 1;
            }
            out.push(p.max(MASS_FLOOR).ln());
        }
        Ok((out, floored))
    }
}

/// Log-probability of `values[range]` under the decoded model.
pub fn window_log_prob(
    model: &NonparamModel,
    values: &[f64],
    range: std::ops::Range<usize>,
) -> Result<f64> {
    let (lp, _) = model.point_log_probs(values)?;
    lp.get(range.clone())
        .map(|w| w.iter().sum())
        .ok_or_else(|| Error::InvalidInput(format!("window {range:?} is out of bounds")))
}

/// Forward log-likelihood of a window under a fitted HMM.
pub fn window_log_prob_hmm(params: &HmmParams, window: &[f64]) -> Result<f64> {
    log_likelihood(window, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub prediction: f64,
    /// Offset of the matched window, `1..=T-D`.
    pub k_star: usize,
    /// `log P(training) - log P(matched)`.
    pub gap: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Picks the window offset whose score is closest to the training score and
/// replays its next-step change. `scores[k - 1]` belongs to offset `k`.
fn forecast_from_scores(history: &[f64], train: f64, scores: &[f64]) -> Result<Forecast> {
    let t = history.len();
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        let d = (train - s).abs();
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i + 1, d));
        }
    }
    let (k, _) = best.ok_or_else(|| Error::InsufficientData("no candidate windows".into()))?;
    let gap = train - scores[k - 1];
    // 0-based: Y(T) = history[t-1], Y(T-k+1) = history[t-k], Y(T-k) = history[t-k-1]
    let step = history[t - k] - history[t - k - 1];
    Ok(Forecast {
        prediction: history[t - 1] + step * sign(gap),
        k_star: k,
        gap,
    })
}

/// Forecasts the value after `history`.
pub fn match_and_forecast(history: &[f64], cfg: &ForecastConfig) -> Result<Forecast> {
    cfg.validate(history.len())?;
    let t = history.len();
    let d = cfg.window;
    let offsets = t - d;
    match &cfg.engine {
        Engine::Nonparametric {
            levels,
            row_states,
            clusters,
        } => {
            let loss = cfg.loss.clone().with_states(*row_states);
            let model = NonparamModel::fit(history, levels, *clusters, &loss)?;
            let (lp, _) = model.point_log_probs(history)?;
            let mut prefix = vec![0.0; t + 1];
            for i in 0..t {
                prefix[i + 1] = prefix[i] + lp[i];
            }
            let window = |start: usize| prefix[start + d] - prefix[start];
            let train = window(t - d);
            let scores: Vec<f64> = (1..=offsets).map(|k| window(t - d - k)).collect();
            forecast_from_scores(history, train, &scores)
        }
        Engine::GaussianHmm { states, restarts } => {
            let train_window = &history[t - d..];
            let em = EmConfig {
                init: InitStrategy::Random {
                    restarts: *restarts,
                    seed: cfg.seed,
                },
                ..EmConfig::new(EmissionFamily::Gaussian, *states, cfg.seed)
            };
            let fit = baum_welch(train_window, &em)?;
            let train = log_likelihood(train_window, &fit.params)?;
            let scores: Vec<f64> = (1..=offsets)
                .into_par_iter()
                .map(|k| log_likelihood(&history[t - d - k..t - k], &fit.params))
                .collect::<Result<_>>()?;
            forecast_from_scores(history, train, &scores)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub rmse: f64,
    pub mae: f64,
    /// Percent; `None` when every actual was zero.
    pub mape: Option<f64>,
    /// Terms left out of MAPE because the actual was zero.
    pub mape_excluded: usize,
}

pub fn forecast_errors(predictions: &[f64], actuals: &[f64]) -> Result<ErrorMetrics> {
    if predictions.len() != actuals.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: actuals.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::InsufficientData("no forecasts to score".into()));
    }
    let n = predictions.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut pct = 0.0;
    let mut pct_n = 0usize;
    for (&p, &a) in predictions.iter().zip(actuals) {
        let e = p - a;
        sq += e * e;
        abs += e.abs();
        if a != 0.0 {
            pct += (e / a).abs();
            pct_n += 1;
        }
    }
    Ok(ErrorMetrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        mape: (pct_n > 0).then(|| 100.0 * pct / pct_n as f64),
        mape_excluded: predictions.len() - pct_n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    /// Index of the forecast target in the series.
    pub t: usize,
    pub actual: f64,
    pub predicted: f64,
    pub k_star: usize,
}

/// Rolling forecasts: for every origin `t` in `first..series.len()` the
/// preceding `history` points (or all, if `None`) predict `series[t]`.
pub fn rolling_forecast(
    series: &[f64],
    first: usize,
    history: Option<usize>,
    cfg: &ForecastConfig,
) -> Result<Vec<ForecastPoint>> {
    if first > series.len() {
        return Err(Error::InsufficientData(format!(
            "first forecast origin {first} lies past the end of a series of {} points",
            series.len()
        )));
    }
    (first..series.len())
        .into_par_iter()
        .map(|t| {
            let start = history.map_or(0, |h| t.saturating_sub(h));
            let f = match_and_forecast(&series[start..t], cfg)?;
            Ok(ForecastPoint {
                t,
                actual: series[t],
                predicted: f.prediction,
                k_star: f.k_star,
            })
        })
        .collect()
}
