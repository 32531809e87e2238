//! Replicated simulation studies.
//!
//! Every runner draws replicates from a base seed; replicate `r` uses the
//! stream `mix_seed(seed, r)` so results do not depend on thread count or
//! scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{cluster_states, encode_decode, ThresholdLadder, DEFAULT_LEVELS};
use crate::encoding::{encode_excursion, ExcursionProcess, ReturnSeries};
use crate::error::{Error, Result};
use crate::forecasting::{forecast_errors, rolling_forecast, Engine, ErrorMetrics, ForecastConfig};
use crate::hmm::{
    baum_welch, decoding_error_rate, sorted_parameter_distance, viterbi, EmConfig, Emission,
    EmissionFamily, HmmParams,
};
use crate::network::{
    block_max_summarize, cluster_dissimilarity, dissimilarity, te_matrix, to_clock_symbols,
    ClockGrid, TeEstimator, TeMatrix, DEFAULT_BLOCK,
};
use crate::selection::{max_min_threshold, optimize_theta, Criterion, LossConfig};
use crate::simulation::{
    generate, generate_panel, regime_path, PanelMember, PanelSpec, SimKind, SimSpec,
};
use crate::stats::{mean, mix_seed, quantiles, std_dev};

/// Mean and standard deviation over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        Self {
            mean: mean(values),
            std: std_dev(values),
        }
    }
}

fn replicates<T, F>(reps: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..reps as u64)
        .into_par_iter()
        .map(|r| f(mix_seed(seed, r)))
        .collect()
}

fn bits_of(values: &[f64]) -> ExcursionProcess {
    ExcursionProcess::from_bits(values.iter().map(|&v| v > 0.5).collect())
}

/// Decodes a 0-1 observation sequence and returns labels and emissions.
pub fn decode_binary(values: &[f64], cfg: &LossConfig) -> Result<(Vec<usize>, Vec<Option<f64>>)> {
    let x = bits_of(values);
    let result = optimize_theta(&x, cfg)?;
    let a = result.best_assignment;
    Ok((a.labels().to_vec(), a.emissions().to_vec()))
}

/// Symmetric two-sided decode of a real-valued series, with the threshold
/// picked from `abs_levels` (quantiles of `|y|`) by the max-min rule.
pub fn decode_two_sided(
    values: &[f64],
    abs_levels: &[f64],
    cfg: &LossConfig,
) -> Result<(f64, Vec<usize>, Vec<Option<f64>>)> {
    let series = ReturnSeries::from_values(values.to_vec())?;
    let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let mut candidates: Vec<f64> = quantiles(&abs, abs_levels)
        .into_iter()
        .filter(|u| *u > 0.0)
        .collect();
    candidates.dedup();
    let choice = max_min_threshold(&candidates, |u| {
        let x = encode_excursion(&series, -u, u)?;
        let a = optimize_theta(&x, cfg)?.best_assignment;
        Ok(a.emissions().iter().flatten().copied().collect())
    });
    let u = match choice {
        Ok(c) => c.pi,
        Err(Error::NoSeparatingThreshold) => candidates[candidates.len() / 2],
        Err(e) => return Err(e),
    };
    let x = encode_excursion(&series, -u, u)?;
    let a = optimize_theta(&x, cfg)?.best_assignment;
    Ok((u, a.labels().to_vec(), a.emissions().to_vec()))
}

/// Ladder decode at the default quantile levels followed by clustering
/// into `k` states.
pub fn decode_ladder(values: &[f64], k: Option<usize>, cfg: &LossConfig) -> Result<Vec<usize>> {
    let series = ReturnSeries::from_values(values.to_vec())?;
    let ladder = ThresholdLadder::from_quantiles(&series, &DEFAULT_LEVELS)?;
    let em = encode_decode(&series, &ladder, cfg)?;
    Ok(cluster_states(&em, k)?.labels)
}

/// Quantile levels of `|y|` tried by [`decode_two_sided`].
pub const ABS_LEVELS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangepointCell {
    pub n: usize,
    pub p1: f64,
    pub p2: f64,
    pub error: Summary,
}

/// Decoding error on the Bernoulli change-point design.
pub fn changepoint_study(
    ns: &[usize],
    p1: f64,
    p2s: &[f64],
    reps: usize,
    seed: u64,
    criterion: Criterion,
) -> Result<Vec<ChangepointCell>> {
    let mut cells = Vec::new();
    for &p2 in p2s {
        for &n in ns {
            let kind = SimKind::BernoulliChangepoints { p1, p2 };
            let cell_seed = mix_seed(seed, cells.len() as u64);
            let errs = replicates(reps, cell_seed, |s| {
                let sim = generate(&SimSpec::new(kind.clone(), n, s))?;
                let cfg = LossConfig::default().with_criterion(criterion).with_seed(s);
                let (labels, _) = decode_binary(&sim.values, &cfg)?;
                decoding_error_rate(&sim.states, &labels)
            })?;
            cells.push(ChangepointCell {
                n,
                p1,
                p2,
                error: Summary::of(&errs),
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliHmmCell {
    pub p12: f64,
    pub p1: f64,
    pub p2: f64,
    /// Viterbi under the true parameters.
    pub truth: Summary,
    /// Viterbi under Baum-Welch estimates.
    pub hmm: Summary,
    pub ours: Summary,
}

/// Decoding error on the Bernoulli HMM design.
pub fn bernoulli_hmm_study(
    n: usize,
    p1: f64,
    p2s: &[f64],
    p12s: &[f64],
    reps: usize,
    seed: u64,
    criterion: Criterion,
) -> Result<Vec<BernoulliHmmCell>> {
    let mut cells = Vec::new();
    for &p12 in p12s {
        for &p2 in p2s {
            let kind = SimKind::BernoulliHmm { p1, p2, p12 };
            let cell_seed = mix_seed(seed, cells.len() as u64);
            let rows = replicates(reps, cell_seed, |s| {
                let sim = generate(&SimSpec::new(kind.clone(), n, s))?;
                let truth_params =
                    HmmParams::symmetric_two_state(p12, Emission::Bernoulli { p: vec![p1, p2] });
                let truth =
                    decoding_error_rate(&sim.states, &viterbi(&sim.values, &truth_params)?)?;
                let fit = baum_welch(&sim.values, &EmConfig::new(EmissionFamily::Bernoulli, 2, s))?;
                let hmm = decoding_error_rate(&sim.states, &viterbi(&sim.values, &fit.params)?)?;
                let cfg = LossConfig::default().with_criterion(criterion).with_seed(s);
                let (labels, _) = decode_binary(&sim.values, &cfg)?;
                let ours = decoding_error_rate(&sim.states, &labels)?;
                Ok([truth, hmm, ours])
            })?;
            let col = |i: usize| Summary::of(&rows.iter().map(|r| r[i]).collect::<Vec<_>>());
            cells.push(BernoulliHmmCell {
                p12,
                p1,
                p2,
                truth: col(0),
                hmm: col(1),
                ours: col(2),
            });
        }
    }
    Ok(cells)
}

/// Emission estimates of one replicate of the parameter-recovery study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionDistance {
    pub ours: [f64; 2],
    pub em: [f64; 2],
    pub ours_distance: f64,
    pub em_distance: f64,
}

fn sorted_pair(mut v: Vec<f64>) -> [f64; 2] {
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => [f64::NAN, f64::NAN],
        1 => [v[0], v[0]],
        _ => [v[0], v[v.len() - 1]],
    }
}

/// Bernoulli emission recovery on the HMM design: our estimates against
/// Baum-Welch estimates, both as distances to `(p1, p2)`.
pub fn emission_distance_study(
    n: usize,
    (p1, p2): (f64, f64),
    p12: f64,
    reps: usize,
    seed: u64,
    criterion: Criterion,
) -> Result<Vec<EmissionDistance>> {
    let kind = SimKind::BernoulliHmm { p1, p2, p12 };
    let truth = [p1, p2];
    replicates(reps, seed, |s| {
        let sim = generate(&SimSpec::new(kind.clone(), n, s))?;
        let (_, emissions) = decode_binary(
            &sim.values,
            &LossConfig::default().with_criterion(criterion).with_seed(s),
        )?;
        let ours = sorted_pair(emissions.into_iter().flatten().collect());
        let fit = baum_welch(&sim.values, &EmConfig::new(EmissionFamily::Bernoulli, 2, s))?;
        let em = match &fit.params.emission {
            Emission::Bernoulli { p } => sorted_pair(p.clone()),
            Emission::Gaussian { .. } => unreachable!("Bernoulli family requested"),
        };
        Ok(EmissionDistance {
            ours,
            em,
            ours_distance: sorted_parameter_distance(&ours, &truth),
            em_distance: sorted_parameter_distance(&em, &truth),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousCell {
    pub p12: f64,
    pub kind: SimKind,
    /// Gaussian-HMM baseline (absent for designs without an EM baseline).
    pub hmm: Option<Summary>,
    pub ours: Summary,
}

/// Decoding error on a continuous two-state HMM design (Gaussian or
/// Gaussian mixture emissions).
pub fn continuous_hmm(
    kind: SimKind,
    n: usize,
    reps: usize,
    seed: u64,
    with_baseline: bool,
    criterion: Criterion,
) -> Result<ContinuousCell> {
    let p12 = match &kind {
        SimKind::GaussianHmm { p12, .. } | SimKind::GmmHmm { p12, .. } => *p12,
        _ => {
            return Err(Error::InvalidInput(
                "expected a two-state continuous HMM design".into(),
            ))
        }
    };
    let rows = replicates(reps, seed, |s| {
        let sim = generate(&SimSpec::new(kind.clone(), n, s))?;
        let cfg = LossConfig::default().with_criterion(criterion).with_seed(s);
        let labels = decode_ladder(&sim.values, Some(2), &cfg)?;
        let ours = decoding_error_rate(&sim.states, &labels)?;
        let hmm = if with_baseline {
            let fit = baum_welch(&sim.values, &EmConfig::new(EmissionFamily::Gaussian, 2, s))?;
            decoding_error_rate(&sim.states, &viterbi(&sim.values, &fit.params)?)?
        } else {
            f64::NAN
        };
        Ok([ours, hmm])
    })?;
    let col = |i: usize| Summary::of(&rows.iter().map(|r| r[i]).collect::<Vec<_>>());
    Ok(ContinuousCell {
        p12,
        kind,
        hmm: with_baseline.then(|| col(1)),
        ours: col(0),
    })
}

/// Per-state emission recovery on the three-state layout with a fixed
/// symmetric threshold `|l| = |u| = threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecovery {
    /// Mean estimate per true state, averaged over replicates.
    pub by_true_state: [f64; 3],
    /// Mean of the sorted decoded emissions.
    pub sorted_decoded: [f64; 3],
    pub error: Summary,
}

/// Per-state averages, sorted decoded emissions and decoding error of one replicate.
type RecoveryRow = ([f64; 3], [f64; 3], f64);

pub fn emission_recovery(
    kind: SimKind,
    n: usize,
    threshold: f64,
    reps: usize,
    seed: u64,
    criterion: Criterion,
) -> Result<EmissionRecovery> {
    let rows = replicates(reps, seed, |s| {
        let sim = generate(&SimSpec::new(kind.clone(), n, s))?;
        let series = ReturnSeries::from_values(sim.values.clone())?;
        let x = encode_excursion(&series, -threshold, threshold)?;
        let cfg = LossConfig::default()
            .with_states(3)
            .with_criterion(criterion)
            .with_seed(s);
        let a = optimize_theta(&x, &cfg)?.best_assignment;
        let path = a.emission_path();
        let mut by_state = [0.0; 3];
        let mut counts = [0usize; 3];
        for (&st, &p) in sim.states.iter().zip(&path) {
            by_state[st - 1] += p;
            counts[st - 1] += 1;
        }
        for i in 0..3 {
            by_state[i] /= counts[i].max(1) as f64;
        }
        let mut decoded: Vec<f64> = a.emissions().iter().flatten().copied().collect();
        decoded.sort_by(f64::total_cmp);
        while decoded.len() < 3 {
            decoded.insert(0, decoded.first().copied().unwrap_or(0.0));
        }
        let err = decoding_error_rate(&sim.states, a.labels())?;
        Ok((by_state, [decoded[0], decoded[1], decoded[2]], err))
    })?;
    let avg = |f: &dyn Fn(&RecoveryRow) -> [f64; 3]| {
        let mut acc = [0.0; 3];
        for r in &rows {
            let v = f(r);
            for i in 0..3 {
                acc[i] += v[i] / rows.len() as f64;
            }
        }
        acc
    };
    Ok(EmissionRecovery {
        by_true_state: avg(&|r| r.0),
        sorted_decoded: avg(&|r| r.1),
        error: Summary::of(&rows.iter().map(|r| r.2).collect::<Vec<_>>()),
    })
}

/// Clustering recovery on the three-state layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringRecovery {
    pub row_states: usize,
    pub overall: Summary,
    /// Error with a window around every true change point excluded.
    pub away_from_changes: Summary,
    pub chosen_k: Vec<usize>,
}

/// Full encode-decode-cluster pipeline against the known layout. `k = None`
/// selects the cluster count by silhouette.
#[allow(clippy::too_many_arguments)]
pub fn clustering_recovery(
    kind: SimKind,
    n: usize,
    row_states: usize,
    k: Option<usize>,
    margin: usize,
    reps: usize,
    seed: u64,
    criterion: Criterion,
) -> Result<ClusteringRecovery> {
    let truth = regime_path(n);
    let near_change: Vec<bool> = (0..n)
        .map(|t| (1..n).any(|c| truth[c] != truth[c - 1] && t + margin >= c && t < c + margin))
        .collect();
    let rows = replicates(reps, seed, |s| {
        let sim = generate(&SimSpec::new(kind.clone(), n, s))?;
        let cfg = LossConfig::default()
            .with_states(row_states)
            .with_criterion(criterion)
            .with_seed(s);
        let labels = decode_ladder(&sim.values, k, &cfg)?;
        let chosen_k = labels.iter().copied().max().unwrap_or(1);
        let overall = decoding_error_rate(&sim.states, &labels)?;
        let (t_far, l_far): (Vec<usize>, Vec<usize>) = sim
            .states
            .iter()
            .zip(&labels)
            .zip(&near_change)
            .filter(|(_, &near)| !near)
            .map(|((&a, &b), _)| (a, b))
            .unzip();
        let far = decoding_error_rate(&t_far, &l_far)?;
        Ok((overall, far, chosen_k))
    })?;
    Ok(ClusteringRecovery {
        row_states,
        overall: Summary::of(&rows.iter().map(|r| r.0).collect::<Vec<_>>()),
        away_from_changes: Summary::of(&rows.iter().map(|r| r.1).collect::<Vec<_>>()),
        chosen_k: rows.iter().map(|r| r.2).collect(),
    })
}

/// Pattern-matching forecasts against the frozen-last-value baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastComparison {
    pub ours: Vec<ErrorMetrics>,
    pub frozen: Vec<ErrorMetrics>,
    /// Runs where our RMSE is strictly below the baseline's.
    pub wins: usize,
}

/// Series used by [`forecast_vs_frozen`]: the cumulative sum of returns
/// from a two-state Gaussian HMM, i.e. a log-price path whose volatility
/// switches regime.
pub fn regime_price_path(n: usize, seed: u64) -> Result<Vec<f64>> {
    let kind = SimKind::GaussianHmm {
        var1: 1.0,
        var2: 9.0,
        p12: 0.01,
    };
    let sim = generate(&SimSpec::new(kind, n, seed))?;
    Ok(sim
        .values
        .iter()
        .scan(0.0, |level, r| {
            *level += r;
            Some(*level)
        })
        .collect())
}

/// Rolling one-step forecasts over the last `n - first` points of each run.
pub fn forecast_vs_frozen(
    runs: usize,
    n: usize,
    first: usize,
    cfg: &ForecastConfig,
    seed: u64,
) -> Result<ForecastComparison> {
    let rows = replicates(runs, seed, |s| {
        let series = regime_price_path(n, s)?;
        let cfg = ForecastConfig {
            seed: s,
            loss: cfg.loss.clone().with_seed(s),
            ..cfg.clone()
        };
        let points = rolling_forecast(&series, first, None, &cfg)?;
        let actual: Vec<f64> = points.iter().map(|p| p.actual).collect();
        let ours: Vec<f64> = points.iter().map(|p| p.predicted).collect();
        let frozen: Vec<f64> = points.iter().map(|p| series[p.t - 1]).collect();
        Ok((
            forecast_errors(&ours, &actual)?,
            forecast_errors(&frozen, &actual)?,
        ))
    })?;
    Ok(ForecastComparison {
        wins: rows.iter().filter(|(a, b)| a.rmse < b.rmse).count(),
        ours: rows.iter().map(|r| r.0).collect(),
        frozen: rows.iter().map(|r| r.1).collect(),
    })
}

/// Decodes every panel member, places the states on a shared one-unit
/// clock, summarizes with a block maximum and measures lag-and-lead flow.
pub fn panel_flow(panel: &[PanelMember], cfg: &LossConfig) -> Result<TeMatrix> {
    let grid = ClockGrid::covering(panel.iter().map(|m| m.timestamps.as_slice()), 1.0)?;
    let series = panel
        .par_iter()
        .map(|m| {
            let labels = decode_ladder(&m.trades.values, Some(3), cfg)?;
            let s = to_clock_symbols(&labels, &m.timestamps, 3, &grid)?;
            block_max_summarize(&s, DEFAULT_BLOCK)
        })
        .collect::<Result<Vec<_>>>()?;
    te_matrix(
        panel.iter().map(|m| m.name.clone()).collect(),
        &series,
        TeEstimator::LagLead,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecovery {
    pub runs: usize,
    /// Runs whose tree, cut at the planted group count, equals the planted partition.
    pub exact: usize,
    /// Runs whose heatmap order keeps every planted group contiguous.
    pub contiguous: usize,
}

/// Planted-group recovery of the flow network on simulated panels.
pub fn network_recovery(
    runs: usize,
    spec: &PanelSpec,
    criterion: Criterion,
) -> Result<NetworkRecovery> {
    let rows = replicates(runs, spec.seed, |s| {
        let spec = PanelSpec {
            seed: s,
            ..spec.clone()
        };
        let panel = generate_panel(&spec)?;
        let cfg = LossConfig::default().with_criterion(criterion).with_seed(s);
        let te = panel_flow(&panel, &cfg)?;
        let (tree, order) = cluster_dissimilarity(&dissimilarity(&te)?)?;
        let groups: Vec<usize> = panel.iter().map(|m| m.group).collect();
        let exact = decoding_error_rate(
            &groups.iter().map(|g| g + 1).collect::<Vec<_>>(),
            &tree.cut(spec.groups),
        )? == 0.0;
        let ordered: Vec<usize> = order.iter().map(|&i| groups[i]).collect();
        let contiguous = ordered
            .chunks(spec.per_group)
            .all(|c| c.iter().all(|&g| g == c[0]));
        Ok((exact, contiguous))
    })?;
    Ok(NetworkRecovery {
        runs,
        exact: rows.iter().filter(|r| r.0).count(),
        contiguous: rows.iter().filter(|r| r.1).count(),
    })
}

/// Forecast engine used by the nonparametric experiments.
pub fn default_forecast_config(criterion: Criterion) -> ForecastConfig {
    let mut cfg = ForecastConfig::new(50, Engine::nonparametric_default());
    cfg.loss = cfg.loss.with_criterion(criterion);
    cfg
}
