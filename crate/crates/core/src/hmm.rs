//! Hidden Markov model baselines with Bernoulli or Gaussian emissions.
//!
//! Decoding and likelihood evaluation run in the log / scaled domain so long
//! sequences do not underflow. State paths use labels `1..=m`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::mix_seed;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-state emission model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Emission {
    /// Probability of observing `1`.
    Bernoulli { p: Vec<f64> },
    Gaussian {
        means: Vec<f64>,
        variances: Vec<f64>,
    },
}

impl Emission {
    fn states(&self) -> usize {
        match self {
            Emission::Bernoulli { p } => p.len(),
            Emission::Gaussian { means, .. } => means.len(),
        }
    }

    fn log_prob(&self, state: usize, y: f64) -> f64 {
        match self {
            Emission::Bernoulli { p } => {
                let p = p[state];
                if y > 0.5 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            }
            Emission::Gaussian { means, variances } => {
                let v = variances[state];
                let d = y - means[state];
                -0.5 * (LN_2PI + v.ln() + d * d / v)
            }
        }
    }
}

/// Emission log-densities with per-state constants hoisted out.
enum Prepared {
    Bernoulli {
        log_one: Vec<f64>,
        log_zero: Vec<f64>,
    },
    Gaussian {
        means: Vec<f64>,
        inv_var: Vec<f64>,
        norm: Vec<f64>,
    },
}

impl Prepared {
    fn new(e: &Emission) -> Self {
        match e {
            Emission::Bernoulli { p } => Prepared::Bernoulli {
                log_one: p.iter().map(|p| p.ln()).collect(),
                log_zero: p.iter().map(|p| (1.0 - p).ln()).collect(),
            },
            Emission::Gaussian { means, variances } => Prepared::Gaussian {
                means: means.clone(),
                inv_var: variances.iter().map(|v| 1.0 / v).collect(),
                norm: variances.iter().map(|v| -0.5 * (LN_2PI + v.ln())).collect(),
            },
        }
    }

    fn log_prob(&self, state: usize, y: f64) -> f64 {
        match self {
            Prepared::Bernoulli { log_one, log_zero } => {
                if y > 0.5 {
                    log_one[state]
                } else {
                    log_zero[state]
                }
            }
            Prepared::Gaussian {
                means,
                inv_var,
                norm,
            } => {
                let d = y - means[state];
                norm[state] - 0.5 * d * d * inv_var[state]
            }
        }
    }
}

/// Initial distribution, row-stochastic transition matrix and emissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub init: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Emission,
}

impl HmmParams {
    /// Two-state model with symmetric switching probability `p12`.
    pub fn symmetric_two_state(p12: f64, emission: Emission) -> Self {
        Self {
            init: vec![0.5, 0.5],
            transition: vec![vec![1.0 - p12, p12], vec![p12, 1.0 - p12]],
            emission,
        }
    }

    pub fn states(&self) -> usize {
        self.init.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.init.len();
        if m == 0 {
            return Err(Error::InvalidParams(
                "model needs at least one state".into(),
            ));
        }
        let stochastic = |row: &[f64]| {
            row.iter().all(|p| (0.0..=1.0).contains(p))
                && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-12 * row.len().max(1) as f64 + 1e-12
        };
        if !stochastic(&self.init) {
            return Err(Error::InvalidParams(
                "initial distribution is not a probability vector".into(),
            ));
        }
        if self.transition.len() != m
            || self
                .transition
                .iter()
                .any(|r| r.len() != m || !stochastic(r))
        {
            return Err(Error::InvalidParams(
                "transition matrix is not row-stochastic".into(),
            ));
        }
        if self.emission.states() != m {
            return Err(Error::InvalidParams(
                "emission size does not match the state count".into(),
            ));
        }
        match &self.emission {
            Emission::Bernoulli { p } => {
                if p.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidParams(
                        "Bernoulli emission outside [0, 1]".into(),
                    ));
                }
            }
            Emission::Gaussian { means, variances } => {
                if variances.len() != m || variances.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::InvalidParams(
                        "Gaussian variances must be positive".into(),
                    ));
                }
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidParams("Gaussian means must be finite".into()));
                }
            }
        }
        Ok(())
    }

    fn log_emissions(&self, obs: &[f64]) -> Result<Vec<Vec<f64>>> {
        let m = self.states();
        obs.iter()
            .enumerate()
            .map(|(t, &y)| {
                let row: Vec<f64> = (0..m).map(|s| self.emission.log_prob(s, y)).collect();
                if row.iter().all(|v| *v == f64::NEG_INFINITY || v.is_nan()) {
                    Err(Error::ImpossibleObservation { index: t })
                } else {
                    Ok(row)
                }
            })
            .collect()
    }
}

/// Most probable state path. Ties go to the lower state index.
pub fn viterbi(obs: &[f64], params: &HmmParams) -> Result<Vec<usize>> {
    params.validate()?;
    if obs.is_empty() {
        return Ok(Vec::new());
    }
    let m = params.states();
    let le = params.log_emissions(obs)?;
    let log_a: Vec<Vec<f64>> = params
        .transition
        .iter()
        .map(|r| r.iter().map(|p| p.ln()).collect())
        .collect();

    let mut delta: Vec<f64> = (0..m).map(|s| params.init[s].ln() + le[0][s]).collect();
    let mut back = vec![vec![0usize; m]; obs.len()];
    for t in 1..obs.len() {
        let mut next = vec![f64::NEG_INFINITY; m];
        for j in 0..m {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..m {
                let v = delta[i] + log_a[i][j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + le[t][j];
            back[t][j] = arg;
        }
        delta = next;
    }
    let mut state = 0;
    for s in 1..m {
        if delta[s] > delta[state] {
            state = s;
        }
    }
    if delta[state] == f64::NEG_INFINITY {
        return Err(Error::ImpossibleObservation {
            index: obs.len() - 1,
        });
    }
    let mut path = vec![0usize; obs.len()];
    path[obs.len() - 1] = state;
    for t in (1..obs.len()).rev() {
        state = back[t][state];
        path[t - 1] = state;
    }
    Ok(path.into_iter().map(|s| s + 1).collect())
}

/// Smoothed state posteriors and sequence log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    /// `gamma[t][s] = P(state_t = s | obs)`.
    pub gamma: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

struct Passes {
    m: usize,
    /// Flat `n x m` posterior matrix.
    gamma: Vec<f64>,
    /// Expected transition counts summed over time, flat `m x m`.
    xi_sum: Vec<f64>,
    log_likelihood: f64,
}

fn scaled_passes(obs: &[f64], params: &HmmParams) -> Result<Passes> {
    let m = params.states();
    let n = obs.len();
    // emissions rescaled per time step by their max; offsets re-enter the likelihood
    let prepared = Prepared::new(&params.emission);
    let mut b = vec![0.0; n * m];
    let mut offset = 0.0;
    for (t, &y) in obs.iter().enumerate() {
        let row = &mut b[t * m..(t + 1) * m];
        let mut mx = f64::NEG_INFINITY;
        for (s, v) in row.iter_mut().enumerate() {
            *v = prepared.log_prob(s, y);
            if *v > mx {
                mx = *v;
            }
        }
        if mx == f64::NEG_INFINITY || mx.is_nan() {
            return Err(Error::ImpossibleObservation { index: t });
        }
        offset += mx;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
        }
    }

    let a: Vec<f64> = params.transition.iter().flatten().copied().collect();
    let mut alpha = vec![0.0; n * m];
    let mut scale = vec![0.0; n];
    for t in 0..n {
        if t == 0 {
            for s in 0..m {
                alpha[s] = params.init[s] * b[s];
            }
        } else {
            let (prev, cur) = alpha.split_at_mut(t * m);
            let prev = &prev[(t - 1) * m..];
            for j in 0..m {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += prev[i] * a[i * m + j];
                }
                cur[j] = acc * b[t * m + j];
            }
        }
        let row = &mut alpha[t * m..(t + 1) * m];
        let c: f64 = row.iter().sum();
        if !(c > 0.0) {
            return Err(Error::ImpossibleObservation { index: t });
        }
        scale[t] = c;
        for v in row.iter_mut() {
            *v /= c;
        }
    }

    let mut beta = vec![1.0; n * m];
    let mut xi_sum = vec![0.0; m * m];
    let mut tmp = vec![0.0; m];
    for t in (0..n.saturating_sub(1)).rev() {
        for j in 0..m {
            tmp[j] = b[(t + 1) * m + j] * beta[(t + 1) * m + j] / scale[t + 1];
        }
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                let w = a[i * m + j] * tmp[j];
                acc += w;
                xi_sum[i * m + j] += alpha[t * m + i] * w;
            }
            beta[t * m + i] = acc;
        }
    }

    let mut gamma = alpha;
    for t in 0..n {
        let row = &mut gamma[t * m..(t + 1) * m];
        let mut z = 0.0;
        for (s, v) in row.iter_mut().enumerate() {
            *v *= beta[t * m + s];
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }

    let log_likelihood = offset + scale.iter().map(|c| c.ln()).sum::<f64>();
    Ok(Passes {
        m,
        gamma,
        xi_sum,
        log_likelihood,
    })
}

/// Scaled forward-backward recursions.
pub fn forward_backward(obs: &[f64], params: &HmmParams) -> Result<Posteriors> {
    params.validate()?;
    if obs.is_empty() {
        return Ok(Posteriors {
            gamma: Vec::new(),
            log_likelihood: 0.0,
        });
    }
    let p = scaled_passes(obs, params)?;
    Ok(Posteriors {
        gamma: p.gamma.chunks(p.m).map(<[f64]>::to_vec).collect(),
        log_likelihood: p.log_likelihood,
    })
}

/// Log-likelihood of `obs` under `params` (forward pass only).
pub fn log_likelihood(obs: &[f64], params: &HmmParams) -> Result<f64> {
    params.validate()?;
    let m = params.states();
    let le = params.log_emissions(obs)?;
    let mut alpha: Vec<f64> = vec![0.0; m];
    let mut total = 0.0;
    for (t, row) in le.iter().enumerate() {
        // shift by the largest reachable term so that distant observations
        // do not underflow every state at once
        let logs: Vec<f64> = (0..m)
            .map(|j| {
                let prior: f64 = if t == 0 {
                    params.init[j]
                } else {
                    (0..m).map(|i| alpha[i] * params.transition[i][j]).sum()
                };
                prior.ln() + row[j]
            })
            .collect();
        let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !mx.is_finite() {
            return Err(Error::ImpossibleObservation { index: t });
        }
        let next: Vec<f64> = logs.iter().map(|v| (v - mx).exp()).collect();
        let c: f64 = next.iter().sum();
        total += mx + c.ln();
        alpha = next.into_iter().map(|v| v / c).collect();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionFamily {
    Bernoulli,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitStrategy {
    /// Independent random starts; the best final likelihood wins.
    Random {
        restarts: usize,
        seed: u64,
    },
    Given(HmmParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub family: EmissionFamily,
    pub states: usize,
    pub init: InitStrategy,
    pub max_iters: usize,
    pub tol: f64,
}

impl EmConfig {
    /// Defaults: 10 random restarts, tolerance 1e-6, at most 500 iterations.
    pub fn new(family: EmissionFamily, states: usize, seed: u64) -> Self {
        Self {
            family,
            states,
            init: InitStrategy::Random { restarts: 10, seed },
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub params: HmmParams,
    /// Log-likelihood at each E-step; the last entry belongs to `params`.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    /// Set when a Gaussian variance hit the 1e-6 floor.
    pub variance_floored: bool,
}

const VARIANCE_FLOOR: f64 = 1e-6;

fn random_stochastic(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / z).collect()
}

fn random_params(rng: &mut ChaCha8Rng, obs: &[f64], family: EmissionFamily, m: usize) -> HmmParams {
    let init = random_stochastic(rng, m);
    let transition = (0..m).map(|_| random_stochastic(rng, m)).collect();
    let emission = match family {
        EmissionFamily::Bernoulli => Emission::Bernoulli {
            p: (0..m).map(|_| rng.random_range(0.01..0.99)).collect(),
        },
        EmissionFamily::Gaussian => {
            let n = obs.len() as f64;
            let mean = obs.iter().sum::<f64>() / n;
            let var = (obs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR);
            Emission::Gaussian {
                means: (0..m)
                    .map(|_| obs[rng.random_range(0..obs.len())])
                    .collect(),
                variances: (0..m).map(|_| var * rng.random_range(0.25..2.0)).collect(),
            }
        }
    };
    HmmParams {
        init,
        transition,
        emission,
    }
}

fn em_run(obs: &[f64], start: HmmParams, max_iters: usize, tol: f64) -> Result<EmFit> {
    let m = start.states();
    let mut params = start;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut variance_floored = false;
    for iter in 0..max_iters.max(1) {
        let passes = scaled_passes(obs, &params)?;
        let ll = passes.log_likelihood;
        let improved = trace.last().map(|prev: &f64| ll - prev);
        trace.push(ll);
        if improved.is_some_and(|d| d.abs() < tol) {
            converged = true;
            break;
        }
        if iter + 1 == max_iters.max(1) {
            break;
        }
        let gamma = &passes.gamma;
        let g = |t: usize, s: usize| gamma[t * m + s];
        let mut occupancy = vec![0.0; m];
        let mut weighted = vec![0.0; m];
        for (t, &y) in obs.iter().enumerate() {
            for s in 0..m {
                occupancy[s] += g(t, s);
                weighted[s] += g(t, s) * y;
            }
        }
        let init = gamma[..m].to_vec();
        let transition: Vec<Vec<f64>> = passes
            .xi_sum
            .chunks(m)
            .map(|row| {
                let z: f64 = row.iter().sum();
                if z > 0.0 {
                    row.iter().map(|v| v / z).collect()
                } else {
                    vec![1.0 / m as f64; m]
                }
            })
            .collect();
        let emission = match &params.emission {
            Emission::Bernoulli { p } => Emission::Bernoulli {
                p: (0..m)
                    .map(|s| {
                        if occupancy[s] > 0.0 {
                            weighted[s] / occupancy[s]
                        } else {
                            p[s]
                        }
                    })
                    .collect(),
            },
            Emission::Gaussian { means, variances } => {
                let mut new_means = means.clone();
                let mut new_vars = variances.clone();
                for s in 0..m {
                    if occupancy[s] <= 0.0 {
                        continue;
                    }
                    let mu = weighted[s] / occupancy[s];
                    let var = obs
                        .iter()
                        .enumerate()
                        .map(|(t, y)| g(t, s) * (y - mu).powi(2))
                        .sum::<f64>()
                        / occupancy[s];
                    new_means[s] = mu;
                    if var < VARIANCE_FLOOR {
                        variance_floored = true;
                    }
                    new_vars[s] = var.max(VARIANCE_FLOOR);
                }
                Emission::Gaussian {
                    means: new_means,
                    variances: new_vars,
                }
            }
        };
        params = HmmParams {
            init,
            transition,
            emission,
        };
    }
    Ok(EmFit {
        params,
        loglik_trace: trace,
        converged,
        variance_floored,
    })
}

/// Baum-Welch (EM) fitting.
pub fn baum_welch(obs: &[f64], cfg: &EmConfig) -> Result<EmFit> {
    if cfg.states == 0 {
        return Err(Error::InvalidParams(
            "state count must be at least 1".into(),
        ));
    }
    if obs.is_empty() {
        return Err(Error::InsufficientData(
            "cannot fit a model to an empty sequence".into(),
        ));
    }
    match &cfg.init {
        InitStrategy::Given(p) => {
            p.validate()?;
            em_run(obs, p.clone(), cfg.max_iters, cfg.tol)
        }
        InitStrategy::Random { restarts, seed } => {
            let fits: Vec<Result<EmFit>> = (0..(*restarts).max(1) as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(*seed, r));
                    let start = random_params(&mut rng, obs, cfg.family, cfg.states);
                    em_run(obs, start, cfg.max_iters, cfg.tol)
                })
                .collect();
            let mut best: Option<EmFit> = None;
            let mut last_err = None;
            for fit in fits {
                match fit {
                    Ok(f) => {
                        let ll = *f.loglik_trace.last().expect("trace is nonempty");
                        let better = best.as_ref().is_none_or(|b| {
                            ll > *b.loglik_trace.last().expect("trace is nonempty")
                        });
                        if better {
                            best = Some(f);
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            best.ok_or_else(|| last_err.unwrap_or(Error::NoModel))
        }
    }
}

/// Fraction of mismatched labels, minimized over bijective relabelings.
pub fn decoding_error_rate(truth: &[usize], decoded: &[usize]) -> Result<f64> {
    if truth.len() != decoded.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: decoded.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let mut t_labels: Vec<usize> = truth.to_vec();
    t_labels.sort_unstable();
    t_labels.dedup();
    let mut d_labels: Vec<usize> = decoded.to_vec();
    d_labels.sort_unstable();
    d_labels.dedup();
    let k = t_labels.len().max(d_labels.len());
    if k > 8 {
        return Err(Error::InvalidInput(
            "too many distinct labels for exhaustive relabeling".into(),
        ));
    }
    // confusion[d][t]
    let mut confusion = vec![vec![0usize; k]; k];
    for (a, b) in truth.iter().zip(decoded) {
        let ti = t_labels.binary_search(a).expect("label present");
        let di = d_labels.binary_search(b).expect("label present");
        confusion[di][ti] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let hits: usize = p.iter().enumerate().map(|(d, &t)| confusion[d][t]).sum();
        best = best.max(hits);
    });
    Ok(1.0 - best as f64 / truth.len() as f64)
}

fn permute(items: &mut [usize], start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Euclidean distance between two emission vectors after sorting each.
pub fn sorted_parameter_distance(estimate: &[f64], truth: &[f64]) -> f64 {
    let mut a = estimate.to_vec();
    let mut b = truth.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}
