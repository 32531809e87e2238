//! Seeded generators for the benchmark designs.
//!
//! Every generator returns the observations together with the true state
//! path (labels start at 1). The same spec and seed always reproduce the
//! same output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::mix_seed;

/// Proportional change points of the Bernoulli change-point design.
pub const CHANGEPOINT_FRACTIONS: [f64; 5] = [0.1, 0.2, 0.4, 0.7, 0.9];

/// State order of the eight equal-length segments of the three-state designs.
pub const REGIME_LAYOUT: [usize; 8] = [1, 2, 3, 2, 1, 3, 2, 1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimKind {
    /// Two alternating Bernoulli states with fixed proportional change points.
    BernoulliChangepoints { p1: f64, p2: f64 },
    /// Two-state HMM with Bernoulli emissions and symmetric switching `p12`.
    BernoulliHmm { p1: f64, p2: f64, p12: f64 },
    /// Two-state HMM with zero-mean Gaussian emissions.
    GaussianHmm { var1: f64, var2: f64, p12: f64 },
    /// Two-state HMM whose emission is a two-component zero-mean Gaussian
    /// mixture; `vars[state] = [var_a, var_b]`.
    GmmHmm {
        weights: [f64; 2],
        vars: [[f64; 2]; 2],
        p12: f64,
    },
    /// Eight-segment three-state layout with Gaussian emissions.
    RegimeGaussian { sigmas: [f64; 3] },
    /// Eight-segment three-state layout with Student-t emissions.
    RegimeT { dfs: [f64; 3] },
}

impl SimKind {
    pub fn regime_gaussian_default() -> Self {
        SimKind::RegimeGaussian {
            sigmas: [1.0, 2.0, 3.0],
        }
    }

    pub fn regime_t_default() -> Self {
        SimKind::RegimeT {
            dfs: [1.0, 2.0, 5.0],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SimKind::BernoulliChangepoints { .. } => "bernoulli_changepoints",
            SimKind::BernoulliHmm { .. } => "bernoulli_hmm",
            SimKind::GaussianHmm { .. } => "gaussian_hmm",
            SimKind::GmmHmm { .. } => "gmm_hmm",
            SimKind::RegimeGaussian { .. } => "regime_gaussian",
            SimKind::RegimeT { .. } => "regime_t",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub kind: SimKind,
    pub n: usize,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(kind: SimKind, n: usize, seed: u64) -> Self {
        Self { kind, n, seed }
    }

    /// The same design under the seed of replicate `rep`.
    pub fn replicate(&self, rep: u64) -> Self {
        Self {
            seed: mix_seed(self.seed, rep),
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let prob = |p: f64, what: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "{what} = {p} is not a probability"
                )))
            }
        };
        let var = |v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "variance {v} must be positive"
                )))
            }
        };
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        match &self.kind {
            SimKind::BernoulliChangepoints { p1, p2 } => {
                prob(*p1, "p1")?;
                prob(*p2, "p2")
            }
            SimKind::BernoulliHmm { p1, p2, p12 } => {
                prob(*p1, "p1")?;
                prob(*p2, "p2")?;
                prob(*p12, "p12")
            }
            SimKind::GaussianHmm { var1, var2, p12 } => {
                var(*var1)?;
                var(*var2)?;
                prob(*p12, "p12")
            }
            SimKind::GmmHmm { weights, vars, p12 } => {
                prob(weights[0], "w_a")?;
                prob(weights[1], "w_b")?;
                if ((weights[0] + weights[1]) - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidInput("mixture weights must sum to 1".into()));
                }
                for v in vars.iter().flatten() {
                    var(*v)?;
                }
                prob(*p12, "p12")
            }
            SimKind::RegimeGaussian { sigmas } => {
                for s in sigmas {
                    var(*s)?;
                }
                Ok(())
            }
            SimKind::RegimeT { dfs } => {
                if dfs.iter().any(|d| !(*d > 0.0)) {
                    return Err(Error::InvalidInput(
                        "degrees of freedom must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Observations with their generating state path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulated {
    pub values: Vec<f64>,
    pub states: Vec<usize>,
}

/// State path of the change-point design: alternating 1, 2, 1, .. with
/// breaks at `CHANGEPOINT_FRACTIONS * n`.
pub fn changepoint_path(n: usize) -> Vec<usize> {
    let breaks = changepoint_breaks(n);
    (0..n)
        .map(|t| 1 + breaks.iter().filter(|&&b| t >= b).count() % 2)
        .collect()
}

/// 0-based indices where a new segment starts in the change-point design.
pub fn changepoint_breaks(n: usize) -> Vec<usize> {
    CHANGEPOINT_FRACTIONS
        .iter()
        .map(|f| (f * n as f64).round() as usize)
        .collect()
}

/// State path of the eight-segment layout.
pub fn regime_path(n: usize) -> Vec<usize> {
    (0..n).map(|t| REGIME_LAYOUT[(t * 8 / n).min(7)]).collect()
}

fn markov_path(rng: &mut ChaCha8Rng, n: usize, p12: f64) -> Vec<usize> {
    let mut state = if rng.random_bool(0.5) { 1 } else { 2 };
    let mut path = Vec::with_capacity(n);
    for _ in 0..n {
        path.push(state);
        if rng.random_bool(p12) {
            state = 3 - state;
        }
    }
    path
}

/// Draws one realization of `spec`.
pub fn generate(spec: &SimSpec) -> Result<Simulated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let sim = match &spec.kind {
        SimKind::BernoulliChangepoints { p1, p2 } => {
            let states = changepoint_path(n);
            let values = bernoulli_draws(&mut rng, &states, &[*p1, *p2]);
            Simulated { values, states }
        }
        SimKind::BernoulliHmm { p1, p2, p12 } => {
            let states = markov_path(&mut rng, n, *p12);
            let values = bernoulli_draws(&mut rng, &states, &[*p1, *p2]);
            Simulated { values, states }
        }
        SimKind::GaussianHmm { var1, var2, p12 } => {
            let states = markov_path(&mut rng, n, *p12);
            let sd = [var1.sqrt(), var2.sqrt()];
            let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
            let values = states
                .iter()
                .map(|&s| sd[s - 1] * std_normal.sample(&mut rng))
                .collect();
            Simulated { values, states }
        }
        SimKind::GmmHmm { weights, vars, p12 } => {
            let states = markov_path(&mut rng, n, *p12);
            let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
            let values = states
                .iter()
                .map(|&s| {
                    let comp = usize::from(!rng.random_bool(weights[0]));
                    vars[s - 1][comp].sqrt() * std_normal.sample(&mut rng)
                })
                .collect();
            Simulated { values, states }
        }
        SimKind::RegimeGaussian { sigmas } => {
            let states = regime_path(n);
            let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
            let values = states
                .iter()
                .map(|&s| sigmas[s - 1] * std_normal.sample(&mut rng))
                .collect();
            Simulated { values, states }
        }
        SimKind::RegimeT { dfs } => {
            let states = regime_path(n);
            let dists: Vec<StudentT<f64>> = dfs
                .iter()
                .map(|&d| StudentT::new(d).map_err(|e| Error::InvalidInput(e.to_string())))
                .collect::<Result<_>>()?;
            let values = states
                .iter()
                .map(|&s| dists[s - 1].sample(&mut rng))
                .collect();
            Simulated { values, states }
        }
    };
    Ok(sim)
}

/// Several instruments in groups that share a volatility regime path.
///
/// Each group runs a three-state Markov chain that stays put with
/// probability `stay`. Member `j` of a group follows the group path delayed
/// by `j * lag` clock units. Every instrument trades in a unit with
/// probability `trade_prob`, and a trade draws a Gaussian return with the
/// standard deviation of its current state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub groups: usize,
    pub per_group: usize,
    /// Clock units.
    pub n: usize,
    pub lag: usize,
    pub stay: f64,
    pub sigmas: [f64; 3],
    pub trade_prob: f64,
    pub seed: u64,
}

impl PanelSpec {
    pub fn new(groups: usize, per_group: usize, n: usize, seed: u64) -> Self {
        Self {
            groups,
            per_group,
            n,
            lag: 2,
            stay: 0.995,
            sigmas: [1.0, 2.0, 4.0],
            trade_prob: 0.8,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMember {
    pub name: String,
    pub group: usize,
    /// Clock units at which the instrument traded.
    pub timestamps: Vec<f64>,
    /// Returns and states at those trades.
    pub trades: Simulated,
}

pub fn generate_panel(spec: &PanelSpec) -> Result<Vec<PanelMember>> {
    if spec.groups == 0 || spec.per_group == 0 || spec.n == 0 {
        return Err(Error::InvalidInput(
            "panel dimensions must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.stay) || !(spec.trade_prob > 0.0 && spec.trade_prob <= 1.0) {
        return Err(Error::InvalidInput(
            "stay and trade probabilities must lie in [0, 1]".into(),
        ));
    }
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut out = Vec::with_capacity(spec.groups * spec.per_group);
    for g in 0..spec.groups {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, g as u64));
        let mut state = rng.random_range(1..=3usize);
        let mut path = Vec::with_capacity(spec.n);
        for _ in 0..spec.n {
            path.push(state);
            if !rng.random_bool(spec.stay) {
                state = 1 + (state + rng.random_range(0..2usize)) % 3;
            }
        }
        for j in 0..spec.per_group {
            let member = (spec.groups + g * spec.per_group + j) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, member));
            let delay = j * spec.lag;
            let mut timestamps = Vec::new();
            let mut values = Vec::new();
            let mut states = Vec::new();
            for t in 0..spec.n {
                if rng.random_bool(spec.trade_prob) {
                    let s = path[t.saturating_sub(delay)];
                    timestamps.push(t as f64);
                    values.push(spec.sigmas[s - 1] * std_normal.sample(&mut rng));
                    states.push(s);
                }
            }
            out.push(PanelMember {
                name: format!("g{g}m{j}"),
                group: g,
                timestamps,
                trades: Simulated { values, states },
            });
        }
    }
    Ok(out)
}

fn bernoulli_draws(rng: &mut ChaCha8Rng, states: &[usize], probs: &[f64]) -> Vec<f64> {
    states
        .iter()
        .map(|&s| {
            if rng.random_bool(probs[s - 1]) {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn changepoint_layout() {
        assert_eq!(changepoint_breaks(1000), vec![100, 200, 400, 700, 900]);
        let path = changepoint_path(1000);
        assert_eq!(crate::segmentation::count_runs(&path), 6);
        assert_eq!(path[0], 1);
        assert_eq!(path[99], 1);
        assert_eq!(path[100], 2);
        assert_eq!(path[400], 2);
        assert_eq!(path[399], 1);
        assert_eq!(path[999], 2);
    }

    #[test]
    fn regime_layout() {
        let path = regime_path(8000);
        assert_eq!(path[0], 1);
        assert_eq!(path[1000], 2);
        assert_eq!(path[2000], 3);
        assert_eq!(path[4999], 1);
        assert_eq!(path[7999], 1);
        assert_eq!(crate::segmentation::count_runs(&path), 8);
    }

    #[test]
    fn same_seed_same_output() {
        let spec = SimSpec::new(SimKind::regime_t_default(), 800, 11);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        assert_ne!(
            generate(&spec).unwrap(),
            generate(&spec.replicate(1)).unwrap()
        );
    }

    #[test]
    fn equal_emissions_are_iid() {
        let spec = SimSpec::new(
            SimKind::BernoulliChangepoints { p1: 0.3, p2: 0.3 },
            20_000,
            5,
        );
        let sim = generate(&spec).unwrap();
        let rate = |s: usize| {
            let v: Vec<f64> = sim
                .values
                .iter()
                .zip(&sim.states)
                .filter(|(_, &st)| st == s)
                .map(|(v, _)| *v)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((rate(1) - rate(2)).abs() < 0.03);
    }

    #[test]
    fn rejects_invalid_specs() {
        let bad = SimSpec::new(
            SimKind::BernoulliHmm {
                p1: 1.5,
                p2: 0.1,
                p12: 0.1,
            },
            10,
            0,
        );
        assert!(generate(&bad).is_err());
        let bad = SimSpec::new(
            SimKind::GaussianHmm {
                var1: 0.0,
                var2: 1.0,
                p12: 0.1,
            },
            10,
            0,
        );
        assert!(generate(&bad).is_err());
        let bad = SimSpec::new(
            SimKind::RegimeT {
                dfs: [1.0, -2.0, 5.0],
            },
            10,
            0,
        );
        assert!(generate(&bad).is_err());
    }

    #[test]
    fn panel_followers_lag_leader() {
        let spec = PanelSpec::new(2, 2, 2000, 3);
        let panel = generate_panel(&spec).unwrap();
        assert_eq!(panel.len(), 4);
        assert_eq!(panel[2].name, "g1m0");
        assert_eq!(panel[3].group, 1);
        assert!(panel
            .iter()
            .all(|m| m.timestamps.len() == m.trades.values.len()));
        assert_eq!(panel, generate_panel(&spec).unwrap());
    }
}
