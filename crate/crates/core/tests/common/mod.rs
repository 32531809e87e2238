//! Brute-force oracles and property checks shared by the oracle, property
//! and acceptance targets. Every check returns `Err` with a description of
//! the first counterexample.

#![allow(dead_code, clippy::needless_range_loop)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regime_core::forecasting::{bin_masses, window_log_prob_hmm};
use regime_core::hmm::{
    baum_welch, log_likelihood, viterbi, EmConfig, Emission, EmissionFamily, HmmParams,
    InitStrategy,
};
use regime_core::network::{
    dissimilarity, reorder_matrix, te_classic, te_lag_lead, SymbolSeries, TeMatrix,
};
use regime_core::selection::Grid;
use regime_core::simulation::{generate, SimKind, SimSpec};
use regime_core::{
    estimate_emission, loss, optimize_theta, recurrence_times, search_segments, Criterion,
    ExcursionProcess, LossConfig, SearchParams,
};

pub type Check = Result<(), String>;

fn random_stochastic(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn random_params(rng: &mut ChaCha8Rng, m: usize, gaussian: bool) -> HmmParams {
    let emission = if gaussian {
        Emission::Gaussian {
            means: (0..m).map(|_| rng.random_range(-2.0..2.0)).collect(),
            variances: (0..m).map(|_| rng.random_range(0.3..3.0)).collect(),
        }
    } else {
        Emission::Bernoulli {
            p: (0..m).map(|_| rng.random_range(0.05..0.95)).collect(),
        }
    };
    HmmParams {
        init: random_stochastic(rng, m),
        transition: (0..m).map(|_| random_stochastic(rng, m)).collect(),
        emission,
    }
}

fn density(e: &Emission, s: usize, y: f64) -> f64 {
    match e {
        Emission::Bernoulli { p } => {
            if y > 0.5 {
                p[s]
            } else {
                1.0 - p[s]
            }
        }
        Emission::Gaussian { means, variances } => {
            let v = variances[s];
            (-(y - means[s]).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
        }
    }
}

/// Joint probability of every state path, in odometer order.
fn all_paths(obs: &[f64], p: &HmmParams) -> Vec<(Vec<usize>, f64)> {
    let m = p.init.len();
    let n = obs.len();
    let mut out = Vec::new();
    let mut path = vec![0usize; n];
    loop {
        let mut prob = p.init[path[0]] * density(&p.emission, path[0], obs[0]);
        for t in 1..n {
            prob *= p.transition[path[t - 1]][path[t]] * density(&p.emission, path[t], obs[t]);
        }
        out.push((path.clone(), prob));
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            path[i] += 1;
            if path[i] < m {
                break;
            }
            path[i] = 0;
        }
    }
}

fn random_obs(rng: &mut ChaCha8Rng, n: usize, gaussian: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if gaussian {
                rng.random_range(-3.0..3.0)
            } else {
                f64::from(u8::from(rng.random_bool(0.4)))
            }
        })
        .collect()
}

fn bits_of(values: &[f64]) -> ExcursionProcess {
    ExcursionProcess::from_bits(values.iter().map(|&v| v > 0.5).collect())
}

/// Viterbi path attains the maximum joint probability over all paths, n <= 8.
pub fn viterbi_is_exhaustive_argmax() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..200 {
        let gaussian = case % 2 == 0;
        let m = 2 + case % 2;
        let n = 1 + case % 8;
        let p = random_params(&mut rng, m, gaussian);
        let obs = random_obs(&mut rng, n, gaussian);
        let paths = all_paths(&obs, &p);
        let best = paths.iter().map(|(_, pr)| *pr).fold(0.0, f64::max);
        let decoded: Vec<usize> = viterbi(&obs, &p)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|l| l - 1)
            .collect();
        let got = paths
            .iter()
            .find(|(path, _)| *path == decoded)
            .ok_or_else(|| format!("case {case}: decoded path out of range"))?
            .1;
        if (got - best).abs() > 1e-12 * best {
            return Err(format!(
                "case {case}: viterbi path prob {got} vs best {best}"
            ));
        }
    }
    Ok(())
}

/// Forward log-likelihood equals the log of the summed path probabilities, n <= 6.
pub fn forward_is_exhaustive_sum() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..200 {
        let gaussian = case % 2 == 1;
        let m = 2 + case % 3;
        let n = 1 + case % 6;
        let p = random_params(&mut rng, m, gaussian);
        let obs = random_obs(&mut rng, n, gaussian);
        let total: f64 = all_paths(&obs, &p).iter().map(|(_, pr)| pr).sum();
        let ll = log_likelihood(&obs, &p).map_err(|e| e.to_string())?;
        if (ll - total.ln()).abs() >= 1e-9 {
            return Err(format!("case {case}: {ll} vs {}", total.ln()));
        }
        // the forecasting engine scores windows with the same routine
        if window_log_prob_hmm(&p, &obs).map_err(|e| e.to_string())? != ll {
            return Err(format!("case {case}: window score differs"));
        }
    }
    Ok(())
}

/// Independent loss: -2 log-likelihood with clamped count ratios plus `k`
/// per run of equal labels.
pub fn oracle_loss(bits: &[bool], labels: &[usize], k: f64) -> f64 {
    let n = bits.len() as f64;
    let states = labels.iter().copied().max().unwrap_or(0);
    let mut ll = 0.0;
    for s in 1..=states {
        let idx: Vec<usize> = (0..bits.len()).filter(|&t| labels[t] == s).collect();
        if idx.is_empty() {
            continue;
        }
        let ones = idx.iter().filter(|&&t| bits[t]).count() as f64;
        let tot = idx.len() as f64;
        let p = (ones / tot).clamp(0.5 / n, 1.0 - 0.5 / n);
        ll += ones * p.ln() + (tot - ones) * (1.0 - p).ln();
    }
    let runs = 1 + labels.windows(2).filter(|w| w[0] != w[1]).count();
    -2.0 * ll + k * runs as f64
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, items[i]);
            out.push(rest);
        }
    }
    out
}

/// With a budget covering the grid, the optimizer returns a grid argmin.
pub fn optimizer_is_exhaustive_argmin() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..40 {
        let n = 60 + case * 7;
        let states = 2 + case % 2;
        let sim = generate(&SimSpec::new(
            SimKind::BernoulliChangepoints { p1: 0.1, p2: 0.6 },
            n,
            rng.random(),
        ))
        .map_err(|e| e.to_string())?;
        let x = bits_of(&sim.values);
        let grid = Grid {
            gap_candidates: vec![1, 2, 3, 5, 8],
            run_candidates: vec![1, 2, 3, 4, 6, 9],
        };
        let criterion = if case % 3 == 0 {
            Criterion::Bic
        } else {
            Criterion::Aic
        };
        let k = criterion.penalty(n);
        let cfg = LossConfig::default()
            .with_states(states)
            .with_criterion(criterion)
            .with_grid(grid.clone())
            .with_budget(10_000);
        let result = optimize_theta(&x, &cfg).map_err(|e| e.to_string())?;

        let mut best = f64::INFINITY;
        let mut argmins = Vec::new();
        for gaps in combinations(&grid.gap_candidates, states - 1) {
            for &run in &grid.run_candidates {
                let params = SearchParams::new(gaps.clone(), run).map_err(|e| e.to_string())?;
                let a = search_segments(&x, &params);
                let l = oracle_loss(x.bits(), a.labels(), k);
                if l < best - 1e-9 {
                    best = l;
                    argmins = vec![params];
                } else if (l - best).abs() <= 1e-9 {
                    argmins.push(params);
                }
            }
        }
        if (result.best_loss - best).abs() >= 1e-9 {
            return Err(format!(
                "case {case}: loss {} vs grid min {best}",
                result.best_loss
            ));
        }
        if !argmins.contains(&result.best_params) {
            return Err(format!(
                "case {case}: {:?} is not a grid argmin",
                result.best_params
            ));
        }
        if (loss(&x, &result.best_assignment, k) - best).abs() >= 1e-9 {
            return Err(format!("case {case}: library loss disagrees with oracle"));
        }
    }
    Ok(())
}

/// Emission estimates are count ratios, on arbitrary segments and on decoded states.
pub fn emission_is_count_ratio() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bits: Vec<bool> = (0..300).map(|_| rng.random_bool(0.3)).collect();
    let x = ExcursionProcess::from_bits(bits.clone());
    for _ in 0..500 {
        let a = rng.random_range(0..300);
        let b = rng.random_range(a + 1..=300);
        let seg: Vec<usize> = (a..b).collect();
        let ones = bits[a..b].iter().filter(|&&v| v).count();
        let got = estimate_emission(&x, &seg).map_err(|e| e.to_string())?;
        if got != ones as f64 / (b - a) as f64 {
            return Err(format!("segment {a}..{b}: {got}"));
        }
    }
    for seed in 0..10 {
        let kind = SimKind::BernoulliChangepoints { p1: 0.1, p2: 0.5 };
        let sim = generate(&SimSpec::new(kind, 1000, seed)).map_err(|e| e.to_string())?;
        let x = bits_of(&sim.values);
        let a = optimize_theta(&x, &LossConfig::default().with_seed(seed))
            .map_err(|e| e.to_string())?
            .best_assignment;
        for (s, e) in a.emissions().iter().enumerate() {
            let idx: Vec<usize> = (0..x.len()).filter(|&t| a.labels()[t] == s + 1).collect();
            let ok = match e {
                None => idx.is_empty(),
                Some(p) => {
                    let ones = idx.iter().filter(|&&t| x.bits()[t]).count();
                    *p == ones as f64 / idx.len() as f64
                }
            };
            if !ok {
                return Err(format!("seed {seed}: state {} emission {e:?}", s + 1));
            }
        }
    }
    Ok(())
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Check {
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

/// Gap lengths plus event count reproduce the series length; gaps decode back.
pub fn prop_recurrence_conservation() -> Check {
    run(
        10_000,
        prop::collection::vec(any::<bool>(), 1..200),
        |bits| {
            let x = ExcursionProcess::from_bits(bits.clone());
            let r = recurrence_times(&x);
            let events = bits.iter().filter(|&&b| b).count();
            prop_assert_eq!(r.gaps().len(), events + 1);
            prop_assert_eq!(r.gaps().iter().sum::<usize>() + events, bits.len());
            prop_assert_eq!(r.to_bits(), bits);
            Ok(())
        },
    )
}

/// Both transfer-entropy estimators are nonnegative on arbitrary pairs.
pub fn prop_flow_nonnegative() -> Check {
    let pairs = prop::collection::vec((1usize..=3, 1usize..=3), 2..120);
    run(1000, pairs, |pairs| {
        let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let x = SymbolSeries::new(a, 3).unwrap();
        let y = SymbolSeries::new(b, 3).unwrap();
        prop_assert!(te_lag_lead(&x, &y).unwrap() >= 0.0);
        prop_assert!(te_classic(&x, &y, 1, 1 << 16).unwrap() >= 0.0);
        Ok(())
    })
}

/// Flow vanishes when the joint of source and target is a product.
pub fn prop_factorizing_joint_has_no_flow() -> Check {
    run(1000, (1usize..=3, 1usize..=3, 4usize..40), |(a, b, len)| {
        // every source symbol is paired with every target symbol equally often
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..len {
            for j in 0..len {
                xs.push(1 + (i % a));
                ys.push(1 + (j % b));
            }
        }
        let x = SymbolSeries::new(xs, 3).unwrap();
        let y = SymbolSeries::new(ys, 3).unwrap();
        prop_assert!(te_lag_lead(&x, &y).unwrap() < 1e-12);
        prop_assert!(te_lag_lead(&y, &x).unwrap() < 1e-12);
        Ok(())
    })
}

/// Bin masses of any monotone CDF ladder are nonnegative and sum to one.
pub fn prop_bin_masses_sum_to_one() -> Check {
    run(
        1000,
        prop::collection::vec(0.0f64..1.0, 1..10),
        |mut cdf| {
            cdf.sort_by(f64::total_cmp);
            let thresholds: Vec<f64> = (0..cdf.len()).map(|i| i as f64 - 3.0).collect();
            let masses = bin_masses(&cdf, &thresholds).unwrap();
            prop_assert_eq!(masses.len(), cdf.len() + 1);
            prop_assert!(masses.iter().all(|&m| m >= 0.0));
            prop_assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            Ok(())
        },
    )
}

fn random_matrix(min: usize) -> impl Strategy<Value = TeMatrix> {
    (min..8usize, prop::collection::vec(0.0f64..1.0, 64)).prop_map(|(n, raw)| {
        let values = (0..n).map(|i| raw[i * 8..i * 8 + n].to_vec()).collect();
        let nodes = (0..n).map(|i| format!("n{i}")).collect();
        TeMatrix::new(nodes, values).unwrap()
    })
}

/// Dissimilarity is symmetric with a zero diagonal and off-diagonal range {0, 1}.
pub fn prop_dissimilarity_symmetric() -> Check {
    run(1000, random_matrix(3), |m| {
        let n = m.len();
        let d = dissimilarity(&m).unwrap();
        let mut off = Vec::new();
        for i in 0..n {
            prop_assert_eq!(d[i][i], 0.0);
            for j in 0..n {
                prop_assert_eq!(d[i][j], d[j][i]);
                if i != j {
                    prop_assert!((0.0..=1.0).contains(&d[i][j]));
                    off.push(d[i][j]);
                }
            }
        }
        let lo = off.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            prop_assert_eq!(lo, 0.0);
            prop_assert_eq!(hi, 1.0);
        }
        Ok(())
    })
}

/// Heatmap orders sort rows by outgoing and columns by incoming strength.
pub fn prop_reorder_nondecreasing() -> Check {
    run(1000, random_matrix(2), |m| {
        let (rows, cols) = reorder_matrix(&m);
        let v = m.values();
        let row_sum = |i: usize| v[i].iter().sum::<f64>();
        let col_sum = |j: usize| v.iter().map(|r| r[j]).sum::<f64>();
        prop_assert!(rows.windows(2).all(|w| row_sum(w[0]) <= row_sum(w[1])));
        prop_assert!(cols.windows(2).all(|w| col_sum(w[0]) <= col_sum(w[1])));
        Ok(())
    })
}

/// Every EM iteration keeps or raises the log-likelihood.
pub fn prop_em_monotone() -> Check {
    let inputs = (
        prop::collection::vec(-3.0f64..3.0, 20..120),
        any::<u64>(),
        2usize..4,
        any::<bool>(),
    );
    run(64, inputs, |(obs, seed, states, bernoulli)| {
        let (obs, family) = if bernoulli {
            let bits = obs.iter().map(|&v| f64::from(u8::from(v > 1.0))).collect();
            (bits, EmissionFamily::Bernoulli)
        } else {
            (obs, EmissionFamily::Gaussian)
        };
        let mut cfg = EmConfig::new(family, states, seed);
        cfg.init = InitStrategy::Random { restarts: 1, seed };
        let fit = baum_welch(&obs, &cfg).unwrap();
        for w in fit.loglik_trace.windows(2) {
            prop_assert!(
                w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0),
                "{} then {}",
                w[0],
                w[1]
            );
        }
        Ok(())
    })
}
