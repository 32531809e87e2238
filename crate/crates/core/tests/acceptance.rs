//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. A FAIL
//! line does not abort the run; the process only fails when a study errors.

mod common;

use std::time::{Duration, Instant};

use regime_core::experiments::{
    bernoulli_hmm_study, changepoint_study, clustering_recovery, continuous_hmm,
    default_forecast_config, emission_distance_study, emission_recovery, forecast_vs_frozen,
    network_recovery, Summary,
};
use regime_core::simulation::{PanelSpec, SimKind};
use regime_core::{Criterion, Result};

const P1: f64 = 0.1;
const P2S: [f64; 4] = [0.05, 0.2, 0.3, 0.5];

struct Report {
    passed: usize,
    failed: usize,
}

impl Report {
    fn line(&mut self, id: usize, ok: bool, name: &str, detail: String, took: Duration) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!(
            "{verdict} [{id:>2}] {name}: {detail} ({:.1}s)",
            took.as_secs_f64()
        );
    }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn fmt3(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

fn criterion_1(r: &mut Report) -> Result<()> {
    let start = Instant::now();
    let ns = [1000, 2000, 3000];
    let cells = changepoint_study(&ns, P1, &P2S, 100, 101, Criterion::Aic)?;
    let took = start.elapsed();
    let mean = |n: usize, p2: f64| {
        cells
            .iter()
            .find(|c| c.n == n && c.p2 == p2)
            .map(|c| c.error.mean)
            .unwrap_or(f64::NAN)
    };
    let e1000 = mean(1000, 0.5);
    let e3000 = mean(3000, 0.5);
    let monotone = P2S
        .iter()
        .all(|&p2| mean(1000, p2) > mean(2000, p2) && mean(2000, p2) > mean(3000, p2));
    let fast = took <= Duration::from_secs(600);
    let ok = within(e1000, 0.060, 0.02) && within(e3000, 0.023, 0.01) && monotone && fast;
    let columns: Vec<String> = P2S
        .iter()
        .map(|&p2| format!("p2={p2}:{}", fmt3(&ns.map(|n| mean(n, p2)))))
        .collect();
    r.line(
        1,
        ok,
        "change-point error, AIC",
        format!(
            "n=1000 {e1000:.4} (0.060+-0.02), n=3000 {e3000:.4} (0.023+-0.01), monotone={monotone} [{}], under 10 min={fast}",
            columns.join(" ")
        ),
        took,
    );
    Ok(())
}

fn criterion_2(r: &mut Report) -> Result<()> {
    let start = Instant::now();
    let cells = bernoulli_hmm_study(1000, P1, &P2S, &[0.01, 0.005], 100, 202, Criterion::Aic)?;
    let took = start.elapsed();
    let target = cells
        .iter()
        .find(|c| c.p12 == 0.005 && c.p2 == 0.5)
        .expect("cell present");
    let ordered = cells
        .iter()
        .filter(|c| c.truth.mean <= c.ours.mean && c.ours.mean <= c.hmm.mean)
        .count();
    let share = ordered as f64 / cells.len() as f64;
    let ok = within(target.truth.mean, 0.0168, 0.01)
        && within(target.ours.mean, 0.0596, 0.03)
        && share >= 0.8;
    r.line(
        2,
        ok,
        "HMM-design error, AIC",
        format!(
            "truth {:.4} (0.0168+-0.01), ours {:.4} (0.0596+-0.03), em {:.4}; ordered cells {ordered}/{} (need 80%)",
            target.truth.mean,
            target.ours.mean,
            target.hmm.mean,
            cells.len()
        ),
        took,
    );
    Ok(())
}

fn criterion_3(r: &mut Report) -> Result<()> {
    let start = Instant::now();
    let reps = emission_distance_study(1000, (P1, 0.5), 0.01, 100, 303, Criterion::Aic)?;
    let took = start.elapsed();
    let ours = Summary::of(&reps.iter().map(|x| x.ours_distance).collect::<Vec<_>>());
    let em = Summary::of(&reps.iter().map(|x| x.em_distance).collect::<Vec<_>>());
    let wins = reps
        .iter()
        .filter(|x| x.ours_distance < x.em_distance)
        .count();
    let share = wins as f64 / reps.len() as f64;
    let ok = within(ours.mean, 0.041, 0.02) && within(em.mean, 0.184, 0.08) && share >= 0.95;
    r.line(
        3,
        ok,
        "emission distance, AIC",
        format!(
            "ours {:.4} (0.041+-0.02), em {:.4} (0.184+-0.08), ours closer in {wins}/{} (need 95%)",
            ours.mean,
            em.mean,
            reps.len()
        ),
        took,
    );
    Ok(())
}

fn criterion_4(r: &mut Report) -> Result<()> {
    let start = Instant::now();
    let kind = SimKind::GaussianHmm {
        var1: 1.0,
        var2: 3.0,
        p12: 0.005,
    };
    let cell = continuous_hmm(kind, 1000, 100, 404, true, Criterion::Bic)?;
    let took = start.elapsed();
    let hmm = cell.hmm.map(|s| s.mean).unwrap_or(f64::NAN);
    let ok = within(cell.ours.mean, 0.16, 0.05) && cell.ours.mean <= hmm;
    r.line(
        4,
        ok,
        "Gaussian HMM design, BIC",
        format!(
            "ours {:.4} (0.16+-0.05), baseline {hmm:.4} (ours must not exceed)",
            cell.ours.mean
        ),
        took,
    );
    Ok(())
}

fn criterion_5(r: &mut Report) -> Result<()> {
    let start = Instant::now();
    let kind = SimKind::GmmHmm {
        weights: [0.5, 0.5],
        vars: [[0.1, 0.5], [1.0, 1.5]],
        p12: 0.005,
    };
    let cell = continuous_hmm(kind, 1000, 100, 505, false, Criterion::Bic)?;
    let took = start.elapsed();
    let ok = within(cell.ours.mean, 0.143, 0.05);
    r.line(
        5,
        ok,
        "Gaussian mixture HMM design, BIC",
        format!("ours {:.4} (0.143+-0.05)", cell.ours.mean),
        took,
    );
    Ok(())
}

fn criterion_6(r: &mut Report) -> Result<()> {
    let start = Instant::now();
    let designs = [
        (
            SimKind::regime_gaussian_default(),
            2.0,
            [0.0455, 0.3173, 0.5049],
            "gaussian |u|=2",
        ),
        (
            SimKind::regime_t_default(),
            3.0,
            [0.0300, 0.0954, 0.2048],
            "t |u|=3",
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (kind, threshold, target, label)) in designs.into_iter().enumerate() {
        let rec = emission_recovery(kind, 8000, threshold, 50, 606 + i as u64, Criterion::Aic)?;
        let mut got = rec.by_true_state;
        got.sort_by(f64::total_cmp);
        let hit = got.iter().zip(&target).all(|(g, t)| within(*g, *t, 0.03));
        ok &= hit;
        parts.push(format!(
            "{label} {} vs {} ok={hit}",
            fmt3(&got),
            fmt3(&target)
        ));
    }
    r.line(
        6,
        ok,
        "three-state emission recovery, AIC, tol 0.03",
        parts.join("; "),
        start.elapsed(),
    );
    Ok(())
}

fn criterion_7(r: &mut Report) -> Result<()> {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [2, 3, 4] {
        let rec = clustering_recovery(
            SimKind::regime_t_default(),
            8000,
            m,
            Some(3),
            25,
            20,
            707,
            Criterion::Bic,
        )?;
        let hit = rec.overall.mean <= 0.10 && rec.away_from_changes.mean <= 0.05;
        ok &= hit;
        parts.push(format!(
            "m={m} overall {:.4} away {:.4} ok={hit}",
            rec.overall.mean, rec.away_from_changes.mean
        ));
    }
    r.line(
        7,
        ok,
        "ladder clustering recovery, BIC (need overall <= 0.10, away from changes <= 0.05)",
        parts.join("; "),
        start.elapsed(),
    );
    Ok(())
}

type NamedCheck = (&'static str, fn() -> common::Check);

fn checks(r: &mut Report, id: usize, name: &str, list: &[NamedCheck]) {
    let start = Instant::now();
    let mut failures = Vec::new();
    for (label, check) in list {
        if let Err(e) = check() {
            failures.push(format!("{label}: {e}"));
        }
    }
    let detail = if failures.is_empty() {
        format!("{} checks hold", list.len())
    } else {
        failures.join("; ")
    };
    r.line(id, failures.is_empty(), name, detail, start.elapsed());
}

fn criterion_10(r: &mut Report) -> Result<()> {
    let start = Instant::now();
    let runs = 20;
    let fc = forecast_vs_frozen(
        runs,
        400,
        300,
        &default_forecast_config(Criterion::Bic),
        1010,
    )?;
    let finite = fc
        .ours
        .iter()
        .all(|m| m.rmse.is_finite() && m.mae.is_finite());
    let net = network_recovery(runs, &PanelSpec::new(2, 3, 4000, 1011), Criterion::Bic)?;
    let planted = net.exact == net.runs && net.contiguous == net.runs;
    let beats = fc.wins * 10 >= runs * 6;
    let ok = finite && beats && planted;
    r.line(
        10,
        ok,
        "synthetic forecasting and network pipelines, BIC",
        format!(
            "forecast errors finite={finite}, beats frozen value in {}/{runs} (need 60%); planted groups exact {}/{} contiguous {}/{}",
            fc.wins, net.exact, net.runs, net.contiguous, net.runs
        ),
        start.elapsed(),
    );
    Ok(())
}

fn main() -> Result<()> {
    // `cargo test -- <filter>` passes arguments; listing must succeed quietly
    if std::env::args().any(|a| a == "--list") {
        return Ok(());
    }
    let mut r = Report {
        passed: 0,
        failed: 0,
    };
    criterion_1(&mut r)?;
    criterion_2(&mut r)?;
    criterion_3(&mut r)?;
    criterion_4(&mut r)?;
    criterion_5(&mut r)?;
    criterion_6(&mut r)?;
    criterion_7(&mut r)?;
    checks(
        &mut r,
        8,
        "exact oracle equivalences",
        &[
            ("viterbi", common::viterbi_is_exhaustive_argmax),
            ("forward", common::forward_is_exhaustive_sum),
            ("optimizer", common::optimizer_is_exhaustive_argmin),
            ("emission", common::emission_is_count_ratio),
        ],
    );
    checks(
        &mut r,
        9,
        "property suites",
        &[
            ("em monotone", common::prop_em_monotone),
            (
                "recurrence conservation",
                common::prop_recurrence_conservation,
            ),
            ("bin masses", common::prop_bin_masses_sum_to_one),
            (
                "factorizing joint",
                common::prop_factorizing_joint_has_no_flow,
            ),
            ("flow nonnegative", common::prop_flow_nonnegative),
            ("dissimilarity", common::prop_dissimilarity_symmetric),
            ("reorder", common::prop_reorder_nondecreasing),
        ],
    );
    criterion_10(&mut r)?;
    println!("acceptance: {} passed, {} failed", r.passed, r.failed);
    Ok(())
}
