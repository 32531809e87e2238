use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use regime_core::aggregation::{cluster_states, encode_decode, ThresholdLadder, DEFAULT_LEVELS};
use regime_core::experiments as exp;
use regime_core::forecasting::{forecast_errors, rolling_forecast, Engine, ForecastConfig};
use regime_core::hmm::{baum_welch, viterbi, EmConfig, EmissionFamily, InitStrategy};
use regime_core::io::{self, HeatmapOrder, SCHEMA_VERSION};
use regime_core::network::{
    block_max_summarize, build_network, cluster_dissimilarity, dissimilarity, node_strengths,
    reorder_matrix, simple_binning, te_matrix, to_clock_symbols, ClockGrid, EdgeFilter,
    TeEstimator,
};
use regime_core::simulation::{generate, generate_panel, PanelSpec, SimKind, SimSpec};
use regime_core::{
    encode_excursion, encode_one_sided, optimize_theta, Criterion, LossConfig, ReturnSeries,
};

use crate::config::{pick, FileConfig};
use crate::{
    Cli, ClusterArgs, Command, DecodeArgs, DecodeOpts, Design, EncodeArgs, EngineArg, EstimatorArg,
    EvaluateArgs, FamilyArg, ForecastArgs, HmmArgs, NetworkArgs, SimKindArg, SimulateArgs,
    UsageError,
};

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            bail!(UsageError("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ctx = Ctx {
        file,
        verbose: cli.verbose,
    };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Hmm(a) => hmm(&ctx, a),
        Command::Forecast(a) => forecast(&ctx, a),
        Command::Network(a) => network(&ctx, a),
        Command::Cluster(a) => cluster(a),
    }
}

struct Ctx {
    file: FileConfig,
    verbose: bool,
}

impl Ctx {
    fn seed(&self, flag: Option<u64>) -> u64 {
        pick(flag, &self.file.seed, 0)
    }

    /// Decoder settings; `default` is the criterion used when neither the
    /// flag nor the file names one.
    fn loss(&self, o: &DecodeOpts, default: Criterion) -> Result<LossConfig> {
        let criterion = match o.criterion.clone().or_else(|| self.file.criterion.clone()) {
            Some(s) => parse_criterion(&s)?,
            None => default,
        };
        let mut cfg = LossConfig::default()
            .with_criterion(criterion)
            .with_states(pick(o.m, &self.file.m, 2))
            .with_seed(self.seed(o.seed));
        if let Some(b) = o.budget.or(self.file.budget) {
            cfg = cfg.with_budget(b);
        }
        Ok(cfg)
    }

    fn levels(&self, o: &DecodeOpts) -> Vec<f64> {
        pick(o.ladder.clone(), &self.file.ladder, DEFAULT_LEVELS.to_vec())
    }
}

fn parse_criterion(s: &str) -> Result<Criterion> {
    s.parse().map_err(|_| {
        UsageError(format!("unknown criterion {s:?}; use aic, bic or a number")).into()
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_returns(path: &Path) -> Result<io::LoadedSeries> {
    io::read_series(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn warn(message: &str) {
    eprintln!("{}", serde_json::json!({ "warning": message }));
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let seed = ctx.seed(a.seed);
    let kind = match a.kind {
        SimKindArg::BernoulliChangepoints => SimKind::BernoulliChangepoints { p1: a.p1, p2: a.p2 },
        SimKindArg::BernoulliHmm => SimKind::BernoulliHmm {
            p1: a.p1,
            p2: a.p2,
            p12: a.p12,
        },
        SimKindArg::GaussianHmm => SimKind::GaussianHmm {
            var1: a.var1,
            var2: a.var2,
            p12: a.p12,
        },
        SimKindArg::GmmHmm => {
            let v = &a.mix_vars;
            if v.len() != 4 {
                bail!(UsageError("--mix-vars takes four variances".into()));
            }
            SimKind::GmmHmm {
                weights: [a.weight_a, 1.0 - a.weight_a],
                vars: [[v[0], v[1]], [v[2], v[3]]],
                p12: a.p12,
            }
        }
        SimKindArg::RegimeGaussian => SimKind::regime_gaussian_default(),
        SimKindArg::RegimeT => SimKind::regime_t_default(),
        SimKindArg::Panel => {
            let Some(dir) = a.out else {
                bail!(UsageError("panel simulation needs --out <dir>".into()));
            };
            let spec = PanelSpec::new(a.groups, a.per_group, a.n, seed);
            for m in generate_panel(&spec)? {
                let series = ReturnSeries::new(m.timestamps, m.trades.values)?;
                io::write_series(
                    create(&dir.join(format!("{}.csv", m.name)))?,
                    &series,
                    Some(&m.trades.states),
                )?;
            }
            return Ok(());
        }
    };
    let sim = generate(&SimSpec::new(kind, a.n, seed))?;
    let series = ReturnSeries::from_values(sim.values)?;
    io::write_series(sink(a.out.as_deref())?, &series, Some(&sim.states))?;
    Ok(())
}

fn encode(a: EncodeArgs) -> Result<()> {
    let s = read_returns(&a.input)?.returns;
    let x = match (a.pi, a.lower, a.upper) {
        (Some(pi), _, _) => encode_one_sided(&s, pi)?,
        (None, Some(l), Some(u)) => encode_excursion(&s, l, u)?,
        _ => bail!(UsageError("give --pi or both --lower and --upper".into())),
    };
    io::write_bits(sink(a.out.as_deref())?, x.bits())?;
    Ok(())
}

fn decode(ctx: &Ctx, a: DecodeArgs) -> Result<()> {
    let s = read_returns(&a.input)?.returns;
    std::fs::create_dir_all(&a.out_dir)?;
    let dir = &a.out_dir;
    if let (Some(l), Some(u)) = (a.lower, a.upper) {
        let cfg = ctx.loss(&a.opts, Criterion::Aic)?;
        let x = encode_excursion(&s, l, u)?;
        let r = optimize_theta(&x, &cfg)?;
        io::write_json(
            create(&dir.join("decode.json"))?,
            &io::DecodeReport::from_result(&r, ctx.verbose),
        )?;
        io::write_labels(
            create(&dir.join("labels.csv"))?,
            "label",
            r.best_assignment.labels(),
        )?;
        if a.emit_plot_data {
            io::write_trajectory_plot(
                create(&dir.join("trajectory.csv"))?,
                s.values(),
                r.best_assignment.labels(),
            )?;
        }
        return Ok(());
    }
    let cfg = ctx.loss(&a.opts, Criterion::Bic)?;
    let ladder = ThresholdLadder::from_quantiles(&s, &ctx.levels(&a.opts))?;
    let em = encode_decode(&s, &ladder, &cfg)?;
    let clusters = cluster_states(&em, a.clusters.or(ctx.file.clusters))?;
    if clusters.degenerate {
        warn("every time point has the same emission column; a single state was returned");
    }
    io::write_emission_matrix(create(&dir.join("emission_matrix.csv"))?, &em)?;
    io::write_clusters(create(&dir.join("clusters.csv"))?, &clusters)?;
    io::write_json(create(&dir.join("tree.json"))?, &clusters)?;
    if ctx.verbose {
        io::write_json(create(&dir.join("rows.json"))?, &em.row_decodes())?;
    }
    if a.emit_plot_data {
        io::write_trajectory_plot(
            create(&dir.join("trajectory.csv"))?,
            s.values(),
            &clusters.labels,
        )?;
        io::write_cdf_plot(create(&dir.join("cdf.csv"))?, &clusters)?;
    }
    Ok(())
}

/// A CSV table assembled from string cells.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.header)?;
        for r in &self.rows {
            wr.write_record(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn f(v: f64) -> String {
    format!("{v:.4}")
}

fn criterion_name(c: Criterion) -> String {
    match c {
        Criterion::Aic => "aic".into(),
        Criterion::Bic => "bic".into(),
        Criterion::Custom(k) => k.to_string(),
    }
}

const P2S: [f64; 4] = [0.05, 0.2, 0.3, 0.5];
const P12S: [f64; 4] = [0.1, 0.05, 0.01, 0.005];

fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let reps = pick(a.reps, &ctx.file.reps, 100);
    let seed = ctx.seed(a.seed);
    let chosen = a
        .criterion
        .clone()
        .or_else(|| ctx.file.criterion.clone())
        .map(|s| parse_criterion(&s))
        .transpose()?;
    // single-threshold designs default to AIC, ladder designs to BIC
    let crit = |default: Criterion| chosen.unwrap_or(default);
    let mut t;
    match a.design {
        Design::Table1 => {
            t = Table::new(vec!["criterion", "p1", "p2", "n", "mean", "std"]);
            let crits = chosen.map_or(vec![Criterion::Aic, Criterion::Bic], |c| vec![c]);
            let ns = a.n.map_or(vec![1000, 2000, 3000], |n| vec![n]);
            for c in crits {
                for cell in exp::changepoint_study(&ns, 0.1, &P2S, reps, seed, c)? {
                    t.push(vec![
                        criterion_name(c),
                        cell.p1.to_string(),
                        cell.p2.to_string(),
                        cell.n.to_string(),
                        f(cell.error.mean),
                        f(cell.error.std),
                    ]);
                }
            }
        }
        Design::Table2 => {
            t = Table::new(vec!["p12", "p1", "p2", "truth", "hmm", "ours"]);
            let n = a.n.unwrap_or(1000);
            for c in
                exp::bernoulli_hmm_study(n, 0.1, &P2S, &P12S, reps, seed, crit(Criterion::Aic))?
            {
                t.push(vec![
                    c.p12.to_string(),
                    c.p1.to_string(),
                    c.p2.to_string(),
                    f(c.truth.mean),
                    f(c.hmm.mean),
                    f(c.ours.mean),
                ]);
            }
        }
        Design::Fig2 => {
            t = Table::new(vec![
                "p12",
                "rep",
                "ours_p1",
                "ours_p2",
                "em_p1",
                "em_p2",
                "ours_distance",
                "em_distance",
            ]);
            let n = a.n.unwrap_or(1000);
            for (i, &p12) in [0.1, 0.01].iter().enumerate() {
                let reps_out = exp::emission_distance_study(
                    n,
                    (0.1, 0.5),
                    p12,
                    reps,
                    seed.wrapping_add(i as u64),
                    crit(Criterion::Aic),
                )?;
                for (r, x) in reps_out.iter().enumerate() {
                    t.push(vec![
                        p12.to_string(),
                        r.to_string(),
                        f(x.ours[0]),
                        f(x.ours[1]),
                        f(x.em[0]),
                        f(x.em[1]),
                        f(x.ours_distance),
                        f(x.em_distance),
                    ]);
                }
            }
        }
        Design::Table3 => {
            t = Table::new(vec!["var1", "var2", "p12", "gaussian_hmm", "ours"]);
            let n = a.n.unwrap_or(1000);
            for (var1, var2) in [(0.4, 1.0), (1.0, 2.0), (1.0, 3.0)] {
                for p12 in P12S {
                    let kind = SimKind::GaussianHmm { var1, var2, p12 };
                    let c = exp::continuous_hmm(kind, n, reps, seed, true, crit(Criterion::Bic))?;
                    t.push(vec![
                        var1.to_string(),
                        var2.to_string(),
                        p12.to_string(),
                        f(c.hmm.map_or(f64::NAN, |h| h.mean)),
                        f(c.ours.mean),
                    ]);
                }
            }
        }
        Design::Table4 => {
            t = Table::new(vec![
                "var_1a", "var_1b", "var_2a", "var_2b", "w_a", "p12", "ours",
            ]);
            let n = a.n.unwrap_or(1000);
            for vars in [[[0.1, 0.5], [1.0, 1.5]], [[0.1, 0.8], [0.5, 1.5]]] {
                for w in [0.5, 0.3] {
                    for p12 in P12S {
                        let kind = SimKind::GmmHmm {
                            weights: [w, 1.0 - w],
                            vars,
                            p12,
                        };
                        let c =
                            exp::continuous_hmm(kind, n, reps, seed, false, crit(Criterion::Bic))?;
                        t.push(vec![
                            vars[0][0].to_string(),
                            vars[0][1].to_string(),
                            vars[1][0].to_string(),
                            vars[1][1].to_string(),
                            w.to_string(),
                            p12.to_string(),
                            f(c.ours.mean),
                        ]);
                    }
                }
            }
        }
        Design::AppendixB => {
            t = Table::new(vec![
                "design",
                "threshold",
                "state",
                "by_true_state",
                "sorted_decoded",
            ]);
            let n = a.n.unwrap_or(8000);
            for (kind, th) in [
                (SimKind::regime_gaussian_default(), 2.0),
                (SimKind::regime_t_default(), 3.0),
            ] {
                let name = kind.name();
                let r = exp::emission_recovery(kind, n, th, reps, seed, crit(Criterion::Aic))?;
                for s in 0..3 {
                    t.push(vec![
                        name.into(),
                        th.to_string(),
                        (s + 1).to_string(),
                        f(r.by_true_state[s]),
                        f(r.sorted_decoded[s]),
                    ]);
                }
            }
        }
        Design::Clustering => {
            t = Table::new(vec![
                "row_states",
                "overall_mean",
                "overall_std",
                "away_mean",
                "away_std",
            ]);
            let n = a.n.unwrap_or(8000);
            for m in [2, 3, 4] {
                let r = exp::clustering_recovery(
                    SimKind::regime_t_default(),
                    n,
                    m,
                    Some(3),
                    25,
                    reps,
                    seed,
                    crit(Criterion::Bic),
                )?;
                t.push(vec![
                    m.to_string(),
                    f(r.overall.mean),
                    f(r.overall.std),
                    f(r.away_from_changes.mean),
                    f(r.away_from_changes.std),
                ]);
            }
        }
        Design::Forecast => {
            t = Table::new(vec![
                "run",
                "ours_rmse",
                "frozen_rmse",
                "ours_mae",
                "frozen_mae",
            ]);
            let n = a.n.unwrap_or(400);
            let cfg = exp::default_forecast_config(crit(Criterion::Bic));
            let r = exp::forecast_vs_frozen(reps, n, n * 3 / 4, &cfg, seed)?;
            for (i, (o, b)) in r.ours.iter().zip(&r.frozen).enumerate() {
                t.push(vec![
                    i.to_string(),
                    f(o.rmse),
                    f(b.rmse),
                    f(o.mae),
                    f(b.mae),
                ]);
            }
        }
        Design::Network => {
            t = Table::new(vec!["runs", "exact", "contiguous"]);
            let spec = PanelSpec::new(2, 3, a.n.unwrap_or(4000), seed);
            let r = exp::network_recovery(reps, &spec, crit(Criterion::Bic))?;
            t.push(vec![
                r.runs.to_string(),
                r.exact.to_string(),
                r.contiguous.to_string(),
            ]);
        }
    }
    t.write(sink(a.out.as_deref())?)
}

fn hmm(ctx: &Ctx, a: HmmArgs) -> Result<()> {
    let loaded = read_returns(&a.input)?;
    let values = loaded.returns.values();
    let family = match a.family {
        FamilyArg::Gaussian => EmissionFamily::Gaussian,
        FamilyArg::Bernoulli => EmissionFamily::Bernoulli,
    };
    let seed = ctx.seed(a.seed);
    let cfg = EmConfig {
        init: InitStrategy::Random {
            restarts: a.restarts,
            seed,
        },
        ..EmConfig::new(family, a.states, seed)
    };
    let fit = baum_welch(values, &cfg)?;
    let labels = viterbi(values, &fit.params)?;
    std::fs::create_dir_all(&a.out_dir)?;
    io::write_json(create(&a.out_dir.join("hmm.json"))?, &fit)?;
    io::write_labels(create(&a.out_dir.join("labels.csv"))?, "label", &labels)?;
    Ok(())
}

fn forecast(ctx: &Ctx, a: ForecastArgs) -> Result<()> {
    let loaded = read_returns(&a.input)?;
    let values = loaded.returns.values();
    let window = pick(a.window, &ctx.file.window, 50);
    let engine = match a.engine {
        EngineArg::Nonparametric => Engine::Nonparametric {
            levels: ctx.levels(&a.opts),
            row_states: pick(a.opts.m, &ctx.file.m, 2),
            clusters: Some(a.clusters),
        },
        EngineArg::Hmm => Engine::GaussianHmm {
            states: a.states,
            restarts: 10,
        },
    };
    let mut cfg = ForecastConfig::new(window, engine);
    cfg.loss = ctx.loss(&a.opts, Criterion::Bic)?;
    cfg.seed = ctx.seed(a.opts.seed);
    let first = a.first.unwrap_or(2 * window);
    let points = rolling_forecast(values, first, None, &cfg)?;
    io::write_forecasts(sink(a.out.as_deref())?, &points)?;
    if let Some(path) = a.metrics {
        let pred: Vec<f64> = points.iter().map(|p| p.predicted).collect();
        let act: Vec<f64> = points.iter().map(|p| p.actual).collect();
        io::write_json(create(&path)?, &forecast_errors(&pred, &act)?)?;
    }
    Ok(())
}

fn node_name(path: &Path) -> String {
    path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

fn network(ctx: &Ctx, a: NetworkArgs) -> Result<()> {
    if a.inputs.len() < 2 {
        bail!(UsageError("a network needs at least two --in files".into()));
    }
    let loaded: Vec<(String, ReturnSeries)> = a
        .inputs
        .iter()
        .map(|p| Ok((node_name(p), read_returns(p)?.returns)))
        .collect::<Result<_>>()?;
    let grid = ClockGrid::covering(loaded.iter().map(|(_, s)| s.timestamps()), a.unit)?;
    let cfg = ctx.loss(&a.opts, Criterion::Bic)?;
    let levels = ctx.levels(&a.opts);
    let (series, estimator) = match a.estimator {
        EstimatorArg::LagLead => {
            let series = loaded
                .iter()
                .map(|(_, s)| {
                    let ladder = ThresholdLadder::from_quantiles(s, &levels)?;
                    let em = encode_decode(s, &ladder, &cfg)?;
                    let labels = cluster_states(&em, Some(3))?.labels;
                    let sym = to_clock_symbols(&labels, s.timestamps(), 3, &grid)?;
                    Ok(block_max_summarize(&sym, a.block)?)
                })
                .collect::<Result<Vec<_>>>()?;
            (series, TeEstimator::LagLead)
        }
        EstimatorArg::Classic => {
            let series = loaded
                .iter()
                .map(|(name, s)| {
                    let (bins, flat) = simple_binning(s, a.bins)?;
                    if flat {
                        warn(&format!(
                            "{name} is constant; every return falls in one bin"
                        ));
                    }
                    Ok(to_clock_symbols(
                        bins.symbols(),
                        s.timestamps(),
                        a.bins,
                        &grid,
                    )?)
                })
                .collect::<Result<Vec<_>>>()?;
            (
                series,
                TeEstimator::Classic {
                    lag: a.lag,
                    cap: a.pattern_cap,
                },
            )
        }
    };
    for (s, (name, _)) in series.iter().zip(&loaded) {
        if s.collisions > 0 {
            warn(&format!(
                "{name}: {} clock units held several trades; the largest state was kept",
                s.collisions
            ));
        }
    }
    let names: Vec<String> = loaded.into_iter().map(|(n, _)| n).collect();
    let te = te_matrix(names, &series, estimator)?;
    let filter = match (a.top_k, a.min_weight) {
        (Some(k), _) => EdgeFilter::TopK(k),
        (None, Some(w)) => EdgeFilter::MinWeight(w),
        (None, None) => EdgeFilter::TopK(te.len()),
    };
    let net = build_network(&te, filter);
    if net.is_empty() {
        warn("the edge filter removed every edge");
    }
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir)?;
    io::write_te_matrix(create(&dir.join("te_matrix.csv"))?, &te)?;
    io::write_edges(create(&dir.join("edges.csv"))?, &net.edges)?;
    create(&dir.join("network.dot"))?.write_all(net.to_dot().as_bytes())?;
    let (rows, cols) = reorder_matrix(&te);
    io::write_json(
        create(&dir.join("heatmap.json"))?,
        &HeatmapOrder {
            version: SCHEMA_VERSION,
            nodes: te.nodes().to_vec(),
            rows: rows.clone(),
            cols: cols.clone(),
        },
    )?;
    let (ns_in, ns_out) = node_strengths(&te);
    let mut t = Table::new(vec!["node", "ns_in", "ns_out"]);
    for ((n, i), o) in te.nodes().iter().zip(&ns_in).zip(&ns_out) {
        t.push(vec![n.clone(), i.to_string(), o.to_string()]);
    }
    t.write(create(&dir.join("strengths.csv"))?)?;
    if a.emit_plot_data {
        io::write_heatmap_plot(create(&dir.join("heatmap.csv"))?, &te, &rows, &cols)?;
    }
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let m = io::read_te_matrix(open(&a.input)?)
        .with_context(|| format!("reading {}", a.input.display()))?;
    let d = if a.precomputed {
        m.values().to_vec()
    } else {
        dissimilarity(&m)?
    };
    let (tree, order) = cluster_dissimilarity(&d)?;
    let dir: &PathBuf = &a.out_dir;
    std::fs::create_dir_all(dir)?;
    io::write_json(create(&dir.join("tree.json"))?, &tree)?;
    io::write_json(
        create(&dir.join("order.json"))?,
        &HeatmapOrder {
            version: SCHEMA_VERSION,
            nodes: m.nodes().to_vec(),
            rows: order.clone(),
            cols: order,
        },
    )?;
    if let Some(k) = a.k {
        if k == 0 || k > m.len() {
            bail!(UsageError(format!("--k must lie in 1..={}", m.len())));
        }
        let mut t = Table::new(vec!["node", "cluster"]);
        for (n, c) in m.nodes().iter().zip(tree.cut(k)) {
            t.push(vec![n.clone(), c.to_string()]);
        }
        t.write(create(&dir.join("clusters.csv"))?)?;
    }
    Ok(())
}
