use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use flowlab_core::backtest::{
    block_bootstrap_ci, run_momentum, run_timing, BacktestReport, BootstrapCI, Metrics, SkippedDate, StrategyConfig,
    StrategyKind, ANNUALIZATION,
};
use flowlab_core::ica::{fit_ica, interpret, rolling_stability, ComponentSeries, FactorCorrelationTable, IcaError, NamedSeries, RollingOptions};
use flowlab_core::panel::{
    aggregate_market_flows, clean, ingest_csv, normalize_panel, write_csv, CsvSchema, FlowMatrix, Group, Panel, StockFlows,
};
use flowlab_core::predict::{
    build_sequences, evaluate, flatten_inputs, select_lambda, train as fit_lstm, LinearKind, LinearModel, LstmModel,
    PredictionReport, SequenceSample, TrainingLog,
};
use flowlab_core::stats::{mean, sample_sd};
use flowlab_core::synth::{generate, write_truth_csv};
use flowlab_core::wavelet::{coherence as wavelet_coherence, BAND_LABELS};
use serde::{Deserialize, Serialize};

use crate::config::{parse_normalizer, parse_pair, NormalizeSection, RunConfig, TrainSection};
use crate::output::{create, sibling, with_suffix, write_json};
use crate::{BacktestArgs, CoherenceArgs, IcaArgs, IngestArgs, NormalizeArgs, PipelineArgs, SynthArgs, TrainArgs};

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).map_err(usage)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

pub fn load_panel(path: &Path) -> Result<Panel> {
    let ing = ingest_csv(path, &CsvSchema::default()).with_context(|| format!("panel: reading {}", path.display()))?;
    if !ing.rejected.is_empty() {
        eprintln!("warning: {} rows of {} rejected", ing.rejected.len(), path.display());
    }
    Ok(ing.panel)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), None)?;
    run_ingest(a, &cfg)
}

fn run_ingest(a: &IngestArgs, cfg: &RunConfig) -> Result<()> {
    let ing = ingest_csv(&a.input, &cfg.schema).context("ingest")?;
    if let Some(p) = &a.rejected {
        let mut w = create(p)?;
        writeln!(w, "line,reason")?;
        for r in &ing.rejected {
            writeln!(w, "{},\"{}\"", r.line, r.reason.replace('"', "'"))?;
        }
        w.flush()?;
    }
    let read = ing.panel.len();
    let panel = if a.no_clean {
        ing.panel
    } else {
        clean(&ing.panel, &cfg.clean).context("clean")?
    };
    ensure_parent(&a.output)?;
    write_csv(&panel, &a.output).context("ingest")?;
    eprintln!(
        "ingest: {read} rows read, {} rejected, {} rows and {} tickers written",
        ing.rejected.len(),
        panel.len(),
        panel.universe().len()
    );
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    run_synth(&a.output, a.truth.as_deref(), &cfg)
}

fn run_synth(output: &Path, truth: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let sp = generate(&cfg.synth).context("synth")?;
    ensure_parent(output)?;
    write_csv(&sp.panel, output).context("synth")?;
    if let Some(t) = truth {
        ensure_parent(t)?;
        write_truth_csv(sp.panel.calendar(), &sp.true_sources, t).context("synth")?;
    }
    eprintln!("synth: {} stocks, {} days", cfg.synth.n_stocks, cfg.synth.n_days);
    Ok(())
}

pub fn normalize(a: &NormalizeArgs) -> Result<()> {
    let panel = load_panel(&a.panel)?;
    let n = parse_normalizer(&a.method, a.window).map_err(usage)?;
    let flows = normalize_panel(&panel, n, a.winsorize).context("normalize")?;
    ensure_parent(&a.output)?;
    flows.write_csv(&a.output).context("normalize")?;
    if let Some(p) = &a.aggregate {
        ensure_parent(p)?;
        aggregate_market_flows(&panel, n, a.winsorize).context("normalize")?.write_csv(p).context("normalize")?;
    }
    eprintln!("normalize: {} stock-days ({})", flows.rows.len(), n.name());
    Ok(())
}

/// Marks an error as a usage error (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(UsageError(format!("{e:#}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub converged: bool,
    pub drift: Option<f64>,
    pub top_factor: [Option<String>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaSummary {
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Rows are groups (foreign, inst, indiv), columns components.
    pub mixing: [[f64; 3]; 3],
    pub unmixing: [[f64; 3]; 3],
    pub correlations: Option<FactorCorrelationTable>,
    pub stability: Option<Vec<StabilityRow>>,
}

fn rows(m: &nalgebra::Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

pub fn ica(a: &IcaArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    run_ica(a, &cfg)
}

fn run_ica(a: &IcaArgs, cfg: &RunConfig) -> Result<()> {
    let flows = FlowMatrix::read_csv(&a.flows).context("ica: reading flows")?;
    let opts = cfg.ica_options();
    let res = match fit_ica(&flows.values, &opts) {
        Ok(r) => r,
        Err(e @ IcaError::NotConverged(_)) => {
            eprintln!("warning: ica: {e}; keeping the last iterate");
            e.into_partial().context("ica")?
        }
        Err(e) => return Err(e).context("ica"),
    };
    let factor_path = a.factors.clone().or_else(|| cfg.input.factors.clone());
    let factors = match &factor_path {
        Some(p) => NamedSeries::read_factor_csv(p).with_context(|| format!("ica: reading factors {}", p.display()))?,
        None => Vec::new(),
    };
    let series = ComponentSeries {
        dates: flows.dates.clone(),
        values: res.components.clone(),
    };
    let correlations = if factors.is_empty() {
        None
    } else {
        Some(interpret(&series, &factors).context("ica")?)
    };
    let stability = if a.rolling {
        let ro = RollingOptions {
            window: a.window,
            step: a.step,
            ica: opts,
        };
        Some(rolling_stability(&flows, &ro, &factors).context("ica: rolling")?)
    } else {
        None
    };

    let dir = &a.output;
    std::fs::create_dir_all(dir)?;
    let mut w = create(&dir.join("mixing.csv"))?;
    writeln!(w, "group,ic1,ic2,ic3")?;
    for g in Group::ALL {
        let r = g.index();
        writeln!(w, "{},{},{},{}", g.short_name(), res.mixing[(r, 0)], res.mixing[(r, 1)], res.mixing[(r, 2)])?;
    }
    w.flush()?;
    let mut w = create(&dir.join("components.csv"))?;
    writeln!(w, "date,ic1,ic2,ic3")?;
    for (d, c) in flows.dates.iter().zip(&res.components) {
        writeln!(w, "{d},{},{},{}", c[0], c[1], c[2])?;
    }
    w.flush()?;
    if let Some(t) = &correlations {
        let mut w = create(&dir.join("correlations.csv"))?;
        writeln!(w, "component,factor,r,p_value,n")?;
        for r in &t.rows {
            writeln!(w, "ic{},{},{},{},{}", r.component + 1, r.factor, r.r, r.p_value, r.n)?;
        }
        w.flush()?;
    }
    let stability_rows = stability.as_ref().map(|s| {
        s.windows
            .iter()
            .enumerate()
            .map(|(k, wf)| StabilityRow {
                start_date: wf.start_date,
                end_date: wf.end_date,
                converged: wf.converged,
                drift: k.checked_sub(1).map(|j| s.frobenius_drift[j]),
                top_factor: wf.top_factor.clone(),
            })
            .collect::<Vec<_>>()
    });
    if let (Some(s), Some(rows_)) = (&stability, &stability_rows) {
        let mut w = create(&dir.join("stability.csv"))?;
        writeln!(w, "start_date,end_date,converged,iterations,drift,top_ic1,top_ic2,top_ic3,a11,a12,a13,a21,a22,a23,a31,a32,a33")?;
        for (wf, row) in s.windows.iter().zip(rows_) {
            let top: Vec<&str> = row.top_factor.iter().map(|t| t.as_deref().unwrap_or("")).collect();
            let m: Vec<String> = rows(&wf.mixing).iter().flatten().map(f64::to_string).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                wf.start_date,
                wf.end_date,
                wf.converged,
                wf.iterations,
                row.drift.map(|d| d.to_string()).unwrap_or_default(),
                top.join(","),
                m.join(",")
            )?;
        }
        w.flush()?;
    }
    let summary = IcaSummary {
        n_obs: flows.len(),
        converged: res.converged,
        iterations: res.iterations,
        mixing: rows(&res.mixing),
        unmixing: rows(&res.unmixing),
        correlations,
        stability: stability_rows,
    };
    write_json(&dir.join("ica.json"), &summary)?;
    eprintln!("ica: {} observations, {} iterations", flows.len(), res.iterations);
    Ok(())
}

pub fn coherence(a: &CoherenceArgs) -> Result<()> {
    let pairs = a
        .pairs
        .iter()
        .map(|p| parse_pair(p).map(|g| (p.clone(), g)))
        .collect::<Result<Vec<_>>>()
        .map_err(usage)?;
    if a.smoothing == 0 {
        return Err(usage(anyhow::anyhow!("--smoothing must be positive")));
    }
    let flows = FlowMatrix::read_csv(&a.flows).context("coherence: reading flows")?;
    let mut w = create(&a.output)?;
    writeln!(w, "pair,scale,date,coherence,in_cone")?;
    let mut bands = create(&sibling(&a.output, "bands.csv"))?;
    writeln!(bands, "pair,{}", BAND_LABELS.join(","))?;
    for (name, (g1, g2)) in pairs {
        let field = wavelet_coherence(&flows.column(g1), &flows.column(g2), a.smoothing).with_context(|| format!("coherence: {name}"))?;
        for (s, scale) in field.scales.iter().enumerate() {
            for (t, d) in flows.dates.iter().enumerate() {
                writeln!(w, "{name},{scale},{d},{},{}", field.coherence[s][t], field.in_cone[s][t])?;
            }
        }
        let b: Vec<String> = field.band_means.iter().map(f64::to_string).collect();
        writeln!(bands, "{name},{}", b.join(","))?;
    }
    w.flush()?;
    bands.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub kind: String,
    pub seed: u64,
    pub normalize: NormalizeSection,
    pub train: TrainSection,
    pub lstm: Option<LstmModel>,
    pub linear: Option<LinearModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionOutput {
    pub model: String,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub parameter_count: usize,
    pub report: PredictionReport,
    pub training: Option<TrainingLog>,
    pub lambda_curve: Option<Vec<(f64, f64)>>,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref(), a.seed)?;
    if let Some(m) = &a.model {
        cfg.train.model = m.clone();
    }
    run_train(&a.panel, &a.out, a.report.as_deref(), &cfg)
}

fn design(samples: &[SequenceSample]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (samples.iter().map(|s| flatten_inputs(&s.inputs)).collect(), samples.iter().map(|s| s.target).collect())
}

fn run_train(panel_path: &Path, out: &Path, report: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let panel = load_panel(panel_path)?;
    let normalizer = cfg.normalize.normalizer()?;
    let flows = normalize_panel(&panel, normalizer, cfg.winsorize_sigma()).context("normalize")?;
    let samples = build_sequences(&panel, &flows, cfg.train.lookback).context("train")?;
    let split = cfg.train.fit.split(&samples).context("train")?;
    let kind = cfg.train.model.as_str();
    let mut file = ModelFile {
        format: "flowlab-model-1".into(),
        kind: kind.to_string(),
        seed: cfg.seed,
        normalize: cfg.normalize.clone(),
        train: cfg.train.clone(),
        lstm: None,
        linear: None,
    };
    let (report_, parameter_count, training, lambda_curve) = match kind {
        "lstm" => {
            let model = LstmModel::new(cfg.train.arch, cfg.seed).context("train")?;
            eprintln!("train: lstm with {} parameters on {} samples", model.parameter_count(), split.train.len());
            let (model, log) = fit_lstm(model, &split, &cfg.train.fit).context("train")?;
            let r = evaluate(&model, &split.test);
            let n = model.parameter_count();
            file.lstm = Some(model);
            (r, n, Some(log), None)
        }
        "ridge" | "lasso" => {
            let lk = if kind == "ridge" { LinearKind::Ridge } else { LinearKind::Lasso };
            let (xt, yt) = design(&split.train);
            let (xv, yv) = design(&split.validation);
            let (model, curve) = select_lambda(lk, (&xt, &yt), (&xv, &yv), &cfg.train.lambda_grid).context("train")?;
            let r = evaluate(&model, &split.test);
            let n = model.coefficients.len() + 1;
            file.linear = Some(model);
            (r, n, None, Some(curve))
        }
        other => return Err(usage(anyhow::anyhow!("unknown model `{other}`"))),
    };
    write_json(out, &file)?;
    let pred = PredictionOutput {
        model: kind.to_string(),
        n_train: split.train.len(),
        n_validation: split.validation.len(),
        n_test: split.test.len(),
        parameter_count,
        report: report_,
        training,
        lambda_curve,
    };
    let report_path = report.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(out, ".report.json"));
    write_json(&report_path, &pred)?;
    eprintln!(
        "train: test rmse {:.6}, correlation {:.4}, hit rate {:.4}",
        pred.report.rmse, pred.report.pearson_correlation, pred.report.hit_rate
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestOutput {
    pub strategy: String,
    pub label: String,
    pub config: StrategyConfig,
    pub metrics: Option<Metrics>,
    pub mean_turnover: f64,
    pub n_days: usize,
    pub skipped_dates: Vec<SkippedDate>,
    pub confidence_intervals: Vec<BootstrapCI>,
    pub daily_csv: String,
}

pub fn backtest(a: &BacktestArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    run_backtest(a, &cfg)
}

fn read_component_signal(path: &Path) -> Result<BTreeMap<NaiveDate, f64>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let h = rdr.headers()?.clone();
    let di = h.iter().position(|c| c == "date").context("signal file has no date column")?;
    let ci = h.iter().position(|c| c == "ic1").context("signal file has no ic1 column")?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let d: NaiveDate = rec[di].parse().with_context(|| format!("bad date `{}`", &rec[di]))?;
        let v: f64 = rec[ci].parse().with_context(|| format!("bad value `{}`", &rec[ci]))?;
        out.insert(d, v);
    }
    Ok(out)
}

fn sharpe_of(xs: &[f64]) -> f64 {
    let sd = sample_sd(xs);
    if sd > 0.0 {
        mean(xs) / sd * ANNUALIZATION.sqrt()
    } else {
        f64::NAN
    }
}

fn run_backtest(a: &BacktestArgs, cfg: &RunConfig) -> Result<()> {
    let mut sc = cfg.backtest;
    if let Some(bp) = a.cost_bp {
        sc.cost_roundtrip = bp / 1e4;
    }
    if let Some(d) = a.decile {
        sc.decile = d;
    }
    if let Some(l) = a.lag {
        sc.signal_lag = l;
    }
    sc.kind = if a.strategy == "ica" { StrategyKind::IcaFactor } else { StrategyKind::Momentum };
    sc.validate().map_err(|e| usage(e.into()))?;
    let panel = load_panel(&a.panel)?;
    let report: BacktestReport = if sc.kind == StrategyKind::Momentum {
        let flows = StockFlows::read_csv(&a.signal).context("backtest: reading signal")?;
        run_momentum(&panel, &flows.signal(sc.flow_signal), &sc).context("backtest")?
    } else {
        let sig = read_component_signal(&a.signal).context("backtest")?;
        run_timing(&panel, &sig, &sc).context("backtest")?
    };
    let daily_path = with_suffix(&a.output, ".daily.csv");
    let mut w = create(&daily_path)?;
    report.write_daily_csv(&mut w)?;
    w.flush()?;
    let net = report.net_returns();
    let mut cis = Vec::new();
    if net.len() >= 2 * cfg.bootstrap.block_length {
        cis.push(block_bootstrap_ci("sharpe", &net, sharpe_of, &cfg.bootstrap).context("backtest: bootstrap")?);
        cis.push(block_bootstrap_ci("mean_daily_return", &net, mean, &cfg.bootstrap).context("backtest: bootstrap")?);
    } else {
        eprintln!("warning: backtest: {} days are too few for a block bootstrap", net.len());
    }
    let label = a.output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let out = BacktestOutput {
        strategy: a.strategy.clone(),
        label,
        config: sc,
        metrics: report.metrics.clone(),
        mean_turnover: report.mean_turnover,
        n_days: report.daily.len(),
        skipped_dates: report.skipped.clone(),
        confidence_intervals: cis,
        daily_csv: daily_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    write_json(&a.output, &out)?;
    if let Some(m) = &out.metrics {
        eprintln!(
            "backtest {}: {} days, sharpe {}, cumulative {:.4}",
            out.label,
            m.n_days,
            m.sharpe.map_or("undefined".into(), |s| format!("{s:.3}")),
            m.cumulative_return
        );
    }
    Ok(())
}

pub fn pipeline(a: &PipelineArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    let out = &a.output;
    std::fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), &cfg)?;
    let panel_path = out.join("panel.csv");
    let mut factors = cfg.input.factors.clone();
    match &cfg.input.panel {
        Some(p) => run_ingest(
            &IngestArgs {
                input: p.clone(),
                config: None,
                output: panel_path.clone(),
                rejected: Some(out.join("rejected.csv")),
                no_clean: false,
            },
            &cfg,
        )?,
        None => {
            let raw = out.join("synth_panel.csv");
            let truth = out.join("truth.csv");
            run_synth(&raw, Some(&truth), &cfg)?;
            run_ingest(
                &IngestArgs {
                    input: raw,
                    config: None,
                    output: panel_path.clone(),
                    rejected: None,
                    no_clean: false,
                },
                &cfg,
            )?;
            factors.get_or_insert(truth);
        }
    }

    let flows = out.join("flows.csv");
    let market = out.join("market_flows.csv");
    normalize(&NormalizeArgs {
        method: cfg.normalize.method.clone(),
        window: cfg.normalize.window,
        winsorize: cfg.winsorize_sigma(),
        panel: panel_path.clone(),
        output: flows.clone(),
        aggregate: Some(market.clone()),
    })?;
    let flows_raw = out.join("flows_raw.csv");
    normalize(&NormalizeArgs {
        method: "raw".into(),
        window: cfg.normalize.window,
        winsorize: cfg.winsorize_sigma(),
        panel: panel_path.clone(),
        output: flows_raw.clone(),
        aggregate: None,
    })?;

    let n_market = FlowMatrix::read_csv(&market)?.len();
    let rolling = cfg.ica.rolling && n_market >= cfg.ica.window + cfg.ica.step;
    if cfg.ica.rolling && !rolling {
        eprintln!("warning: ica: {n_market} dates are too few for rolling windows of {}", cfg.ica.window);
    }
    let ica_dir = out.join("ica");
    run_ica(
        &IcaArgs {
            flows: market.clone(),
            factors,
            rolling,
            window: cfg.ica.window,
            step: cfg.ica.step,
            config: None,
            seed: None,
            output: ica_dir.clone(),
        },
        &cfg,
    )?;
    coherence(&CoherenceArgs {
        flows: market.clone(),
        pairs: cfg.coherence.pairs.clone(),
        smoothing: cfg.coherence.smoothing,
        output: out.join("coherence").join("coherence.csv"),
    })?;
    run_train(&panel_path, &out.join("model.json"), Some(&out.join("prediction.json")), &cfg)?;
    let bt_dir = out.join("backtest");
    let components = ica_dir.join("components.csv");
    let runs: [(&str, &PathBuf, &str); 3] = [
        ("momentum", &flows, "momentum"),
        ("momentum", &flows_raw, "momentum_raw"),
        ("ica", &components, "ica_factor"),
    ];
    for (strategy, signal, label) in runs {
        run_backtest(
            &BacktestArgs {
                strategy: strategy.into(),
                panel: panel_path.clone(),
                signal: signal.clone(),
                cost_bp: None,
                decile: None,
                lag: None,
                config: None,
                seed: None,
                output: bt_dir.join(format!("{label}.json")),
            },
            &cfg,
        )?;
    }
    print!("{}", crate::report::report(out)?);
    Ok(())
}
