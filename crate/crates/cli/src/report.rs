use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use thiserror::Error;

use crate::commands::{BacktestOutput, IcaSummary, PredictionOutput};
use crate::output::{read_json, sig4, write_json};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentRow {
    pub component: String,
    pub top_factor: Option<String>,
    pub r: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IcaTable {
    pub mixing: [[f64; 3]; 3],
    pub components: Vec<ComponentRow>,
    pub windows: usize,
    pub max_drift: Option<f64>,
    pub median_drift: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandRow {
    pub pair: String,
    pub bands: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyRow {
    pub label: String,
    pub strategy: String,
    pub n_days: usize,
    pub sharpe: Option<f64>,
    pub sharpe_ci: Option<[f64; 2]>,
    pub cumulative_return: Option<f64>,
    pub max_drawdown: Option<f64>,
    pub calmar: Option<f64>,
    pub hit_rate: Option<f64>,
    pub mean_turnover: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryJson {
    pub ica: IcaTable,
    pub coherence: BandTable,
    pub prediction: PredictionOutput,
    pub strategies: Vec<StrategyRow>,
    pub checks: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandTable {
    pub labels: Vec<String>,
    pub rows: Vec<BandRow>,
}

fn require(dir: &Path, rel: &str) -> Result<std::path::PathBuf> {
    let p = dir.join(rel);
    if p.exists() {
        Ok(p)
    } else {
        Err(ReportError::MissingArtifact(rel.to_string()).into())
    }
}

fn read_bands(path: &Path) -> Result<BandTable> {
    let mut rdr = csv::Reader::from_path(path)?;
    let labels = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bands = rec.iter().skip(1).map(|v| v.parse::<f64>()).collect::<Result<Vec<_>, _>>()?;
        rows.push(BandRow {
            pair: rec[0].to_string(),
            bands,
        });
    }
    Ok(BandTable { labels, rows })
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    Some(flowlab_core::stats::percentile_sorted(&xs, 0.5))
}

fn opt(x: Option<f64>) -> String {
    x.map_or("-".into(), sig4)
}

/// Collects the module outputs of a run directory into `summary.json` and
/// `summary.txt` there.
pub fn report(dir: &Path) -> Result<String> {
    let ica: IcaSummary = read_json(&require(dir, "ica/ica.json")?)?;
    let bands = read_bands(&require(dir, "coherence/bands.csv")?).context("reading coherence bands")?;
    let prediction: PredictionOutput = read_json(&require(dir, "prediction.json")?)?;
    let bt_dir = require(dir, "backtest")?;
    let mut files: Vec<_> = std::fs::read_dir(&bt_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(ReportError::MissingArtifact("backtest/*.json".into()).into());
    }
    let mut strategies = Vec::new();
    for f in &files {
        let b: BacktestOutput = read_json(f)?;
        let m = b.metrics.as_ref();
        strategies.push(StrategyRow {
            label: b.label.clone(),
            strategy: b.strategy.clone(),
            n_days: b.n_days,
            sharpe: m.and_then(|m| m.sharpe),
            sharpe_ci: b.confidence_intervals.iter().find(|c| c.statistic == "sharpe").map(|c| [c.lower, c.upper]),
            cumulative_return: m.map(|m| m.cumulative_return),
            max_drawdown: m.map(|m| m.max_drawdown),
            calmar: m.and_then(|m| m.calmar),
            hit_rate: m.map(|m| m.hit_rate),
            mean_turnover: b.mean_turnover,
        });
    }

    let components = (0..3)
        .map(|k| {
            let top = ica.correlations.as_ref().and_then(|t| t.top_factor[k].clone());
            let row = top.as_ref().and_then(|f| ica.correlations.as_ref().and_then(|t| t.get(k, f)));
            ComponentRow {
                component: format!("ic{}", k + 1),
                top_factor: top.clone(),
                r: row.map(|r| r.r),
                p_value: row.map(|r| r.p_value),
            }
        })
        .collect();
    let drifts: Vec<f64> = ica.stability.iter().flatten().filter_map(|w| w.drift).collect();
    let ica_table = IcaTable {
        mixing: ica.mixing,
        components,
        windows: ica.stability.as_ref().map_or(0, Vec::len),
        max_drift: drifts.iter().cloned().reduce(f64::max),
        median_drift: median(drifts),
    };

    let sharpe = |label: &str| strategies.iter().find(|s| s.label == label).and_then(|s| s.sharpe);
    let mut checks = BTreeMap::new();
    if let (Some(m), Some(i)) = (sharpe("momentum"), sharpe("ica_factor")) {
        checks.insert("momentum_sharpe_exceeds_ica_factor".to_string(), m > i);
    }
    if let (Some(m), Some(r)) = (sharpe("momentum"), sharpe("momentum_raw")) {
        checks.insert("momentum_sharpe_exceeds_momentum_raw".to_string(), m > r);
    }
    let json = SummaryJson {
        ica: ica_table,
        coherence: bands,
        prediction,
        strategies,
        checks,
    };
    let text = render(&json);
    write_json(&dir.join("summary.json"), &json)?;
    std::fs::write(dir.join("summary.txt"), &text)?;
    Ok(text)
}

fn render(s: &SummaryJson) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "== ICA components ==");
    let _ = writeln!(t, "{:<6} {:<14} {:>10} {:>10}", "comp", "top factor", "r", "p");
    for c in &s.ica.components {
        let _ = writeln!(t, "{:<6} {:<14} {:>10} {:>10}", c.component, c.top_factor.as_deref().unwrap_or("-"), opt(c.r), opt(c.p_value));
    }
    let _ = writeln!(t, "mixing (rows foreign, inst, indiv):");
    for row in &s.ica.mixing {
        let _ = writeln!(t, "  {:>10} {:>10} {:>10}", sig4(row[0]), sig4(row[1]), sig4(row[2]));
    }
    let _ = writeln!(
        t,
        "rolling windows: {}, median drift {}, max drift {}",
        s.ica.windows,
        opt(s.ica.median_drift),
        opt(s.ica.max_drift)
    );

    let _ = writeln!(t, "\n== Coherence band means ==");
    let _ = write!(t, "{:<16}", "pair");
    for l in &s.coherence.labels {
        let _ = write!(t, " {l:>8}");
    }
    let _ = writeln!(t);
    for r in &s.coherence.rows {
        let _ = write!(t, "{:<16}", r.pair);
        for b in &r.bands {
            let _ = write!(t, " {:>8}", sig4(*b));
        }
        let _ = writeln!(t);
    }

    let p = &s.prediction;
    let _ = writeln!(t, "\n== Prediction ({}, {} parameters, {} test samples) ==", p.model, p.parameter_count, p.n_test);
    let r = &p.report;
    let _ = writeln!(t, "rmse {}  correlation {}{}", sig4(r.rmse), sig4(r.pearson_correlation), if r.degenerate { " (degenerate)" } else { "" });
    let _ = writeln!(t, "hit rate {}  information ratio {}", sig4(r.hit_rate), sig4(r.information_ratio));
    let _ = writeln!(t, "prediction sd {}  target sd {}", sig4(r.prediction_std), sig4(r.target_std));

    let _ = writeln!(t, "\n== Strategies (net of costs) ==");
    let _ = writeln!(
        t,
        "{:<14} {:>6} {:>9} {:>21} {:>10} {:>9} {:>9} {:>8} {:>8}",
        "label", "days", "sharpe", "sharpe 95% ci", "total", "mdd", "calmar", "hit", "turn"
    );
    for x in &s.strategies {
        let ci = x.sharpe_ci.map_or("-".into(), |c| format!("[{}, {}]", sig4(c[0]), sig4(c[1])));
        let _ = writeln!(
            t,
            "{:<14} {:>6} {:>9} {:>21} {:>10} {:>9} {:>9} {:>8} {:>8}",
            x.label,
            x.n_days,
            opt(x.sharpe),
            ci,
            opt(x.cumulative_return),
            opt(x.max_drawdown),
            opt(x.calmar),
            opt(x.hit_rate),
            sig4(x.mean_turnover)
        );
    }
    if !s.checks.is_empty() {
        let _ = writeln!(t, "\n== Checks ==");
        for (k, v) in &s.checks {
            let _ = writeln!(t, "{k}: {v}");
        }
    }
    t
}
