//! `flowlab` command-line front end.

mod commands;
mod config;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "flowlab", version, about = "Investor-flow analysis laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a raw panel CSV, validate and clean it.
    Ingest(IngestArgs),
    /// Generate a synthetic panel with planted sources.
    Synth(SynthArgs),
    /// Normalize per-stock flows.
    Normalize(NormalizeArgs),
    /// Independent component analysis of aggregated flows.
    Ica(IcaArgs),
    /// Wavelet coherence between group flows.
    Coherence(CoherenceArgs),
    /// Train a return forecaster.
    Train(TrainArgs),
    /// Backtest a strategy.
    Backtest(BacktestArgs),
    /// Summarize a run directory.
    Report(ReportArgs),
    /// Run every stage from one config.
    Pipeline(PipelineArgs),
}

#[derive(Args, Clone)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    /// Also write rejected rows here.
    #[arg(long)]
    pub rejected: Option<PathBuf>,
    /// Write the panel as read, without cleaning.
    #[arg(long)]
    pub no_clean: bool,
}

#[derive(Args, Clone)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Clone)]
pub struct NormalizeArgs {
    #[arg(long, default_value = "matched", value_parser = ["raw", "matched", "zscore"])]
    pub method: String,
    #[arg(long, default_value_t = 60)]
    pub window: usize,
    /// Winsorize normalized flows at this many standard deviations.
    #[arg(long)]
    pub winsorize: Option<f64>,
    #[arg(long)]
    pub panel: PathBuf,
    /// Per-stock normalized flows.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the market-level flow matrix here.
    #[arg(long)]
    pub aggregate: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct IcaArgs {
    /// Market-level flow matrix (date,foreign,inst,indiv).
    #[arg(long)]
    pub flows: PathBuf,
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long)]
    pub rolling: bool,
    #[arg(long, default_value_t = 252)]
    pub window: usize,
    #[arg(long, default_value_t = 21)]
    pub step: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Clone)]
pub struct CoherenceArgs {
    #[arg(long)]
    pub flows: PathBuf,
    /// Group pair such as foreign:inst; repeatable.
    #[arg(long = "pair", required = true)]
    pub pairs: Vec<String>,
    #[arg(long, default_value_t = 15)]
    pub smoothing: usize,
    /// Coherence CSV; band means go to bands.csv next to it.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Clone)]
pub struct TrainArgs {
    #[arg(long, value_parser = ["lstm", "ridge", "lasso"])]
    pub model: Option<String>,
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Prediction report; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct BacktestArgs {
    #[arg(long, value_parser = ["momentum", "ica"])]
    pub strategy: String,
    #[arg(long)]
    pub panel: PathBuf,
    /// Per-stock flows (momentum) or component series (ica).
    #[arg(long)]
    pub signal: PathBuf,
    #[arg(long)]
    pub cost_bp: Option<f64>,
    #[arg(long)]
    pub decile: Option<f64>,
    #[arg(long)]
    pub lag: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report JSON; the daily series goes to `<output>.daily.csv`.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Clone)]
pub struct ReportArgs {
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Args, Clone)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "run")]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Normalize(a) => commands::normalize(&a),
        Command::Ica(a) => commands::ica(&a),
        Command::Coherence(a) => commands::coherence(&a),
        Command::Train(a) => commands::train(&a),
        Command::Backtest(a) => commands::backtest(&a),
        Command::Report(a) => report::report(&a.run).map(|text| print!("{text}")),
        Command::Pipeline(a) => commands::pipeline(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
