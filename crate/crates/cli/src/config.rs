use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flowlab_core::backtest::{BootstrapOptions, StrategyConfig};
use flowlab_core::filters::Normalizer;
use flowlab_core::panel::{CleaningConfig, CsvSchema, FlowSignal, Group};
use flowlab_core::predict::{ArchConfig, TrainConfig};
use flowlab_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "FLOWLAB_SEED";

/// One file drives every subcommand. All sections are optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds every random component (synth, initialization, dropout,
    /// shuffling, ICA start, bootstrap).
    pub seed: u64,
    pub input: InputSection,
    pub schema: CsvSchema,
    pub synth: SynthConfig,
    pub clean: CleaningConfig,
    pub normalize: NormalizeSection,
    pub ica: IcaSection,
    pub coherence: CoherenceSection,
    pub train: TrainSection,
    pub backtest: StrategyConfig,
    pub bootstrap: BootstrapOptions,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// Panel CSV; the pipeline generates a synthetic panel when absent.
    pub panel: Option<PathBuf>,
    /// Factor CSV for component interpretation.
    pub factors: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizeSection {
    pub method: String,
    pub window: usize,
    pub winsorize: bool,
    pub flow_signal: FlowSignal,
}

impl Default for NormalizeSection {
    fn default() -> Self {
        NormalizeSection {
            method: "matched".into(),
            window: Normalizer::DEFAULT_ZSCORE_WINDOW,
            winsorize: true,
            flow_signal: FlowSignal::Mean,
        }
    }
}

impl NormalizeSection {
    pub fn normalizer(&self) -> Result<Normalizer> {
        parse_normalizer(&self.method, self.window)
    }
}

pub fn parse_normalizer(method: &str, window: usize) -> Result<Normalizer> {
    match Normalizer::parse(method) {
        Some(Normalizer::ZScore { .. }) => Ok(Normalizer::ZScore { window }),
        Some(n) => Ok(n),
        None => bail!("unknown normalization method `{method}` (expected raw, matched or zscore)"),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcaSection {
    pub max_iter: usize,
    pub tol: f64,
    pub rolling: bool,
    pub window: usize,
    pub step: usize,
}

impl Default for IcaSection {
    fn default() -> Self {
        IcaSection {
            max_iter: 1000,
            tol: 1e-6,
            rolling: true,
            window: 252,
            step: 21,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceSection {
    pub smoothing: usize,
    pub pairs: Vec<String>,
}

impl Default for CoherenceSection {
    fn default() -> Self {
        CoherenceSection {
            smoothing: 15,
            pairs: vec!["foreign:inst".into(), "foreign:indiv".into(), "inst:indiv".into()],
        }
    }
}

pub fn parse_pair(s: &str) -> Result<(Group, Group)> {
    let (a, b) = s.split_once(':').with_context(|| format!("pair `{s}` must look like foreign:inst"))?;
    match (Group::parse(a), Group::parse(b)) {
        (Some(a), Some(b)) if a != b => Ok((a, b)),
        _ => bail!("pair `{s}` must name two different groups among foreign, inst, indiv"),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub model: String,
    pub lookback: usize,
    pub lambda_grid: Vec<f64>,
    pub arch: ArchConfig,
    pub fit: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            model: "lstm".into(),
            lookback: 10,
            lambda_grid: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0],
            arch: ArchConfig::default(),
            fit: TrainConfig::default(),
        }
    }
}

pub const MODELS: [&str; 3] = ["lstm", "ridge", "lasso"];

impl RunConfig {
    /// Reads `path` (defaults when `None`), applies the seed override from
    /// the environment, resolves input paths against the file's directory
    /// and validates every section.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                let base = p.parent().unwrap_or(Path::new("."));
                for slot in [&mut cfg.input.panel, &mut cfg.input.factors] {
                    if let Some(f) = slot.as_mut() {
                        if f.is_relative() {
                            *f = base.join(&*f);
                        }
                    }
                }
                cfg
            }
            None => RunConfig::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v.trim().parse().with_context(|| format!("{SEED_ENV}=`{v}` is not an unsigned integer"))?;
        }
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.fit.seed = seed;
        self.bootstrap.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("input.panel", &self.input.panel), ("input.factors", &self.input.factors)] {
            if let Some(p) = p {
                if !p.is_file() {
                    bail!("{name}: {} does not exist", p.display());
                }
            }
        }
        self.synth.validate().context("synth")?;
        self.clean.validate().context("clean")?;
        self.normalize.normalizer().context("normalize")?;
        if self.normalize.window < 2 {
            bail!("normalize: window must be at least 2");
        }
        if self.ica.max_iter == 0 || !(self.ica.tol > 0.0) {
            bail!("ica: max_iter and tol must be positive");
        }
        if self.ica.rolling && (self.ica.window < 30 || self.ica.step == 0) {
            bail!("ica: rolling window must be at least 30 and step positive");
        }
        if self.coherence.smoothing == 0 {
            bail!("coherence: smoothing must be positive");
        }
        for p in &self.coherence.pairs {
            parse_pair(p).context("coherence")?;
        }
        if !MODELS.contains(&self.train.model.as_str()) {
            bail!("train: model `{}` must be one of {MODELS:?}", self.train.model);
        }
        if self.train.lookback == 0 {
            bail!("train: lookback must be positive");
        }
        if self.train.lambda_grid.is_empty() || self.train.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            bail!("train: lambda_grid must be a non-empty list of non-negative numbers");
        }
        self.train.arch.validate().context("train.arch")?;
        self.train.fit.validate().context("train.fit")?;
        self.backtest.validate().context("backtest")?;
        let b = &self.bootstrap;
        if b.block_length == 0 || b.replications == 0 || !(b.level > 0.0 && b.level < 1.0) {
            bail!("bootstrap: block_length and replications must be positive and level in (0, 1)");
        }
        Ok(())
    }

    pub fn ica_options(&self) -> flowlab_core::ica::FastIcaOptions {
        flowlab_core::ica::FastIcaOptions {
            max_iter: self.ica.max_iter,
            tol: self.ica.tol,
            seed: self.seed,
        }
    }

    pub fn winsorize_sigma(&self) -> Option<f64> {
        self.normalize.winsorize.then_some(self.clean.winsorize_sigma)
    }
}
