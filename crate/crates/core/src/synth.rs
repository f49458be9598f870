//! Synthetic panels with planted latent structure.
//!
//! Group flows are an exact linear mixture `X_t = A · S_t` of independent
//! non-Gaussian sources. Each stock receives the market flow scaled by its
//! own lognormal multiplier plus idiosyncratic noise, expressed as a
//! fraction of its market cap, so market-cap normalization recovers
//! comparable intensities while raw KRW flows are dominated by size.
//! Next-day returns load on the stock's mean normalized flow.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! the config seed, which is stable across platforms.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::Matrix3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{Panel, PanelError, PanelRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("mixing matrix is singular (det = {0:e})")]
    SingularMixing(f64),
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// Marginal distribution of a latent source; every kind has zero mean and
/// unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    Laplacian,
    Uniform,
    Gaussian,
    /// Sinusoid with random phase, plus a small Gaussian jitter.
    Sinusoid { period: f64 },
}

impl SourceKind {
    fn sample(&self, t: usize, phase: f64, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            SourceKind::Laplacian => {
                // Laplace(0, b) with b = 1/sqrt(2) has unit variance.
                let u: f64 = rng.random::<f64>() - 0.5;
                -std::f64::consts::FRAC_1_SQRT_2 * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            SourceKind::Uniform => (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt(),
            SourceKind::Gaussian => rng.sample(StandardNormal),
            SourceKind::Sinusoid { period } => {
                let jitter: f64 = rng.sample(StandardNormal);
                let s = (2.0 * std::f64::consts::PI * t as f64 / period + phase).sin();
                // 0.98·var(sin·√2) + 0.02·var(noise) = 1
                (0.98f64).sqrt() * std::f64::consts::SQRT_2 * s + (0.02f64).sqrt() * jitter
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_stocks: usize,
    pub n_days: usize,
    /// Row-major 3×3 mixing from sources to group flows.
    pub mixing_matrix: [[f64; 3]; 3],
    pub source_kinds: [SourceKind; 3],
    /// Loading of next-day return on the stock's mean normalized flow.
    pub flow_to_return_coeff: f64,
    pub return_noise_sigma: f64,
    pub return_mean: f64,
    /// Typical size of a normalized flow (net buy / market cap).
    pub flow_intensity: f64,
    /// Idiosyncratic flow noise relative to the common market flow.
    pub idio_flow_sigma: f64,
    /// Log-sd of the per-stock flow multiplier.
    pub flow_multiplier_sigma: f64,
    /// Median initial market cap, KRW.
    pub median_market_cap: f64,
    /// Log-sd of initial market caps.
    pub market_cap_dispersion: f64,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_stocks: 50,
            n_days: 500,
            mixing_matrix: [[1.0, 0.5, 0.2], [-0.4, 1.0, 0.3], [-0.6, -0.5, 1.0]],
            source_kinds: [SourceKind::Laplacian; 3],
            flow_to_return_coeff: 0.0,
            return_noise_sigma: 0.0349,
            return_mean: 0.00028,
            flow_intensity: 1e-4,
            idio_flow_sigma: 1.0,
            flow_multiplier_sigma: 0.5,
            median_market_cap: 1e12,
            market_cap_dispersion: 1.5,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 2).expect("valid date"),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn mixing(&self) -> Matrix3<f64> {
        let m = &self.mixing_matrix;
        Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        )
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_stocks < 1 {
            return bad("n_stocks must be at least 1");
        }
        if self.n_days < 2 {
            return bad("n_days must be at least 2");
        }
        if !(self.return_noise_sigma > 0.0) {
            return bad("return_noise_sigma must be positive");
        }
        if !(self.flow_intensity > 0.0) {
            return bad("flow_intensity must be positive");
        }
        if self.idio_flow_sigma < 0.0 || self.flow_multiplier_sigma < 0.0 || self.market_cap_dispersion < 0.0 {
            return bad("dispersion parameters must be non-negative");
        }
        if !(self.median_market_cap > 0.0) {
            return bad("median_market_cap must be positive");
        }
        for k in &self.source_kinds {
            if let SourceKind::Sinusoid { period } = k {
                if !(*period > 0.0) {
                    return bad("sinusoid period must be positive");
                }
            }
        }
        let a = self.mixing();
        let det = a.determinant();
        if !det.is_finite() || det.abs() <= 1e-12 * a.norm().powi(3).max(f64::MIN_POSITIVE) {
            return Err(SynthError::SingularMixing(det));
        }
        Ok(())
    }
}

/// A generated panel together with its planted ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPanel {
    pub panel: Panel,
    /// Latent sources, one row per calendar date.
    pub true_sources: Vec<[f64; 3]>,
    /// Market group flows `A · S_t` in units of `flow_intensity`.
    pub true_flows: Vec<[f64; 3]>,
    pub true_mixing: Matrix3<f64>,
}

/// Weekday calendar of `n` days starting at (or after) `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Draws `n` rows of independent unit-variance sources.
pub fn sample_sources(kinds: &[SourceKind; 3], n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let phases: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>() * 2.0 * std::f64::consts::PI);
    (0..n)
        .map(|t| std::array::from_fn(|k| kinds[k].sample(t, phases[k], rng)))
        .collect()
}

pub fn mix(a: &Matrix3<f64>, s: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|r| a[(r, 0)] * s[0] + a[(r, 1)] * s[1] + a[(r, 2)] * s[2])
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthPanel, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a = cfg.mixing();
    let calendar = business_days(cfg.start_date, cfg.n_days);

    let sources = sample_sources(&cfg.source_kinds, cfg.n_days, &mut rng);
    let flows: Vec<[f64; 3]> = sources.iter().map(|s| mix(&a, s)).collect();

    let std_normal = StandardNormal;
    let ret_noise = Normal::new(cfg.return_mean, cfg.return_noise_sigma)
        .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;

    struct Stock {
        ticker: String,
        shares: f64,
        close: f64,
        multiplier: f64,
    }
    let width = cfg.n_stocks.to_string().len().max(4);
    let mut stocks: Vec<Stock> = (0..cfg.n_stocks)
        .map(|i| {
            let zc: f64 = std_normal.sample(&mut rng);
            let zp: f64 = std_normal.sample(&mut rng);
            let zm: f64 = std_normal.sample(&mut rng);
            let cap = cfg.median_market_cap * (cfg.market_cap_dispersion * zc).exp();
            let close = 20_000.0 * (0.8 * zp).exp();
            Stock {
                ticker: format!("S{:0width$}", i, width = width),
                shares: cap / close,
                close,
                multiplier: (cfg.flow_multiplier_sigma * zm).exp(),
            }
        })
        .collect();

    let mut records = Vec::with_capacity(cfg.n_days * cfg.n_stocks);
    // Return realized on the next day, driven by today's normalized flow.
    let mut pending_return = vec![0.0f64; cfg.n_stocks];
    for (t, date) in calendar.iter().enumerate() {
        for (i, st) in stocks.iter_mut().enumerate() {
            let prev_close = st.close;
            if t > 0 {
                st.close = prev_close * (1.0 + pending_return[i]).max(1e-6);
            }
            let open = prev_close;
            let wick_hi: f64 = rng.random::<f64>() * 0.01;
            let wick_lo: f64 = rng.random::<f64>() * 0.01;
            let high = open.max(st.close) * (1.0 + wick_hi);
            let low = open.min(st.close) * (1.0 - wick_lo);
            let cap = st.shares * st.close;

            let mut norm = [0.0; 3];
            for g in 0..3 {
                let eta: f64 = std_normal.sample(&mut rng);
                norm[g] = cfg.flow_intensity * (st.multiplier * flows[t][g] + cfg.idio_flow_sigma * eta);
            }
            let zv: f64 = std_normal.sample(&mut rng);
            let volume = (st.shares * 0.002 * (0.5 * zv).exp()).round().max(1.0) as u64;

            let signal = (norm[0] + norm[1] + norm[2]) / 3.0;
            pending_return[i] = cfg.flow_to_return_coeff * signal + ret_noise.sample(&mut rng);

            records.push(PanelRecord {
                ticker: st.ticker.clone(),
                date: *date,
                open,
                high,
                low,
                close: st.close,
                volume,
                net_buy_foreign: norm[0] * cap,
                net_buy_inst: norm[1] * cap,
                net_buy_indiv: norm[2] * cap,
                market_cap: cap,
            });
        }
    }

    Ok(SynthPanel {
        panel: Panel::from_records(records)?,
        true_sources: sources,
        true_flows: flows,
        true_mixing: a,
    })
}

/// Writes the planted sources as `date,s1,s2,s3`.
pub fn write_truth_csv(
    dates: &[NaiveDate],
    sources: &[[f64; 3]],
    path: impl AsRef<std::path::Path>,
) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(std::fs::File::create(path)?));
    w.write_record(["date", "s1", "s2", "s3"])?;
    for (d, s) in dates.iter().zip(sources) {
        w.write_record([d.to_string(), s[0].to_string(), s[1].to_string(), s[2].to_string()])?;
    }
    w.flush()?;
    Ok(())
}
