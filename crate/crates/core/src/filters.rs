//! Flow normalizations: market-cap scaling ("matched filter"), trailing
//! z-score, and winsorization with frozen moments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{mean, sample_sd};

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("market cap must be positive, got {0}")]
    NonpositiveMarketCap(f64),
    #[error("z-score window must be at least 2, got {0}")]
    WindowTooShort(usize),
    #[error("series has zero standard deviation")]
    DegenerateSeries,
    #[error("series needs at least {min} points, got {got}")]
    TooShort { min: usize, got: usize },
    #[error("winsorization sigma must be positive, got {0}")]
    InvalidSigma(f64),
}

/// Flow normalization applied per stock before aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Normalizer {
    /// Net buys in KRW, unscaled.
    Raw,
    /// Net buys divided by same-day market cap.
    MatchedFilter,
    /// Trailing z-score of raw net buys.
    ZScore { window: usize },
}

impl Normalizer {
    pub const DEFAULT_ZSCORE_WINDOW: usize = 60;

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "raw" => Some(Normalizer::Raw),
            "matched" | "matched_filter" => Some(Normalizer::MatchedFilter),
            "zscore" => Some(Normalizer::ZScore {
                window: Self::DEFAULT_ZSCORE_WINDOW,
            }),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Normalizer::Raw => "raw",
            Normalizer::MatchedFilter => "matched",
            Normalizer::ZScore { .. } => "zscore",
        }
    }
}

/// Net buying as a fraction of market cap.
pub fn matched_filter(net_buy: f64, market_cap: f64) -> Result<f64, FilterError> {
    if !(market_cap > 0.0) {
        return Err(FilterError::NonpositiveMarketCap(market_cap));
    }
    Ok(net_buy / market_cap)
}

/// Trailing z-score against the previous `window` observations (the current
/// value is excluded from its own moments).
///
/// Returns `(index, z)` pairs; indices without a full window or with zero
/// trailing standard deviation are omitted.
pub fn zscore_normalize(series: &[f64], window: usize) -> Result<Vec<(usize, f64)>, FilterError> {
    if window < 2 {
        return Err(FilterError::WindowTooShort(window));
    }
    let mut out = Vec::new();
    for t in window..series.len() {
        let hist = &series[t - window..t];
        let sd = sample_sd(hist);
        if sd > 0.0 && sd.is_finite() {
            out.push((t, (series[t] - mean(hist)) / sd));
        }
    }
    Ok(out)
}

/// Clamp bounds computed once from an unclamped series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinsorBounds {
    pub lower: f64,
    pub upper: f64,
}

impl WinsorBounds {
    pub fn from_series(series: &[f64], sigma: f64) -> Result<Self, FilterError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(FilterError::InvalidSigma(sigma));
        }
        if series.len() < 2 {
            return Err(FilterError::TooShort {
                min: 2,
                got: series.len(),
            });
        }
        let sd = sample_sd(series);
        if !(sd > 0.0) {
            return Err(FilterError::DegenerateSeries);
        }
        let m = mean(series);
        Ok(Self {
            lower: m - sigma * sd,
            upper: m + sigma * sd,
        })
    }

    pub fn apply(&self, series: &[f64]) -> Vec<f64> {
        series.iter().map(|x| x.clamp(self.lower, self.upper)).collect()
    }
}

/// Clamps values beyond `mean ± sigma·sd` of the input series.
pub fn winsorize(series: &[f64], sigma: f64) -> Result<Vec<f64>, FilterError> {
    Ok(WinsorBounds::from_series(series, sigma)?.apply(series))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn matched_filter_examples() {
        assert!((matched_filter(10e9, 50e9).unwrap() - 0.2).abs() < 1e-15);
        assert!((matched_filter(10e9, 50e12).unwrap() - 0.0002).abs() < 1e-18);
        assert_eq!(matched_filter(0.0, 3e11).unwrap(), 0.0);
        assert_eq!(
            matched_filter(1.0, 0.0),
            Err(FilterError::NonpositiveMarketCap(0.0))
        );
    }

    #[test]
    fn zscore_examples() {
        assert!(zscore_normalize(&[5.0; 20], 4).unwrap().is_empty());
        let z = zscore_normalize(&[1.0, 2.0, 3.0], 2).unwrap();
        // Trailing window [1, 2]: mean 1.5, sample sd 1/sqrt(2).
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].0, 2);
        assert!((z[0].1 - 1.5 / std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(zscore_normalize(&[1.0], 1), Err(FilterError::WindowTooShort(1)));
    }

    #[test]
    fn zscore_affine_invariant() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.5 * v - 2.0).collect();
        let zx = zscore_normalize(&x, 7).unwrap();
        let zy = zscore_normalize(&y, 7).unwrap();
        assert_eq!(zx.len(), zy.len());
        for (a, b) in zx.iter().zip(&zy) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-9);
        }
    }

    #[test]
    fn winsorize_clamps_outlier_to_original_bound() {
        // 99 points alternating ±1 plus one outlier far out.
        let mut x: Vec<f64> = (0..99).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        x.push(1e3);
        let m = x.iter().sum::<f64>() / 100.0;
        let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert!((1e3 - m) / sd > 9.0);
        let w = winsorize(&x, 5.0).unwrap();
        assert_eq!(w[99], m + 5.0 * sd);
        assert_eq!(&w[..99], &x[..99]);
    }

    #[test]
    fn winsorize_within_bounds_noop_and_degenerate() {
        let x = [0.1, -0.2, 0.3, 0.0];
        assert_eq!(winsorize(&x, 5.0).unwrap(), x.to_vec());
        assert_eq!(winsorize(&[2.0, 2.0], 5.0), Err(FilterError::DegenerateSeries));
        assert!(matches!(winsorize(&[2.0], 5.0), Err(FilterError::TooShort { .. })));
    }

    #[test]
    fn frozen_bounds_idempotent() {
        let mut x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).cos()).collect();
        x[5] = 40.0;
        x[9] = -25.0;
        let b = WinsorBounds::from_series(&x, 2.0).unwrap();
        let once = b.apply(&x);
        assert_eq!(b.apply(&once), once);
    }

    proptest! {
        #[test]
        fn matched_filter_scale_invariant(nb in -1e12f64..1e12, mc in 1e9f64..1e14, k in 1e-3f64..1e3) {
            let a = matched_filter(nb, mc).unwrap();
            let b = matched_filter(k * nb, k * mc).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }

        #[test]
        fn matched_filter_linear(a in -1e12f64..1e12, b in -1e12f64..1e12, mc in 1e9f64..1e14) {
            let lhs = matched_filter(a + b, mc).unwrap();
            let rhs = matched_filter(a, mc).unwrap() + matched_filter(b, mc).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (a.abs() + b.abs()) / mc + 1e-300);
        }

        #[test]
        fn winsorize_range(xs in prop::collection::vec(-1e3f64..1e3, 3..60), sigma in 0.5f64..6.0) {
            if let Ok(b) = WinsorBounds::from_series(&xs, sigma) {
                for v in b.apply(&xs) {
                    prop_assert!(v >= b.lower && v <= b.upper);
                }
            }
        }
    }
}
