use serde::{Deserialize, Serialize};

use super::BacktestError;
use crate::stats::{mean, sample_sd};

pub const ANNUALIZATION: f64 = 252.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_days: usize,
    pub mean_daily: f64,
    pub sd_daily: f64,
    /// Annualized; `None` when the series has zero volatility.
    pub sharpe: Option<f64>,
    pub cumulative_return: f64,
    pub annualized_return: f64,
    /// Worst peak-to-trough loss of the compounded equity curve, in [−1, 0].
    pub max_drawdown: f64,
    /// `None` when there is no drawdown.
    pub calmar: Option<f64>,
    /// Fraction of strictly positive days.
    pub hit_rate: f64,
}

/// Performance summary of a daily return series.
pub fn metrics(returns: &[f64]) -> Result<Metrics, BacktestError> {
    let n = returns.len();
    if n < 2 {
        return Err(BacktestError::TooFewObservations { min: 2, got: n });
    }
    let mut equity = 1.0f64;
    let mut peak = 1.0f64;
    let mut mdd = 0.0f64;
    for r in returns {
        equity *= 1.0 + r;
        peak = peak.max(equity);
        mdd = mdd.min(equity / peak - 1.0);
    }
    let cumulative_return = equity - 1.0;
    let annualized_return = equity.powf(ANNUALIZATION / n as f64) - 1.0;
    let m = mean(returns);
    let sd = sample_sd(returns);
    let mut out = Metrics {
        n_days: n,
        mean_daily: m,
        sd_daily: sd,
        sharpe: None,
        cumulative_return,
        annualized_return,
        max_drawdown: mdd,
        calmar: (mdd < 0.0).then(|| annualized_return / mdd.abs()),
        hit_rate: returns.iter().filter(|r| **r > 0.0).count() as f64 / n as f64,
    };
    if !(sd > 0.0) || returns.iter().all(|r| *r == returns[0]) {
        out.sd_daily = 0.0;
        return Err(BacktestError::ZeroVolatility(Box::new(out)));
    }
    out.sharpe = Some(m / sd * ANNUALIZATION.sqrt());
    Ok(out)
}
