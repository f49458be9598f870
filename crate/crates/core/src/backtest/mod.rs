//! Long-short and market-timing strategies, cost accounting, performance
//! metrics and block-bootstrap intervals.

mod bootstrap;
mod metrics;
mod strategy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bootstrap::{block_bootstrap_ci, BootstrapCI, BootstrapOptions};
pub use metrics::{metrics, Metrics, ANNUALIZATION};
pub use strategy::{
    market_returns, run_ica_factor, run_momentum, run_timing, stock_returns, BacktestReport, Book, DailyRecord,
    SkippedDate,
};

use crate::panel::FlowSignal;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("no tradable dates: {skipped} dates skipped")]
    TooFewStocks { skipped: usize },
    #[error("need at least {min} observations, got {got}")]
    TooFewObservations { min: usize, got: usize },
    #[error("return series has zero volatility")]
    ZeroVolatility(Box<Metrics>),
    #[error("series of length {len} is shorter than twice the block length {block}")]
    SeriesTooShort { len: usize, block: usize },
    #[error("signal has {got} rows for {want} dates")]
    SignalMismatch { want: usize, got: usize },
    #[error("invalid strategy configuration: {0}")]
    InvalidConfig(String),
}

impl BacktestError {
    /// Metrics computed before the volatility check failed, if any.
    pub fn into_partial(self) -> Option<Metrics> {
        match self {
            BacktestError::ZeroVolatility(m) => Some(*m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Momentum,
    IcaFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Fraction of the cross-section held in each leg.
    pub decile: f64,
    /// Cost per unit of one-sided turnover (0.001 = 10 bp round trip).
    pub cost_roundtrip: f64,
    /// Trading days between the signal close and the start of the holding day.
    pub signal_lag: usize,
    pub flow_signal: FlowSignal,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::Momentum,
            decile: 0.1,
            cost_roundtrip: 0.001,
            signal_lag: 1,
            flow_signal: FlowSignal::Mean,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        if !(self.decile > 0.0 && self.decile <= 0.5) {
            return Err(BacktestError::InvalidConfig(format!("decile {} outside (0, 0.5]", self.decile)));
        }
        if !(self.cost_roundtrip >= 0.0) || !self.cost_roundtrip.is_finite() {
            return Err(BacktestError::InvalidConfig(format!("cost {} must be non-negative", self.cost_roundtrip)));
        }
        if self.signal_lag == 0 {
            return Err(BacktestError::InvalidConfig("signal lag must be at least one day".into()));
        }
        Ok(())
    }
}
