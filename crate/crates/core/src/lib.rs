//! Investor-flow signal laboratory.
//!
//! The crate covers the full path from a stock-day panel of per-group net
//! buying to trading results:
//!
//! * [`panel`] ingests and cleans the panel and aggregates market-level flows,
//! * [`filters`] holds the market-cap ("matched filter") and z-score flow
//!   normalizations plus winsorization,
//! * [`ica`] whitens the aggregated flows and runs symmetric FastICA,
//! * [`wavelet`] computes Morlet CWT and smoothed wavelet coherence,
//! * [`predict`] builds lookback sequences and trains an LSTM-with-attention
//!   forecaster alongside ridge and LASSO baselines,
//! * [`backtest`] runs decile long-short and factor-timing strategies with
//!   transaction costs and block-bootstrap inference,
//! * [`synth`] generates panels with planted mixing and predictability so
//!   every stage can be checked against known ground truth.

pub mod backtest;
pub mod filters;
pub mod ica;
pub mod panel;
pub mod predict;
pub mod stats;
pub mod synth;
pub mod wavelet;

pub use panel::{FlowMatrix, Group, Panel, PanelRecord};
