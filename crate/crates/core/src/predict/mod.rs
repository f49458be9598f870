//! Next-day return forecasting from lookback windows of normalized flows.
//!
//! [`LstmModel`] is a two-layer LSTM whose first-layer output sequence is
//! read by multi-head attention, queried with the second layer's final
//! state. Gradients are derived by hand and trained with Adam and early
//! stopping. [`LinearModel`] provides ridge and LASSO baselines on the
//! flattened window.

mod evaluate;
mod linear;
mod lstm;
mod sequences;
mod train;

use chrono::NaiveDate;
use thiserror::Error;

pub use evaluate::{evaluate, long_short_information_ratio, PredictionReport};
pub use linear::{lasso_fit, lasso_lambda_max, ridge_fit, select_lambda, LinearKind, LinearModel};
pub use lstm::{lstm_forward, ArchConfig, ForwardOutput, LstmModel};
pub use sequences::{build_sequences, chronological_split, flatten_inputs, Split};
pub use train::{train, Adam, EpochLog, TrainConfig, TrainingLog};

use crate::panel::PanelError;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("no samples could be built")]
    EmptyDataset,
    #[error("model has a non-finite parameter at index {0}")]
    NonFiniteParameter(usize),
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("coordinate descent did not converge after {sweeps} sweeps")]
    NotConverged { sweeps: usize },
    #[error("input shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// One training example: `lookback` rows of flows (oldest first) and the
/// following day's close-to-close return.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub ticker: String,
    /// Last day of the input window; the target is realized on the next day.
    pub date: NaiveDate,
    pub inputs: Vec<[f64; 3]>,
    pub target: f64,
}

/// Anything that maps a lookback window to a return forecast.
pub trait Predictor {
    fn predict(&self, inputs: &[[f64; 3]]) -> f64;

    /// Per-lag attention mass, for models that have one.
    fn attention_profile(&self, _inputs: &[[f64; 3]]) -> Option<Vec<f64>> {
        None
    }
}
