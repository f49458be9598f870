//! Independent component analysis of the aggregated flow matrix.
//!
//! The model is square and noise-free: three observed group flows are an
//! invertible mixture of three independent sources. Data are centered and
//! whitened by eigendecomposition of the sample covariance, then rotated by
//! symmetric FastICA with the log-cosh contrast.

mod align;
mod fastica;
mod interpret;
mod rolling;
mod whiten;

use chrono::NaiveDate;
use nalgebra::Matrix3;
use thiserror::Error;

pub use align::{align_components, canonicalize, AlignReference};
pub use fastica::{fastica, fit_ica, FastIcaOptions, IcaResult};
pub use interpret::{interpret, FactorCorrelation, FactorCorrelationTable, NamedSeries};
pub use rolling::{rolling_stability, RollingOptions, StabilityTrace, WindowFit};
pub use whiten::{whiten, Whitened, WhiteningTransform};

#[derive(Debug, Error)]
pub enum IcaError {
    #[error("need at least {min} observations, got {got}")]
    TooFewObservations { min: usize, got: usize },
    #[error("covariance is rank deficient (eigenvalues {0:?})")]
    RankDeficient([f64; 3]),
    #[error("FastICA did not converge after {} iterations", .0.iterations)]
    NotConverged(Box<IcaResult>),
    #[error("factor `{factor}` overlaps the components on {got} dates; need {min}")]
    InsufficientOverlap { factor: String, got: usize, min: usize },
    #[error("series length {got} shorter than window + step = {need}")]
    WindowTooLong { got: usize, need: usize },
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

impl IcaError {
    /// The partial result carried by a non-converged fit, if any.
    pub fn into_partial(self) -> Result<IcaResult, IcaError> {
        match self {
            IcaError::NotConverged(r) => Ok(*r),
            other => Err(other),
        }
    }
}

/// Component series with their dates.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<[f64; 3]>,
}

impl ComponentSeries {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }
}

pub(crate) fn rows_to_matrix_product(m: &Matrix3<f64>, row: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|r| m[(r, 0)] * row[0] + m[(r, 1)] * row[1] + m[(r, 2)] * row[2])
}

/// Frobenius distance between two matrices.
pub fn frobenius_distance(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).norm()
}
