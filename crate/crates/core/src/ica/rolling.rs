use chrono::NaiveDate;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::align::{align_components, AlignReference};
use super::fastica::{fit_ica, FastIcaOptions};
use super::interpret::{interpret, NamedSeries};
use super::{frobenius_distance, ComponentSeries, IcaError};
use crate::panel::FlowMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollingOptions {
    pub window: usize,
    pub step: usize,
    #[serde(flatten)]
    pub ica: FastIcaOptions,
}

impl Default for RollingOptions {
    fn default() -> Self {
        Self {
            window: 252,
            step: 21,
            ica: FastIcaOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowFit {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub mixing: Matrix3<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub top_factor: [Option<String>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTrace {
    pub windows: Vec<WindowFit>,
    /// `‖A(k) − A(k−1)‖_F` for k ≥ 1; `drift[k-1]` belongs to `windows[k]`.
    pub frobenius_drift: Vec<f64>,
}

/// Fits ICA on sliding windows, aligning each window to its predecessor
/// before measuring mixing-matrix drift. Non-converged windows keep their
/// last iterate and are flagged.
pub fn rolling_stability(
    flows: &FlowMatrix,
    opts: &RollingOptions,
    factors: &[NamedSeries],
) -> Result<StabilityTrace, IcaError> {
    if opts.window == 0 || opts.step == 0 {
        return Err(IcaError::InvalidOption("window and step must be positive".into()));
    }
    let need = opts.window + opts.step;
    if flows.len() < need {
        return Err(IcaError::WindowTooLong {
            got: flows.len(),
            need,
        });
    }
    let mut windows: Vec<WindowFit> = Vec::new();
    let mut drift = Vec::new();
    let mut prev: Option<Matrix3<f64>> = None;
    let mut start = 0;
    while start + opts.window <= flows.len() {
        let end = start + opts.window;
        let rows = &flows.values[start..end];
        let fit = match fit_ica(rows, &opts.ica) {
            Ok(r) => r,
            Err(e) => e.into_partial()?,
        };
        let fit = match prev {
            Some(p) => align_components(fit, &AlignReference::Mixing(p)),
            None => fit,
        };
        if let Some(p) = prev {
            drift.push(frobenius_distance(&fit.mixing, &p));
        }
        let top_factor = if factors.is_empty() {
            Default::default()
        } else {
            let cs = ComponentSeries {
                dates: flows.dates[start..end].to_vec(),
                values: fit.components.clone(),
            };
            // Factors that barely overlap this window leave it uninterpreted.
            interpret(&cs, factors).map(|t| t.top_factor).unwrap_or_default()
        };
        prev = Some(fit.mixing);
        windows.push(WindowFit {
            start_date: flows.dates[start],
            end_date: flows.dates[end - 1],
            mixing: fit.mixing,
            converged: fit.converged,
            iterations: fit.iterations,
            top_factor,
        });
        start += opts.step;
    }
    Ok(StabilityTrace {
        windows,
        frobenius_drift: drift,
    })
}
