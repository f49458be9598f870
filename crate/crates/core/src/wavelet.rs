//! Morlet continuous wavelet transform and smoothed wavelet coherence.
//!
//! Coefficients use unit sampling interval and L2-normalized daughter
//! wavelets `ψ((m − n)/s) / √s`, so white noise has flat expected power
//! across scales. Edges are zero-padded; cells within `√2·s` of either end
//! are flagged as inside the cone of influence.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::stats::{mean, population_variance};

pub const OMEGA0: f64 = 6.0;
pub const DYADIC_SCALES: [f64; 5] = [2.0, 4.0, 8.0, 16.0, 32.0];
pub const MIN_LENGTH: usize = 64;
/// Kernel support in units of scale; `exp(−6²/2)` is about 1.5e-8.
const SUPPORT: f64 = 6.0;

pub const BAND_LABELS: [&str; 4] = ["2-4d", "4-8d", "8-16d", "16-32d"];

#[derive(Debug, Error, PartialEq)]
pub enum WaveletError {
    #[error("series too short: need {min}, got {got}")]
    TooShort { min: usize, got: usize },
    #[error("series is constant")]
    ConstantSeries,
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("smoothing window must be odd and at least 3, got {0}")]
    InvalidSmoothing(usize),
    #[error("band {0} has no cells outside the cone of influence")]
    EmptyBand(usize),
}

/// Morlet mother wavelet `π^{-1/4} e^{iω₀η} e^{-η²/2}`.
pub fn morlet(eta: f64) -> Complex64 {
    let env = std::f64::consts::PI.powf(-0.25) * (-0.5 * eta * eta).exp();
    Complex64::from_polar(env, OMEGA0 * eta)
}

/// Equivalent Fourier period of a Morlet scale.
pub fn fourier_period(scale: f64) -> f64 {
    4.0 * std::f64::consts::PI * scale / (OMEGA0 + (2.0 + OMEGA0 * OMEGA0).sqrt())
}

/// Horizon band (0..4) a scale contributes to.
pub fn band_of_scale(scale: f64) -> Option<usize> {
    match scale {
        s if (2.0..4.0).contains(&s) => Some(0),
        s if (4.0..8.0).contains(&s) => Some(1),
        s if (8.0..16.0).contains(&s) => Some(2),
        s if s >= 16.0 => Some(3),
        _ => None,
    }
}

/// `true` where boundary effects reach: within `√2·s` of either edge.
pub fn cone_of_influence(scales: &[f64], len: usize) -> Vec<Vec<bool>> {
    scales
        .iter()
        .map(|&s| {
            let e = std::f64::consts::SQRT_2 * s;
            (0..len)
                .map(|n| (n as f64) < e || ((len - 1 - n) as f64) < e)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CwtField {
    pub scales: Vec<f64>,
    /// `coefficients[scale][time]`
    pub coefficients: Vec<Vec<Complex64>>,
    pub in_cone: Vec<Vec<bool>>,
}

impl CwtField {
    pub fn len(&self) -> usize {
        self.coefficients.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean `|W|²` per scale over cells outside the cone.
    pub fn scale_power(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.in_cone)
            .map(|(row, mask)| {
                let v: Vec<f64> = row.iter().zip(mask).filter(|(_, m)| !**m).map(|(c, _)| c.norm_sqr()).collect();
                if v.is_empty() {
                    f64::NAN
                } else {
                    mean(&v)
                }
            })
            .collect()
    }
}

fn zscore(series: &[f64]) -> Result<Vec<f64>, WaveletError> {
    if series.len() < MIN_LENGTH {
        return Err(WaveletError::TooShort {
            min: MIN_LENGTH,
            got: series.len(),
        });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(WaveletError::NonFinite);
    }
    let m = mean(series);
    let sd = population_variance(series).sqrt();
    if !(sd > 0.0) || series.iter().all(|x| *x == series[0]) {
        return Err(WaveletError::ConstantSeries);
    }
    Ok(series.iter().map(|x| (x - m) / sd).collect())
}

/// CWT on the five dyadic scales after internal z-scoring.
pub fn cwt(series: &[f64]) -> Result<CwtField, WaveletError> {
    cwt_with_scales(series, &DYADIC_SCALES)
}

pub fn cwt_with_scales(series: &[f64], scales: &[f64]) -> Result<CwtField, WaveletError> {
    let x = zscore(series)?;
    let len = x.len();
    let coefficients = scales
        .iter()
        .map(|&s| {
            let half = (SUPPORT * s).ceil() as isize;
            let norm = 1.0 / s.sqrt();
            let kernel: Vec<Complex64> = (-half..=half).map(|j| morlet(j as f64 / s).conj() * norm).collect();
            (0..len as isize)
                .map(|n| {
                    let lo = (-half).max(-n);
                    let hi = half.min(len as isize - 1 - n);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in lo..=hi {
                        acc += kernel[(j + half) as usize] * x[(n + j) as usize];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(CwtField {
        scales: scales.to_vec(),
        coefficients,
        in_cone: cone_of_influence(scales, len),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceField {
    pub scales: Vec<f64>,
    /// `coherence[scale][time]`, each in [0, 1].
    pub coherence: Vec<Vec<f64>>,
    pub in_cone: Vec<Vec<bool>>,
    pub band_means: [f64; 4],
}

/// Centered moving average; windows are truncated at the edges.
fn smooth_time<T>(row: &[T], window: usize) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Div<f64, Output = T> + Default,
{
    let half = window / 2;
    let n = row.len();
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(n - 1);
            let mut acc = T::default();
            for v in &row[lo..=hi] {
                acc = acc + *v;
            }
            acc / (hi - lo + 1) as f64
        })
        .collect()
}

/// 3-point average across adjacent scales (2-point at the ends).
fn smooth_scale<T>(rows: &[Vec<T>]) -> Vec<Vec<T>>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Div<f64, Output = T> + Default,
{
    let ns = rows.len();
    (0..ns)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(ns - 1);
            (0..rows[i].len())
                .map(|t| {
                    let mut acc = T::default();
                    for r in &rows[lo..=hi] {
                        acc = acc + r[t];
                    }
                    acc / (hi - lo + 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Pointwise `|W_A W_B*|² / (|W_A|² |W_B|²)` with no smoothing. This is 1
/// wherever both coefficients are nonzero, which is why [`coherence`]
/// smooths before taking the ratio.
pub fn unsmoothed_ratio(a: &CwtField, b: &CwtField) -> Vec<Vec<f64>> {
    a.coefficients
        .iter()
        .zip(&b.coefficients)
        .map(|(ra, rb)| {
            ra.iter()
                .zip(rb)
                .map(|(wa, wb)| (wa * wb.conj()).norm_sqr() / (wa.norm_sqr() * wb.norm_sqr()))
                .collect()
        })
        .collect()
}

/// Squared wavelet coherence with time and scale smoothing.
pub fn coherence(a: &[f64], b: &[f64], smoothing_window: usize) -> Result<CoherenceField, WaveletError> {
    if smoothing_window < 3 || smoothing_window % 2 == 0 {
        return Err(WaveletError::InvalidSmoothing(smoothing_window));
    }
    if a.len() != b.len() {
        return Err(WaveletError::LengthMismatch(a.len(), b.len()));
    }
    let wa = cwt(a)?;
    let wb = cwt(b)?;
    let mut cross = Vec::with_capacity(wa.scales.len());
    let mut pa = Vec::with_capacity(wa.scales.len());
    let mut pb = Vec::with_capacity(wa.scales.len());
    for (ra, rb) in wa.coefficients.iter().zip(&wb.coefficients) {
        let x: Vec<Complex64> = ra.iter().zip(rb).map(|(u, v)| u * v.conj()).collect();
        let sa: Vec<f64> = ra.iter().map(|u| u.norm_sqr()).collect();
        let sb: Vec<f64> = rb.iter().map(|v| v.norm_sqr()).collect();
        cross.push(smooth_time(&x, smoothing_window));
        pa.push(smooth_time(&sa, smoothing_window));
        pb.push(smooth_time(&sb, smoothing_window));
    }
    let cross = smooth_scale(&cross);
    let pa = smooth_scale(&pa);
    let pb = smooth_scale(&pb);
    let coherence: Vec<Vec<f64>> = (0..cross.len())
        .map(|i| {
            (0..cross[i].len())
                .map(|t| {
                    let den = pa[i][t] * pb[i][t];
                    if den > 0.0 {
                        (cross[i][t].norm_sqr() / den).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut field = CoherenceField {
        scales: wa.scales.clone(),
        coherence,
        in_cone: wa.in_cone.clone(),
        band_means: [0.0; 4],
    };
    field.band_means = band_summary(&field)?;
    Ok(field)
}

/// Mean coherence per horizon band over cells outside the cone.
pub fn band_summary(field: &CoherenceField) -> Result<[f64; 4], WaveletError> {
    let mut sum = [0.0; 4];
    let mut count = [0usize; 4];
    for ((&s, row), mask) in field.scales.iter().zip(&field.coherence).zip(&field.in_cone) {
        let Some(b) = band_of_scale(s) else { continue };
        for (v, m) in row.iter().zip(mask) {
            if !m {
                sum[b] += v;
                count[b] += 1;
            }
        }
    }
    let mut out = [0.0; 4];
    for b in 0..4 {
        if count[b] == 0 {
            return Err(WaveletError::EmptyBand(b));
        }
        out[b] = sum[b] / count[b] as f64;
    }
    Ok(out)
}
