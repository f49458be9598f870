use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{flatten_inputs, PredictError, Predictor};
use crate::stats::mean;

pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Ridge,
    Lasso,
}

/// Penalized linear model fitted on standardized features with an
/// unpenalized intercept. `coefficients` are on the original feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub lambda: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub standardized_coefficients: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// Coordinate-descent sweeps; zero for ridge.
    pub sweeps: usize,
}

impl LinearModel {
    pub fn predict_features(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl Predictor for LinearModel {
    fn predict(&self, inputs: &[[f64; 3]]) -> f64 {
        self.predict_features(&flatten_inputs(inputs))
    }
}

struct Standardized {
    z: DMatrix<f64>,
    yc: DVector<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    y_mean: f64,
}

fn standardize(features: &[Vec<f64>], targets: &[f64]) -> Result<Standardized, PredictError> {
    let n = features.len();
    if n == 0 || n != targets.len() {
        return Err(PredictError::Shape(format!("{} feature rows for {} targets", n, targets.len())));
    }
    let p = features[0].len();
    if p == 0 || features.iter().any(|r| r.len() != p) {
        return Err(PredictError::Shape("ragged or empty feature rows".into()));
    }
    if features.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(PredictError::Shape("non-finite design entry".into()));
    }
    let mut mu = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let col: Vec<f64> = features.iter().map(|r| r[j]).collect();
        mu[j] = mean(&col);
        let sd = crate::stats::population_variance(&col).sqrt();
        if sd > 0.0 {
            scale[j] = sd;
        }
    }
    let z = DMatrix::from_fn(n, p, |i, j| (features[i][j] - mu[j]) / scale[j]);
    let y_mean = mean(targets);
    let yc = DVector::from_iterator(n, targets.iter().map(|y| y - y_mean));
    Ok(Standardized {
        z,
        yc,
        mean: mu,
        scale,
        y_mean,
    })
}

fn finish(kind: LinearKind, lambda: f64, s: &Standardized, beta: Vec<f64>, sweeps: usize) -> LinearModel {
    let coefficients: Vec<f64> = beta.iter().zip(&s.scale).map(|(b, sc)| b / sc).collect();
    let intercept = s.y_mean - coefficients.iter().zip(&s.mean).map(|(b, m)| b * m).sum::<f64>();
    LinearModel {
        kind,
        lambda,
        intercept,
        coefficients,
        standardized_coefficients: beta,
        feature_mean: s.mean.clone(),
        feature_scale: s.scale.clone(),
        sweeps,
    }
}

/// Solves (ZᵀZ + λI)β = Zᵀ(y − ȳ) on standardized features Z.
pub fn ridge_fit(features: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<LinearModel, PredictError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(PredictError::InvalidConfig(format!("lambda {lambda} must be finite and non-negative")));
    }
    let s = standardize(features, targets)?;
    let p = s.z.ncols();
    let gram = s.z.transpose() * &s.z;
    if lambda == 0.0 {
        let eig = SymmetricEigen::new(gram.clone());
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max > 0.0) || min <= 1e-12 * max {
            return Err(PredictError::SingularSystem);
        }
    }
    let a = gram + DMatrix::identity(p, p) * lambda;
    let rhs = s.z.transpose() * &s.yc;
    let chol = a.cholesky().ok_or(PredictError::SingularSystem)?;
    let beta = chol.solve(&rhs);
    Ok(finish(LinearKind::Ridge, lambda, &s, beta.iter().copied().collect(), 0))
}

/// Smallest penalty at which every LASSO coefficient is zero:
/// max |Zᵀ(y − ȳ)| / n on standardized features.
pub fn lasso_lambda_max(features: &[Vec<f64>], targets: &[f64]) -> Result<f64, PredictError> {
    let s = standardize(features, targets)?;
    let n = s.z.nrows() as f64;
    Ok((s.z.transpose() * &s.yc).iter().fold(0.0f64, |m, v| m.max(v.abs())) / n)
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on (1/2n)‖y − ȳ − Zβ‖² + λ‖β‖₁.
pub fn lasso_fit(features: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<LinearModel, PredictError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(PredictError::InvalidConfig(format!("lambda {lambda} must be finite and non-negative")));
    }
    let s = standardize(features, targets)?;
    let (n, p) = (s.z.nrows(), s.z.ncols());
    let nf = n as f64;
    let cols: Vec<Vec<f64>> = (0..p).map(|j| s.z.column(j).iter().copied().collect()).collect();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf).collect();
    let mut beta = vec![0.0; p];
    let mut resid: Vec<f64> = s.yc.iter().copied().collect();
    for sweep in 1..=LASSO_MAX_SWEEPS {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let col = &cols[j];
            let rho = col.iter().zip(&resid).map(|(z, r)| z * r).sum::<f64>() / nf + norms[j] * beta[j];
            let new = soft_threshold(rho, lambda) / norms[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, z) in resid.iter_mut().zip(col) {
                    *r -= delta * z;
                }
                beta[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < LASSO_TOL {
            return Ok(finish(LinearKind::Lasso, lambda, &s, beta, sweep));
        }
    }
    Err(PredictError::NotConverged {
        sweeps: LASSO_MAX_SWEEPS,
    })
}

/// Fits each penalty in `grid` on the training rows and keeps the one with
/// the lowest validation MSE (earliest on ties). Also returns the
/// validation MSE of every grid point.
pub fn select_lambda(
    kind: LinearKind,
    train: (&[Vec<f64>], &[f64]),
    validation: (&[Vec<f64>], &[f64]),
    grid: &[f64],
) -> Result<(LinearModel, Vec<(f64, f64)>), PredictError> {
    if grid.is_empty() {
        return Err(PredictError::InvalidConfig("empty lambda grid".into()));
    }
    let mut best: Option<(LinearModel, f64)> = None;
    let mut curve = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let model = match kind {
            LinearKind::Ridge => ridge_fit(train.0, train.1, lambda)?,
            LinearKind::Lasso => lasso_fit(train.0, train.1, lambda)?,
        };
        let mse = validation
            .0
            .iter()
            .zip(validation.1)
            .map(|(x, y)| (model.predict_features(x) - y).powi(2))
            .sum::<f64>()
            / validation.1.len().max(1) as f64;
        curve.push((lambda, mse));
        if best.as_ref().is_none_or(|b| mse < b.1) {
            best = Some((model, mse));
        }
    }
    Ok((best.expect("non-empty grid").0, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let t = i as f64;
                vec![t, (t * 0.7).sin(), (t * 1.3).cos() + 0.1 * t]
            })
            .collect();
        let y = x.iter().map(|r| 0.5 + 2.0 * r[0] - r[1] + 0.25 * r[2] + 0.01 * (r[0] * 3.1).sin()).collect();
        (x, y)
    }

    #[test]
    fn ridge_zero_is_ols() {
        // Oracle: normal equations with an explicit intercept column,
        // solved by Gaussian elimination.
        let (x, y) = design();
        let m = ridge_fit(&x, &y, 0.0).unwrap();
        let p = 4;
        let mut a = vec![vec![0.0; p + 1]; p];
        for (row, &yi) in x.iter().zip(&y) {
            let r = [1.0, row[0], row[1], row[2]];
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += r[i] * r[j];
                }
                a[i][p] += r[i] * yi;
            }
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
            a.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=p {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        let sol: Vec<f64> = (0..p).map(|i| a[i][p] / a[i][i]).collect();
        assert!((m.intercept - sol[0]).abs() < 1e-8);
        for j in 0..3 {
            assert!((m.coefficients[j] - sol[j + 1]).abs() < 1e-8);
        }
    }

    #[test]
    fn ridge_singular_without_penalty() {
        let (x, y) = design();
        let dup: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0], r[0], r[1]]).collect();
        assert!(matches!(ridge_fit(&dup, &y, 0.0), Err(PredictError::SingularSystem)));
        let m = ridge_fit(&dup, &y, 0.5).unwrap();
        assert!((m.coefficients[0] - m.coefficients[1]).abs() < 1e-10);
        assert!(m.coefficients[0] > 0.0);
    }

    #[test]
    fn ridge_huge_penalty_predicts_mean() {
        let (x, y) = design();
        let m = ridge_fit(&x, &y, 1e14).unwrap();
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-10));
        assert!((m.predict_features(&x[3]) - mean(&y)).abs() < 1e-8);
    }

    #[test]
    fn lasso_null_threshold() {
        let (x, y) = design();
        let lmax = lasso_lambda_max(&x, &y).unwrap();
        let m = lasso_fit(&x, &y, lmax).unwrap();
        assert!(m.coefficients.iter().all(|&c| c == 0.0));
        let m = lasso_fit(&x, &y, lmax * 0.9).unwrap();
        assert!(m.coefficients.iter().any(|&c| c != 0.0));
    }

    #[test]
    fn lasso_matches_ridge_without_penalty() {
        let (x, y) = design();
        let l = lasso_fit(&x, &y, 0.0).unwrap();
        let r = ridge_fit(&x, &y, 0.0).unwrap();
        for j in 0..3 {
            assert!((l.coefficients[j] - r.coefficients[j]).abs() < 1e-5);
        }
    }

    #[test]
    fn selection_prefers_lowest_validation_error() {
        let (x, y) = design();
        let (m, curve) = select_lambda(LinearKind::Ridge, (&x[..8], &y[..8]), (&x[8..], &y[8..]), &[1e6, 0.0, 1e-3]).unwrap();
        let best = curve.iter().cloned().fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert_eq!(m.lambda, best.0);
    }
}
