use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::align::canonicalize;
use super::whiten::{whiten, Whitened};
use super::{rows_to_matrix_product, IcaError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FastIcaOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for FastIcaOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaResult {
    /// Orthogonal rotation found by FastICA in whitened space.
    pub rotation: Matrix3<f64>,
    /// Maps centered observations to components: rotation · whitening.
    pub unmixing: Matrix3<f64>,
    /// Inverse of `unmixing`; columns are the component loadings.
    pub mixing: Matrix3<f64>,
    pub mean: Vector3<f64>,
    /// Component values, one row per observation.
    pub components: Vec<[f64; 3]>,
    pub iterations: usize,
    pub converged: bool,
}

impl IcaResult {
    /// `mean + mixing · s_t` for every row.
    pub fn reconstruct(&self) -> Vec<[f64; 3]> {
        self.components
            .iter()
            .map(|s| {
                let x = rows_to_matrix_product(&self.mixing, s);
                [x[0] + self.mean[0], x[1] + self.mean[1], x[2] + self.mean[2]]
            })
            .collect()
    }
}

/// `(W Wᵀ)^{-1/2} W`
fn symmetric_decorrelation(w: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = Matrix3::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt()));
    eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

fn initial_rotation(seed: u64) -> Matrix3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Matrix3::from_fn(|_, _| StandardNormal.sample(&mut rng));
    symmetric_decorrelation(&g)
}

/// One fixed-point step for all rows at once:
/// `w⁺ = E[g(wᵀz) z] − E[g'(wᵀz)] w` with `g = tanh`.
fn fixed_point_step(w: &Matrix3<f64>, z: &[[f64; 3]]) -> Matrix3<f64> {
    let n = z.len() as f64;
    let mut gz = Matrix3::<f64>::zeros();
    let mut gprime = [0.0; 3];
    for row in z {
        for i in 0..3 {
            let u = w[(i, 0)] * row[0] + w[(i, 1)] * row[1] + w[(i, 2)] * row[2];
            let t = u.tanh();
            gprime[i] += 1.0 - t * t;
            for j in 0..3 {
                gz[(i, j)] += t * row[j];
            }
        }
    }
    Matrix3::from_fn(|i, j| gz[(i, j)] / n - gprime[i] / n * w[(i, j)])
}

/// Symmetric FastICA on whitened data.
///
/// Converged means `max_i |1 − |⟨w_i⁺, w_i⟩|| < tol` within `max_iter`
/// iterations; otherwise [`IcaError::NotConverged`] carries the last iterate.
pub fn fastica(whitened: &Whitened, opts: &FastIcaOptions) -> Result<IcaResult, IcaError> {
    if opts.max_iter == 0 || !(opts.tol > 0.0) {
        return Err(IcaError::InvalidOption("max_iter and tol must be positive".into()));
    }
    let z = &whitened.data;
    let mut w = initial_rotation(opts.seed);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        let w_new = symmetric_decorrelation(&fixed_point_step(&w, z));
        let lim = (0..3)
            .map(|i| (1.0 - w_new.row(i).dot(&w.row(i)).abs()).abs())
            .fold(0.0, f64::max);
        w = w_new;
        iterations = it;
        if lim < opts.tol {
            converged = true;
            break;
        }
    }
    let t = &whitened.transform;
    let unmixing = w * t.matrix;
    let mixing = t.dewhitening() * w.transpose();
    let components = z.iter().map(|r| rows_to_matrix_product(&w, r)).collect();
    let result = IcaResult {
        rotation: w,
        unmixing,
        mixing,
        mean: t.mean,
        components,
        iterations,
        converged,
    };
    if converged {
        Ok(result)
    } else {
        Err(IcaError::NotConverged(Box::new(result)))
    }
}

/// Whitening, FastICA, then canonical ordering and signs (see
/// [`canonicalize`]).
pub fn fit_ica(rows: &[[f64; 3]], opts: &FastIcaOptions) -> Result<IcaResult, IcaError> {
    let w = whiten(rows)?;
    match fastica(&w, opts) {
        Ok(r) => Ok(canonicalize(r)),
        Err(IcaError::NotConverged(r)) => Err(IcaError::NotConverged(Box::new(canonicalize(*r)))),
        Err(e) => Err(e),
    }
}
