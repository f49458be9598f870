use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{rows_to_matrix_product, IcaError};

pub const MIN_OBSERVATIONS: usize = 30;

/// Centering plus `Λ^{-1/2} Uᵀ` from `Cov(X) = U Λ Uᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub mean: Vector3<f64>,
    pub matrix: Matrix3<f64>,
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Vector3<f64>,
    /// Eigenvectors as columns, ordered like `eigenvalues`.
    pub eigenvectors: Matrix3<f64>,
}

impl WhiteningTransform {
    pub fn apply(&self, x: &[f64; 3]) -> [f64; 3] {
        let c = [x[0] - self.mean[0], x[1] - self.mean[1], x[2] - self.mean[2]];
        rows_to_matrix_product(&self.matrix, &c)
    }

    /// `U Λ^{1/2}`, the inverse of [`Self::matrix`].
    pub fn dewhitening(&self) -> Matrix3<f64> {
        let sqrt = Matrix3::from_diagonal(&self.eigenvalues.map(f64::sqrt));
        self.eigenvectors * sqrt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Whitened {
    pub transform: WhiteningTransform,
    pub data: Vec<[f64; 3]>,
}

/// Covariance uses the 1/T normalization, so the whitened rows have exactly
/// identity second moments up to rounding.
pub fn whiten(rows: &[[f64; 3]]) -> Result<Whitened, IcaError> {
    let n = rows.len();
    if n < MIN_OBSERVATIONS {
        return Err(IcaError::TooFewObservations {
            min: MIN_OBSERVATIONS,
            got: n,
        });
    }
    let mut mean = Vector3::zeros();
    for r in rows {
        mean += Vector3::new(r[0], r[1], r[2]);
    }
    mean /= n as f64;
    let mut cov = Matrix3::zeros();
    for r in rows {
        let c = Vector3::new(r[0], r[1], r[2]) - mean;
        cov += c * c.transpose();
    }
    cov /= n as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = Vector3::from_fn(|i, _| eig.eigenvalues[order[i]]);
    let vecs = Matrix3::from_fn(|r, c| eig.eigenvectors[(r, order[c])]);

    if !(vals[0] > 0.0) || !(vals[2] > 1e-12 * vals[0]) {
        return Err(IcaError::RankDeficient([vals[0], vals[1], vals[2]]));
    }
    let inv_sqrt = Matrix3::from_diagonal(&vals.map(|v| 1.0 / v.sqrt()));
    let transform = WhiteningTransform {
        mean,
        matrix: inv_sqrt * vecs.transpose(),
        eigenvalues: vals,
        eigenvectors: vecs,
    };
    let data = rows.iter().map(|r| transform.apply(r)).collect();
    Ok(Whitened { transform, data })
}

#[cfg(test)]
pub(crate) fn covariance(rows: &[[f64; 3]]) -> Matrix3<f64> {
    let n = rows.len() as f64;
    let mut mean = [0.0; 3];
    for r in rows {
        for k in 0..3 {
            mean[k] += r[k] / n;
        }
    }
    Matrix3::from_fn(|i, j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / n)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn gaussian_rows(n: usize, seed: u64, scale: [f64; 3]) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                std::array::from_fn(|k| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale[k] * z
                })
            })
            .collect()
    }

    #[test]
    fn whitened_covariance_is_identity() {
        let rows = gaussian_rows(500, 1, [3.0, 0.2, 1.0]);
        let mixed: Vec<[f64; 3]> = rows
            .iter()
            .map(|r| [r[0] + r[1], r[1] - 0.5 * r[2], r[2] + 0.3 * r[0] + 7.0])
            .collect();
        let w = whiten(&mixed).unwrap();
        let cov = covariance(&w.data);
        assert!((cov - Matrix3::identity()).abs().max() < 1e-8);
        let m: f64 = w.data.iter().map(|r| r[0] + r[1] + r[2]).sum::<f64>() / 500.0;
        assert!(m.abs() < 1e-12);
        assert!((w.transform.matrix * w.transform.dewhitening() - Matrix3::identity()).abs().max() < 1e-10);
    }

    #[test]
    fn already_white_input_gives_orthogonal_transform() {
        let pre = whiten(&gaussian_rows(400, 2, [1.0, 2.0, 0.5])).unwrap().data;
        let w = whiten(&pre).unwrap();
        let m = w.transform.matrix;
        assert!((m * m.transpose() - Matrix3::identity()).abs().max() < 1e-8);
        assert!((covariance(&w.data) - Matrix3::identity()).abs().max() < 1e-8);
    }

    #[test]
    fn diagonal_covariance_eigenvalues() {
        // Rows built so the 1/T covariance is exactly diag(4, 1, 0.25).
        let base = whiten(&gaussian_rows(300, 3, [1.0, 1.0, 1.0])).unwrap().data;
        let rows: Vec<[f64; 3]> = base.iter().map(|r| [2.0 * r[0], r[1], 0.5 * r[2]]).collect();
        let w = whiten(&rows).unwrap();
        let ev = w.transform.eigenvalues;
        assert!((ev[0] - 4.0).abs() < 1e-8);
        assert!((ev[1] - 1.0).abs() < 1e-8);
        assert!((ev[2] - 0.25).abs() < 1e-8);
        for k in 0..3 {
            let var = w.data.iter().map(|r| r[k] * r[k]).sum::<f64>() / 300.0;
            assert!((var - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn duplicate_column_rank_deficient() {
        let rows: Vec<[f64; 3]> = gaussian_rows(100, 4, [1.0, 1.0, 1.0])
            .into_iter()
            .map(|r| [r[0], r[1], r[0]])
            .collect();
        assert!(matches!(whiten(&rows), Err(IcaError::RankDeficient(_))));
        assert!(matches!(
            whiten(&rows[..10]),
            Err(IcaError::TooFewObservations { .. })
        ));
    }
}
