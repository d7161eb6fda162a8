use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear projection onto the top principal components of a set of vectors.
///
/// Rows of `components` are orthonormal and ordered by decreasing explained variance.
/// Each row's first non-negligible coordinate is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub target_dim: usize,
    /// Variance captured by each component, same order as `components`.
    #[serde(default)]
    pub explained_variance: Vec<f64>,
}

const SIGN_EPS: f64 = 1e-12;

pub fn fit_pca(raw_vectors: &[Vec<f64>], target_dim: usize) -> Result<PcaModel> {
    let n = raw_vectors.len();
    if n < target_dim + 1 {
        return Err(Error::InsufficientData {
            needed: target_dim + 1,
            got: n,
        });
    }
    let dim = raw_vectors[0].len();
    if let Some(bad) = raw_vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    if dim < target_dim {
        return Err(Error::InvalidConfig(format!(
            "raw dimension {dim} is smaller than target dimension {target_dim}"
        )));
    }

    let mut mean = vec![0.0; dim];
    for v in raw_vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |r, c| raw_vectors[r][c] - mean[c]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eigen = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(target_dim);
    let mut explained_variance = Vec::with_capacity(target_dim);
    for &idx in order.iter().take(target_dim) {
        let mut row: Vec<f64> = eigen.eigenvectors.column(idx).iter().copied().collect();
        if let Some(first) = row.iter().find(|x| x.abs() > SIGN_EPS) {
            if *first < 0.0 {
                row.iter_mut().for_each(|x| *x = -*x);
            }
        }
        components.push(row);
        explained_variance.push(eigen.eigenvalues[idx].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        target_dim,
        explained_variance,
    })
}

impl PcaModel {
    pub fn raw_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.raw_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.raw_dim(),
                found: v.len(),
            });
        }
        let centered = DVector::from_iterator(v.len(), v.iter().zip(&self.mean).map(|(x, m)| x - m));
        Ok(self
            .components
            .iter()
            .map(|row| DVector::from_column_slice(row).dot(&centered))
            .collect())
    }

    /// Maps a reduced vector back into the raw space.
    pub fn reconstruct(&self, reduced: &[f64]) -> Result<Vec<f64>> {
        if reduced.len() != self.components.len() {
            return Err(Error::DimensionMismatch {
                expected: self.components.len(),
                found: reduced.len(),
            });
        }
        let mut out = self.mean.clone();
        for (coef, row) in reduced.iter().zip(&self.components) {
            for (o, r) in out.iter_mut().zip(row) {
                *o += coef * r;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::seed;

    fn random_matrix(rows: usize, cols: usize, s: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(s);
        (0..rows)
            .map(|_| (0..cols).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn constant_data_has_zero_projections() {
        let v: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
        let mut rng = seed::rng(3);
        let data: Vec<Vec<f64>> = (0..40)
            .map(|_| v.iter().map(|x| x + 1e-9 * rng.random::<f64>()).collect())
            .collect();
        let pca = fit_pca(&data, 4).unwrap();
        for (m, x) in pca.mean.iter().zip(&v) {
            assert_abs_diff_eq!(m, x, epsilon = 1e-8);
        }
        for row in &data {
            for p in pca.project(row).unwrap() {
                assert!(p.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn recovers_known_axis_with_positive_sign() {
        let data: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 - 9.5;
                let mut v = vec![0.0; 8];
                v[0] = t;
                v[1] = t;
                v
            })
            .collect();
        let pca = fit_pca(&data, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(pca.components[0][0], h, epsilon = 1e-10);
        assert_abs_diff_eq!(pca.components[0][1], h, epsilon = 1e-10);
        for x in &pca.components[0][2..] {
            assert_abs_diff_eq!(*x, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn insufficient_data_is_an_error() {
        let data = random_matrix(5, 8, 1);
        assert!(matches!(
            fit_pca(&data, 5),
            Err(Error::InsufficientData { needed: 6, got: 5 })
        ));
    }

    #[test]
    fn rows_are_orthonormal() {
        let pca = fit_pca(&random_matrix(100, 64, 11), 32).unwrap();
        for (a, ra) in pca.components.iter().enumerate() {
            for (b, rb) in pca.components.iter().enumerate() {
                let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expected, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn explained_variance_matches_svd() {
        // Independent route: singular values of the centered data matrix.
        let data = random_matrix(100, 64, 5);
        let pca = fit_pca(&data, 32).unwrap();

        let n = data.len();
        let mean: Vec<f64> = (0..64).map(|c| data.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
        let centered = DMatrix::from_fn(n, 64, |r, c| data[r][c] - mean[c]);
        let mut sv: Vec<f64> = centered.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let oracle: f64 = sv.iter().take(32).map(|s| s * s / (n as f64 - 1.0)).sum();

        let projected_var: f64 = (0..32)
            .map(|k| {
                let proj: Vec<f64> = data.iter().map(|r| pca.project(r).unwrap()[k]).collect();
                proj.iter().map(|p| p * p).sum::<f64>() / (n as f64 - 1.0)
            })
            .sum();
        assert_abs_diff_eq!(projected_var, oracle, epsilon = 1e-6);
    }

    #[test]
    fn project_mean_and_axes() {
        let pca = fit_pca(&random_matrix(50, 16, 2), 8).unwrap();
        for p in pca.project(&pca.mean).unwrap() {
            assert_abs_diff_eq!(p, 0.0, epsilon = 1e-12);
        }
        let shifted: Vec<f64> = pca.mean.iter().zip(&pca.components[0]).map(|(m, c)| m + c).collect();
        let e0 = pca.project(&shifted).unwrap();
        assert_abs_diff_eq!(e0[0], 1.0, epsilon = 1e-9);
        for x in &e0[1..] {
            assert_abs_diff_eq!(*x, 0.0, epsilon = 1e-9);
        }
        assert!(matches!(pca.project(&[0.0; 3]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn project_matches_matmul() {
        let pca = fit_pca(&random_matrix(50, 16, 9), 8).unwrap();
        let v = &random_matrix(1, 16, 99)[0];
        let comps = DMatrix::from_fn(8, 16, |r, c| pca.components[r][c]);
        let centered = DVector::from_iterator(16, v.iter().zip(&pca.mean).map(|(x, m)| x - m));
        let oracle = comps * centered;
        for (p, o) in pca.project(v).unwrap().iter().zip(oracle.iter()) {
            assert_abs_diff_eq!(p, o, epsilon = 1e-9);
        }
    }

    #[test]
    fn reconstructs_points_in_a_subspace() {
        let basis = random_matrix(3, 12, 21);
        let coeffs = random_matrix(30, 3, 22);
        let offset = &random_matrix(1, 12, 23)[0];
        let data: Vec<Vec<f64>> = coeffs
            .iter()
            .map(|c| {
                (0..12)
                    .map(|d| offset[d] + (0..3).map(|k| c[k] * basis[k][d]).sum::<f64>())
                    .collect()
            })
            .collect();
        let pca = fit_pca(&data, 3).unwrap();
        for v in &data {
            let back = pca.reconstruct(&pca.project(v).unwrap()).unwrap();
            for (a, b) in back.iter().zip(v) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-6);
            }
        }
    }
}
