use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Pca {
    /// k×D, rows orthonormal.
    pub components: DMatrix<f64>,
    /// N×k, centered data times componentsᵀ.
    pub projected: DMatrix<f64>,
    /// Non-increasing covariance eigenvalues, length k.
    pub explained_variance: Vec<f64>,
    pub mean: DVector<f64>,
}

/// Sample covariance (N−1 normalization) of the rows of `data`, plus the column means.
pub fn covariance(data: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = data.nrows();
    let mean = data.row_mean().transpose();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (cov, mean)
}

/// Principal components via dense eigendecomposition of the covariance.
///
/// Data is centered but not whitened. Each component's sign is fixed so that
/// its largest-magnitude entry is positive.
pub fn pca_project(data: &DMatrix<f64>, k: usize) -> Result<Pca> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!("PCA needs N >= 2, got {n}")));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidK { k, max: n.min(d) });
    }
    let (cov, mean) = covariance(data);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = DMatrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(row, j)] = sign * v[j];
        }
        // Round-off can leave tiny negative eigenvalues on rank-deficient data.
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }

    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let projected = centered * components.transpose();
    Ok(Pca {
        components,
        projected,
        explained_variance,
        mean,
    })
}
