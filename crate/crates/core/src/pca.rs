//! Vanilla PCA: the top-`d` eigenvectors of the covariance. Serves as the
//! unconstrained baseline, the warm start, and the projection on which the
//! kernel bandwidth is chosen.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::objective::Covariance;
use crate::stiefel::StiefelPoint;
use crate::{Error, Result};

/// Eigenvalues in decreasing order with matching eigenvector columns. Each
/// column's largest-magnitude entry is made positive so the output is
/// deterministic.
pub fn sorted_eigen(cov: &Covariance) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(cov.matrix().clone());
    let p = cov.dim();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Loading matrix of the leading `d` principal components.
pub fn vanilla_pca(cov: &Covariance, d: usize) -> Result<StiefelPoint> {
    let p = cov.dim();
    if d == 0 || d >= p {
        return Err(Error::InvalidArgument(format!(
            "target dimension must satisfy 1 ≤ d < p = {p}, got {d}"
        )));
    }
    let (_, vectors) = sorted_eigen(cov);
    StiefelPoint::orthonormalize(vectors.columns(0, d).clone_owned())
}

/// Sum of the `d` largest eigenvalues.
pub fn top_eigenvalue_mass(cov: &Covariance, d: usize) -> f64 {
    sorted_eigen(cov).0.iter().take(d).sum()
}
