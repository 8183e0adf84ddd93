//! Eigenvalue clipping and symmetric square-root factors.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenvalue floor applied by [`nearest_psd`].
pub const EIGEN_FLOOR: f64 = 1e-10;

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Returns the matrix with negative eigenvalues raised to [`EIGEN_FLOOR`] and a
/// flag telling whether any change was made.
///
/// Matrices whose smallest eigenvalue is already non-negative come back
/// untouched.
pub fn nearest_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.min() >= 0.0 {
        return (m.clone(), false);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
    let v = &eig.eigenvectors;
    let repaired = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    (symmetrize(&repaired), true)
}

/// Returns `F` with `F Fᵀ = m`.
///
/// Tries Cholesky first and falls back to `V sqrt(Λ)` from the symmetric
/// eigendecomposition, which also handles singular PSD input.
pub fn symmetric_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::dims(format!("covariance is {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("covariance has non-finite entries".into()));
    }
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.min() < -1e-8 * scale {
        return Err(Error::Factorization(format!(
            "covariance is not positive semidefinite (min eigenvalue {:.3e})",
            eig.eigenvalues.min()
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}
