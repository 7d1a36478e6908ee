//! Small dense symmetric-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalue floor below which a matrix is treated as singular.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= tol * scale
}

pub fn eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigen(m).eigenvalues.min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigen(m).eigenvalues.max()
}

/// `V f(D) V*` for a symmetric matrix.
pub fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = eigen(m);
    spectral_apply(&eig, f)
}

pub fn spectral_apply(
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    f: impl Fn(f64) -> f64,
) -> DMatrix<f64> {
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| f(l)));
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&d) * v.transpose()
}

/// Checks that every eigenvalue exceeds [`EIGEN_FLOOR`]; errors otherwise.
pub fn require_spd(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!("{what} has non-finite entries")));
    }
    let eig = eigen(m);
    let lo = eig.eigenvalues.min();
    if lo <= EIGEN_FLOOR {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} has eigenvalue {lo:e} below floor {EIGEN_FLOOR:e}"
        )));
    }
    Ok(eig)
}

pub fn sqrt_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(spectral_apply(&require_spd(m, what)?, f64::sqrt))
}

pub fn inv_sqrt_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(spectral_apply(&require_spd(m, what)?, |l| 1.0 / l.sqrt()))
}

pub fn inv_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(spectral_apply(&require_spd(m, what)?, |l| 1.0 / l))
}

/// Square root of a positive semidefinite matrix; negative eigenvalues are
/// clamped to zero. Returns the root and the largest clamped magnitude.
pub fn sqrt_psd_clamped(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = eigen(m);
    let clamped = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l < 0.0)
        .fold(0.0_f64, |acc, &l| acc.max(-l));
    (spectral_apply(&eig, |l| l.max(0.0).sqrt()), clamped)
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
