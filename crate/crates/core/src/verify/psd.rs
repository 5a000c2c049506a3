use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expfam::{symmetrize, Matrix};

#[derive(Clone, Debug, Serialize)]
pub struct PsdVerdict {
    pub psd: bool,
    pub min_eigenvalue: f64,
    /// The verdict accepts eigenvalues down to `-threshold`.
    pub threshold: f64,
    pub eigenvalues: Vec<f64>,
    /// Cholesky agrees with the eigenvalue verdict. `None` inside the
    /// tolerance band, where no factorization check is meaningful.
    pub factorization_agrees: Option<bool>,
}

/// PSD test with tolerance `tol` relative to the spectral norm of `m`.
pub fn psd_test(m: &Matrix, tol: f64) -> Result<PsdVerdict> {
    let scale = spectral_norm(m)?;
    psd_test_scaled(m, tol, scale)
}

/// PSD test accepting eigenvalues `>= -tol * scale`.
pub fn psd_test_scaled(m: &Matrix, tol: f64, scale: f64) -> Result<PsdVerdict> {
    if !m.iter().all(|x| x.is_finite()) || !scale.is_finite() {
        return Err(Error::NonFinite("matrix entries".into()));
    }
    if !m.is_square() {
        return Err(Error::Dimension { expected: m.nrows(), got: m.ncols() });
    }
    let s = symmetrize(m);
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(s.clone()).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    let min_eigenvalue = eigenvalues.first().copied().unwrap_or(0.0);
    let threshold = tol * scale;
    let psd = min_eigenvalue >= -threshold;
    let n = s.nrows();
    let factorization_agrees = if min_eigenvalue > threshold {
        Some(s.clone().cholesky().is_some())
    } else if min_eigenvalue < -threshold {
        let shifted = &s + Matrix::identity(n, n) * threshold;
        Some(shifted.cholesky().is_none())
    } else {
        None
    };
    Ok(PsdVerdict { psd, min_eigenvalue, threshold, eigenvalues, factorization_agrees })
}

pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("matrix entries".into()));
    }
    let s = symmetrize(m);
    Ok(SymmetricEigen::new(s).eigenvalues.iter().fold(0.0f64, |a, e| a.max(e.abs())))
}
