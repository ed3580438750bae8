//! Small dense helpers for 3x3 symmetric and orthogonal factors.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

pub(crate) fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub(crate) fn sym_apply(m: &Matrix3<f64>, f: impl Fn(f64) -> f64) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = Vector3::new(f(eig.eigenvalues[0]), f(eig.eigenvalues[1]), f(eig.eigenvalues[2]));
    eig.eigenvectors * Matrix3::from_diagonal(&d) * eig.eigenvectors.transpose()
}

pub(crate) fn sym_eigenvalues(m: &Matrix3<f64>) -> Vector3<f64> {
    SymmetricEigen::new(symmetrize(m)).eigenvalues
}

pub fn spd_sqrt(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    check_spd(m)?;
    Ok(sym_apply(m, libm::sqrt))
}

pub fn spd_inv_sqrt(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    check_spd(m)?;
    Ok(sym_apply(m, |x| 1.0 / libm::sqrt(x)))
}

pub fn spd_log(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    check_spd(m)?;
    Ok(sym_apply(m, libm::log))
}

pub fn sym_exp(m: &Matrix3<f64>) -> Matrix3<f64> {
    sym_apply(m, libm::exp)
}

pub(crate) fn check_spd(m: &Matrix3<f64>) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    if !m.iter().all(|x| x.is_finite()) || asym > 1e-9 * (1.0 + m.norm()) {
        return Err(Error::InvalidInput("matrix is not symmetric".into()));
    }
    if sym_eigenvalues(m).min() <= 0.0 {
        return Err(Error::InvalidInput("matrix is not positive definite".into()));
    }
    Ok(())
}

/// Orthogonal polar factor `m (mᵀm)^{-1/2}`.
pub fn polar_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let gram = m.transpose() * m;
    let eig = SymmetricEigen::new(symmetrize(&gram));
    if eig.eigenvalues.min() <= 1e-300 {
        return Err(Error::Numerical { what: "polar decomposition", residual: eig.eigenvalues.min() });
    }
    let d = eig.eigenvalues.map(|x| 1.0 / libm::sqrt(x));
    Ok(m * eig.eigenvectors * Matrix3::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Pulls a nearly orthogonal matrix back onto O(3) with Newton's polar iteration.
pub(crate) fn reorthogonalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut r = *m;
    for _ in 0..8 {
        let err = (r.transpose() * r - Matrix3::identity()).norm();
        if err < 1e-15 {
            break;
        }
        match r.try_inverse() {
            Some(inv) => r = (r + inv.transpose()) * 0.5,
            None => return polar_rotation(m).unwrap_or(*m),
        }
    }
    r
}

pub(crate) fn dmatrix_is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}
