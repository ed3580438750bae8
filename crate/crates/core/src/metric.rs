//! Left-invariant metrics, stored as an SPD matrix `A` on algebra coordinates.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::dmatrix_is_symmetric;
use crate::vector::{AlgebraVector, MAX_DIM};

/// `⟨u, v⟩_A = uᵀ A v`. The driving noise uses the symmetric factor `A^{-1/2}`,
/// so the algebra increments have covariance `A⁻¹ dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricParam {
    a: DMatrix<f64>,
    chol: DMatrix<f64>,
    noise: DMatrix<f64>,
    det: f64,
}

impl MetricParam {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || d > MAX_DIM || !a.is_square() {
            return Err(Error::InvalidInput(format!("metric must be square with size 1..={MAX_DIM}")));
        }
        if !a.iter().all(|x| x.is_finite()) || !dmatrix_is_symmetric(&a, 1e-12) {
            return Err(Error::InvalidInput("metric is not symmetric".into()));
        }
        let a = (&a + a.transpose()) * 0.5;
        let chol =
            a.clone().cholesky().ok_or_else(|| Error::InvalidInput("metric is not positive definite".into()))?.l();
        let eig = SymmetricEigen::new(a.clone());
        if eig.eigenvalues.min() <= 0.0 {
            return Err(Error::InvalidInput("metric is not positive definite".into()));
        }
        let inv_sqrt = eig.eigenvalues.map(|x| 1.0 / libm::sqrt(x));
        let noise = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
        let det = eig.eigenvalues.iter().product();
        Ok(Self { a, chol, noise, det })
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, d))
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    /// Builds `A` from its upper triangle listed row by row.
    pub fn from_upper(d: usize, upper: &[f64]) -> Result<Self> {
        Self::new(sym_from_upper(d, upper)?)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = A`.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Symmetric `A^{-1/2}`; its columns are the driving directions.
    pub fn noise_factor(&self) -> &DMatrix<f64> {
        &self.noise
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn inner(&self, u: &AlgebraVector, v: &AlgebraVector) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for j in 0..d {
            let mut col = 0.0;
            for i in 0..d {
                col += u[i] * self.a[(i, j)];
            }
            s += col * v[j];
        }
        s
    }

    /// Same value as [`Self::inner`], computed as `(Lᵀu)·(Lᵀv)`.
    pub fn inner_cholesky(&self, u: &AlgebraVector, v: &AlgebraVector) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for j in 0..d {
            let (mut lu, mut lv) = (0.0, 0.0);
            for i in j..d {
                lu += self.chol[(i, j)] * u[i];
                lv += self.chol[(i, j)] * v[i];
            }
            s += lu * lv;
        }
        s
    }

    pub fn norm_sq(&self, u: &AlgebraVector) -> f64 {
        self.inner_cholesky(u, u)
    }

    pub fn norm(&self, u: &AlgebraVector) -> f64 {
        libm::sqrt(self.norm_sq(u))
    }

    /// `A^{-1/2} z`.
    pub fn apply_noise(&self, z: &AlgebraVector) -> AlgebraVector {
        let d = self.dim();
        let mut out = AlgebraVector::zeros(d);
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.noise[(i, j)] * z[j];
            }
            out[i] = s;
        }
        out
    }

    /// Upper-triangle entries, row by row.
    pub fn upper(&self) -> Vec<f64> {
        upper_entries(&self.a)
    }
}

pub fn sym_from_upper(d: usize, upper: &[f64]) -> Result<DMatrix<f64>> {
    if upper.len() != d * (d + 1) / 2 {
        return Err(Error::Dimension { expected: d * (d + 1) / 2, got: upper.len() });
    }
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            m[(i, j)] = upper[k];
            m[(j, i)] = upper[k];
            k += 1;
        }
    }
    Ok(m)
}

pub fn upper_entries(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            out.push(m[(i, j)]);
        }
    }
    out
}
