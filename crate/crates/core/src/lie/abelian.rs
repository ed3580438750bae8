use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::LieGroup;
use crate::error::{Error, Result};
use crate::vector::{AlgebraVector, MAX_DIM};

/// Additive group ℝ^d. Flat, so bridges and heat kernels are Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Abelian {
    dim: usize,
}

impl Abelian {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidInput(format!("abelian dimension must be in 1..={MAX_DIM}, got {dim}")));
        }
        Ok(Self { dim })
    }
}

impl LieGroup for Abelian {
    type Point = AlgebraVector;

    fn name(&self) -> String {
        format!("abelian:{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> AlgebraVector {
        AlgebraVector::zeros(self.dim)
    }

    fn compose(&self, a: &AlgebraVector, b: &AlgebraVector) -> AlgebraVector {
        *a + *b
    }

    fn inverse(&self, a: &AlgebraVector) -> AlgebraVector {
        -*a
    }

    fn exp(&self, x: &AlgebraVector) -> AlgebraVector {
        *x
    }

    fn log(&self, g: &AlgebraVector) -> Result<AlgebraVector> {
        Ok(*g)
    }

    fn bracket(&self, _x: &AlgebraVector, _y: &AlgebraVector) -> AlgebraVector {
        AlgebraVector::zeros(self.dim)
    }

    fn field(&self, _x: &AlgebraVector, xi: &AlgebraVector) -> AlgebraVector {
        *xi
    }

    fn axpy(&self, x: &AlgebraVector, alpha: f64, y: &AlgebraVector) -> AlgebraVector {
        *x + *y * alpha
    }

    fn adjoint(&self, _g: &AlgebraVector) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }

    fn dexp_det(&self, _x: &AlgebraVector) -> Result<f64> {
        Ok(1.0)
    }

    fn ambient(&self, g: &AlgebraVector) -> Vec<f64> {
        g.as_slice().to_vec()
    }

    fn from_ambient(&self, entries: &[f64]) -> Result<AlgebraVector> {
        if entries.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: entries.len() });
        }
        let g = AlgebraVector::from_slice(entries)?;
        self.check_point(&g)?;
        Ok(g)
    }

    fn check_point(&self, g: &AlgebraVector) -> Result<()> {
        if g.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: g.len() });
        }
        if !g.is_finite() {
            return Err(Error::InvalidInput("non-finite point".into()));
        }
        Ok(())
    }
}
