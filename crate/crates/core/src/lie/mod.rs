//! Matrix Lie groups, their algebras and the Jacobian of the exponential map.

mod abelian;
mod gl3;
mod so3;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Debug;

use nalgebra::DMatrix;

pub use abelian::Abelian;
pub use gl3::{gl3_exp, gl3_log, Gl3};
pub use so3::{so3_exp, so3_hat, so3_log, so3_vee, So3, BRANCH_MARGIN};

use crate::error::Result;
use crate::vector::AlgebraVector;

/// A matrix Lie group with left-invariant vector fields `V_i(x) = x e_i`.
///
/// Points live in the ambient matrix space so the integrators can take
/// affine combinations of them; `retract` pulls a point back onto the group
/// where the ambient scheme drifts off it.
pub trait LieGroup: Clone + Debug + Send + Sync {
    type Point: Copy + Debug + PartialEq + Send + Sync;

    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn identity(&self) -> Self::Point;
    fn compose(&self, a: &Self::Point, b: &Self::Point) -> Self::Point;
    fn inverse(&self, a: &Self::Point) -> Self::Point;
    fn exp(&self, x: &AlgebraVector) -> Self::Point;
    /// Principal logarithm. Fails outside the branch instead of guessing.
    fn log(&self, g: &Self::Point) -> Result<AlgebraVector>;
    fn bracket(&self, x: &AlgebraVector, y: &AlgebraVector) -> AlgebraVector;

    /// Ambient value of `Σ ξ^i V_i(x)`.
    fn field(&self, x: &Self::Point, xi: &AlgebraVector) -> Self::Point;
    /// `x + alpha * y` in the ambient space.
    fn axpy(&self, x: &Self::Point, alpha: f64, y: &Self::Point) -> Self::Point;
    fn retract(&self, x: &Self::Point) -> Self::Point {
        *x
    }

    /// Matrix of `Ad_g` in the standard algebra basis.
    fn adjoint(&self, g: &Self::Point) -> DMatrix<f64>;

    /// `det dexp_x`, the volume distortion of the exponential chart.
    fn dexp_det(&self, x: &AlgebraVector) -> Result<f64> {
        Ok(dexp_series(self, x).determinant())
    }

    /// Row-major ambient entries.
    fn ambient(&self, g: &Self::Point) -> Vec<f64>;
    fn from_ambient(&self, entries: &[f64]) -> Result<Self::Point>;
    /// Rejects non-finite points and points off the group.
    fn check_point(&self, g: &Self::Point) -> Result<()>;

    fn ambient_distance(&self, a: &Self::Point, b: &Self::Point) -> f64 {
        let sq: f64 = self.ambient(a).iter().zip(self.ambient(b)).map(|(x, y)| (x - y) * (x - y)).sum();
        libm::sqrt(sq)
    }
}

/// `log(x⁻¹ v)`: the algebra vector pointing from `x` to `v`.
pub fn group_log_to<G: LieGroup>(group: &G, x: &G::Point, v: &G::Point) -> Result<AlgebraVector> {
    group.log(&group.compose(&group.inverse(x), v))
}

/// Matrix of `ad_x` in the standard basis.
pub fn ad_matrix<G: LieGroup + ?Sized>(group: &G, x: &AlgebraVector) -> DMatrix<f64> {
    let d = group.dim();
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        let col = group.bracket(x, &AlgebraVector::basis(d, j));
        for i in 0..d {
            m[(i, j)] = col[i];
        }
    }
    m
}

/// Left-trivialised differential of exp, `Σ_k (-ad_x)^k / (k+1)!`.
pub fn dexp_series<G: LieGroup + ?Sized>(group: &G, x: &AlgebraVector) -> DMatrix<f64> {
    let d = group.dim();
    let neg_ad = -ad_matrix(group, x);
    let mut term = DMatrix::<f64>::identity(d, d);
    let mut sum = term.clone();
    for k in 1..60 {
        term = &term * &neg_ad / (k as f64 + 1.0);
        sum += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    sum
}

/// Jacobian determinant of the exponential map at `x`.
pub fn jacobian_det_exp<G: LieGroup>(group: &G, x: &AlgebraVector) -> Result<f64> {
    group.dexp_det(x)
}
