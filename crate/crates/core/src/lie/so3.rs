use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::LieGroup;
use crate::error::{Error, Result};
use crate::linalg::reorthogonalize;
use crate::vector::AlgebraVector;

/// Logs whose rotation angle comes within this of π are refused.
pub const BRANCH_MARGIN: f64 = 1e-6;

/// Rotation group SO(3) with coordinates `(a1, a2, a3) -> [[0,-a3,a2],[a3,0,-a1],[-a2,a1,0]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct So3;

pub fn so3_hat(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a[2], a[1], a[2], 0.0, -a[0], -a[1], a[0], 0.0)
}

/// Inverse of [`so3_hat`] on the skew part of `m`.
pub fn so3_vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// Rodrigues' formula.
pub fn so3_exp(a: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = a.norm_squared();
    let theta = libm::sqrt(theta2);
    let (s, c) = if theta < 1e-4 {
        (1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0, 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0)
    } else {
        (libm::sin(theta) / theta, (1.0 - libm::cos(theta)) / theta2)
    };
    let k = so3_hat(a);
    Matrix3::identity() + k * s + k * k * c
}

/// Principal logarithm; angles within [`BRANCH_MARGIN`] of π are a branch error.
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let skew = so3_vee(r);
    let sin_theta = skew.norm();
    let cos_theta = 0.5 * (r.trace() - 1.0);
    let theta = libm::atan2(sin_theta, cos_theta);
    if !theta.is_finite() {
        return Err(Error::Numerical { what: "so3 log", residual: f64::NAN });
    }
    if theta >= core::f64::consts::PI - BRANCH_MARGIN {
        return Err(Error::Branch { angle: theta });
    }
    let coef = if theta < 1e-5 { 1.0 + theta * theta / 6.0 } else { theta / sin_theta };
    Ok(skew * coef)
}

fn vec3(x: &AlgebraVector) -> Vector3<f64> {
    debug_assert_eq!(x.len(), 3);
    Vector3::new(x[0], x[1], x[2])
}

fn alg(v: &Vector3<f64>) -> AlgebraVector {
    AlgebraVector::from_slice(v.as_slice()).expect("3 coordinates")
}

impl LieGroup for So3 {
    type Point = Matrix3<f64>;

    fn name(&self) -> String {
        "so3".into()
    }

    fn dim(&self) -> usize {
        3
    }

    fn identity(&self) -> Matrix3<f64> {
        Matrix3::identity()
    }

    fn compose(&self, a: &Matrix3<f64>, b: &Matrix3<f64>) -> Matrix3<f64> {
        a * b
    }

    fn inverse(&self, a: &Matrix3<f64>) -> Matrix3<f64> {
        a.transpose()
    }

    fn exp(&self, x: &AlgebraVector) -> Matrix3<f64> {
        so3_exp(&vec3(x))
    }

    fn log(&self, g: &Matrix3<f64>) -> Result<AlgebraVector> {
        so3_log(g).map(|v| alg(&v))
    }

    fn bracket(&self, x: &AlgebraVector, y: &AlgebraVector) -> AlgebraVector {
        alg(&vec3(x).cross(&vec3(y)))
    }

    fn field(&self, x: &Matrix3<f64>, xi: &AlgebraVector) -> Matrix3<f64> {
        x * so3_hat(&vec3(xi))
    }

    fn axpy(&self, x: &Matrix3<f64>, alpha: f64, y: &Matrix3<f64>) -> Matrix3<f64> {
        x + y * alpha
    }

    fn retract(&self, x: &Matrix3<f64>) -> Matrix3<f64> {
        reorthogonalize(x)
    }

    fn adjoint(&self, g: &Matrix3<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 3, g.as_slice())
    }

    fn dexp_det(&self, x: &AlgebraVector) -> Result<f64> {
        Ok(so3_dexp_det(x.norm()))
    }

    fn ambient(&self, g: &Matrix3<f64>) -> Vec<f64> {
        g.transpose().as_slice().to_vec()
    }

    fn from_ambient(&self, entries: &[f64]) -> Result<Matrix3<f64>> {
        if entries.len() != 9 {
            return Err(Error::Dimension { expected: 9, got: entries.len() });
        }
        let g = Matrix3::from_row_slice(entries);
        self.check_point(&g)?;
        Ok(g)
    }

    fn check_point(&self, g: &Matrix3<f64>) -> Result<()> {
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("non-finite rotation".into()));
        }
        let res = (g.transpose() * g - Matrix3::identity()).norm();
        if res > 1e-9 || g.determinant() <= 0.0 {
            return Err(Error::InvalidInput(alloc::format!("not a rotation (orthogonality residual {res:e})")));
        }
        Ok(())
    }
}

/// `2(1 - cos θ)/θ²`, the Jacobian determinant of exp on SO(3).
pub(crate) fn so3_dexp_det(theta: f64) -> f64 {
    if theta < 1e-4 {
        let t2 = theta * theta;
        1.0 - t2 / 12.0 + t2 * t2 / 360.0
    } else {
        2.0 * (1.0 - libm::cos(theta)) / (theta * theta)
    }
}
