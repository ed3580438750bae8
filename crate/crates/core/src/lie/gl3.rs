use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3};

use super::LieGroup;
use crate::error::{Error, Result};
use crate::vector::AlgebraVector;

/// Identity component GL₊(3). Algebra coordinates are the 9 matrix entries, row-major.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Gl3;

const MAX_SQRTS: usize = 12;
const SERIES_TERMS: usize = 20;
const LOG_RESIDUAL_TOL: f64 = 1e-10;
/// Finite-difference step for `dexp_det`.
pub const GL3_DEXP_FD_STEP: f64 = 1e-5;

pub(crate) fn gl3_hat(x: &AlgebraVector) -> Matrix3<f64> {
    debug_assert_eq!(x.len(), 9);
    Matrix3::from_row_slice(x.as_slice())
}

pub(crate) fn gl3_vee(m: &Matrix3<f64>) -> AlgebraVector {
    let mut v = AlgebraVector::zeros(9);
    for i in 0..3 {
        for j in 0..3 {
            v[3 * i + j] = m[(i, j)];
        }
    }
    v
}

/// Scaling and squaring with a Taylor core.
pub fn gl3_exp(x: &Matrix3<f64>) -> Matrix3<f64> {
    let norm = x.norm();
    let mut squarings = 0;
    let mut scaled = *x;
    if norm > 0.5 {
        squarings = libm::ceil(libm::log2(norm / 0.5)) as i32;
        scaled = x / libm::pow(2.0, squarings as f64);
    }
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for k in 1..=16 {
        term = term * scaled / k as f64;
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

fn sqrt_denman_beavers(a: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let mut y = *a;
    let mut z = Matrix3::identity();
    for _ in 0..100 {
        let yi = y.try_inverse().ok_or(Error::Numerical { what: "gl3 square root", residual: f64::INFINITY })?;
        let zi = z.try_inverse().ok_or(Error::Numerical { what: "gl3 square root", residual: f64::INFINITY })?;
        let y_next = (y + zi) * 0.5;
        let z_next = (z + yi) * 0.5;
        let delta = (y_next - y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm() {
            break;
        }
    }
    let residual = (y * y - a).norm() / a.norm();
    if !(residual < 1e-12) {
        return Err(Error::Numerical { what: "gl3 square root", residual });
    }
    Ok(y)
}

/// Principal logarithm by inverse scaling and squaring.
pub fn gl3_log(g: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if !g.iter().all(|x| x.is_finite()) || g.determinant() <= 0.0 {
        return Err(Error::InvalidInput("gl3 log needs a finite matrix with positive determinant".into()));
    }
    let id = Matrix3::identity();
    let mut root = *g;
    let mut roots = 0;
    while (root - id).norm() > 0.2 && roots < MAX_SQRTS {
        root = sqrt_denman_beavers(&root)?;
        roots += 1;
    }
    let x = root - id;
    if x.norm() >= 1.0 {
        return Err(Error::Numerical { what: "gl3 log scaling", residual: x.norm() });
    }
    let mut power = x;
    let mut sum = x;
    for k in 2..=SERIES_TERMS {
        power *= x;
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        sum += power * (sign / k as f64);
    }
    let log = sum * libm::pow(2.0, roots as f64);
    let residual = (gl3_exp(&log) - g).norm() / g.norm();
    if !(residual < LOG_RESIDUAL_TOL) {
        return Err(Error::Numerical { what: "gl3 log", residual });
    }
    Ok(log)
}

impl LieGroup for Gl3 {
    type Point = Matrix3<f64>;

    fn name(&self) -> String {
        "gl3".into()
    }

    fn dim(&self) -> usize {
        9
    }

    fn identity(&self) -> Matrix3<f64> {
        Matrix3::identity()
    }

    fn compose(&self, a: &Matrix3<f64>, b: &Matrix3<f64>) -> Matrix3<f64> {
        a * b
    }

    fn inverse(&self, a: &Matrix3<f64>) -> Matrix3<f64> {
        a.try_inverse().unwrap_or_else(|| Matrix3::from_element(f64::NAN))
    }

    fn exp(&self, x: &AlgebraVector) -> Matrix3<f64> {
        gl3_exp(&gl3_hat(x))
    }

    fn log(&self, g: &Matrix3<f64>) -> Result<AlgebraVector> {
        gl3_log(g).map(|m| gl3_vee(&m))
    }

    fn bracket(&self, x: &AlgebraVector, y: &AlgebraVector) -> AlgebraVector {
        let (a, b) = (gl3_hat(x), gl3_hat(y));
        gl3_vee(&(a * b - b * a))
    }

    fn field(&self, x: &Matrix3<f64>, xi: &AlgebraVector) -> Matrix3<f64> {
        x * gl3_hat(xi)
    }

    fn axpy(&self, x: &Matrix3<f64>, alpha: f64, y: &Matrix3<f64>) -> Matrix3<f64> {
        x + y * alpha
    }

    fn adjoint(&self, g: &Matrix3<f64>) -> DMatrix<f64> {
        let gi = self.inverse(g);
        let mut m = DMatrix::zeros(9, 9);
        for j in 0..9 {
            let col = gl3_vee(&(g * gl3_hat(&AlgebraVector::basis(9, j)) * gi));
            for i in 0..9 {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    /// Central differences of `exp(x)⁻¹ exp(x ± h e_j)` for each column.
    fn dexp_det(&self, x: &AlgebraVector) -> Result<f64> {
        let h = GL3_DEXP_FD_STEP;
        let base_inv = self.inverse(&self.exp(x));
        let mut jac = DMatrix::zeros(9, 9);
        for j in 0..9 {
            let e = AlgebraVector::basis(9, j) * h;
            let plus = gl3_exp(&gl3_hat(&(*x + e)));
            let minus = gl3_exp(&gl3_hat(&(*x - e)));
            let col = gl3_vee(&(base_inv * (plus - minus) / (2.0 * h)));
            for i in 0..9 {
                jac[(i, j)] = col[i];
            }
        }
        let det = jac.determinant();
        if !det.is_finite() {
            return Err(Error::Numerical { what: "gl3 dexp determinant", residual: det });
        }
        Ok(det)
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
        if !g.iter().all(|x| x.is_finite()) || g.determinant() <= 0.0 {
            return Err(Error::InvalidInput("not in GL+(3)".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::dexp_series;

    fn sample() -> AlgebraVector {
        AlgebraVector::from_slice(&[0.3, -0.2, 0.1, 0.05, -0.4, 0.25, -0.1, 0.2, 0.15]).unwrap()
    }

    #[test]
    fn exp_of_diagonal() {
        let m = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, -2.0, 0.5));
        let e = gl3_exp(&m);
        let expect = Matrix3::from_diagonal(&nalgebra::Vector3::new(1f64.exp(), (-2f64).exp(), 0.5f64.exp()));
        assert!((e - expect).amax() < 1e-13);
    }

    #[test]
    fn log_exp_round_trip() {
        let x = gl3_hat(&sample()) * 2.0;
        let back = gl3_log(&gl3_exp(&x)).unwrap();
        assert!((back - x).amax() < 1e-10);
    }

    #[test]
    fn log_rejects_negative_determinant() {
        let g = Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, 1.0, 1.0));
        assert!(gl3_log(&g).is_err());
    }

    #[test]
    fn log_rejects_rotation_by_pi() {
        // Real logarithm does not exist uniquely; the iteration must refuse.
        let g = Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, -1.0, 1.0));
        assert!(gl3_log(&g).is_err());
    }

    #[test]
    fn finite_difference_dexp_det_matches_series() {
        let x = sample();
        let fd = Gl3.dexp_det(&x).unwrap();
        let series = dexp_series(&Gl3, &x).determinant();
        assert!((fd - series).abs() < 1e-8 * series.abs(), "{fd} vs {series}");
    }

    #[test]
    fn adjoint_is_conjugation() {
        let g = Gl3.exp(&sample());
        let y = AlgebraVector::from_slice(&[1.0, 0.0, 2.0, 0.0, -1.0, 0.0, 0.5, 0.0, 0.0]).unwrap();
        let ad = Gl3.adjoint(&g);
        let lhs = &ad * nalgebra::DVector::from_column_slice(y.as_slice());
        let rhs = gl3_vee(&(g * gl3_hat(&y) * g.try_inverse().unwrap()));
        for i in 0..9 {
            assert!((lhs[i] - rhs[i]).abs() < 1e-12);
        }
    }
}
