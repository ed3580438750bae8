use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{Matrix3, SymmetricEigen};

use super::{FiberLog, GroupSpec, HomogeneousSpace};
use crate::error::{Error, Result};
use crate::lie::Gl3;
use crate::linalg::{check_spd, spd_inv_sqrt, spd_log, spd_sqrt, symmetrize};
use crate::vector::AlgebraVector;

/// SPD(3) = GL₊(3)/SO(3) with `π(g) = g gᵀ`. The fiber over `V` is `V^{1/2}·SO(3)`.
#[derive(Clone, Debug)]
pub struct Spd3 {
    spec: GroupSpec<Gl3>,
}

impl Spd3 {
    pub fn new(spec: GroupSpec<Gl3>) -> Self {
        Self { spec }
    }
}

fn sym_to_alg(m: &Matrix3<f64>) -> AlgebraVector {
    let mut v = AlgebraVector::zeros(9);
    for i in 0..3 {
        for j in 0..3 {
            v[3 * i + j] = m[(i, j)];
        }
    }
    v
}

impl HomogeneousSpace for Spd3 {
    type Group = Gl3;
    type Base = Matrix3<f64>;
    type Fiber = Matrix3<f64>;

    fn spec(&self) -> &GroupSpec<Gl3> {
        &self.spec
    }

    fn name(&self) -> String {
        "spd3".into()
    }

    fn base_dim(&self) -> usize {
        6
    }

    fn check_base(&self, v: &Matrix3<f64>) -> Result<()> {
        check_spd(v)
    }

    fn project(&self, g: &Matrix3<f64>) -> Matrix3<f64> {
        g * g.transpose()
    }

    fn fiber_point(&self, v: &Matrix3<f64>, s: &Matrix3<f64>) -> Result<Matrix3<f64>> {
        if (s.transpose() * s - Matrix3::identity()).norm() > 1e-9 || s.determinant() <= 0.0 {
            return Err(Error::InvalidInput("fiber coordinate must be a rotation".into()));
        }
        Ok(spd_sqrt(v)? * s)
    }

    /// Polar factor of `V^{-1/2} y`: with `V^{-1/2} y = R S`, the nearest point is
    /// `V^{1/2} R` and `v̄⁻¹ y = S`, so `w = log S` is symmetric.
    fn fiber_log(&self, y: &Matrix3<f64>, v: &Matrix3<f64>) -> Result<FiberLog<Matrix3<f64>>> {
        let m = spd_inv_sqrt(v)? * y;
        if !(m.determinant() > 0.0) {
            return Err(Error::InvalidInput("point is not in GL+(3)".into()));
        }
        let eig = SymmetricEigen::new(symmetrize(&(m.transpose() * m)));
        let q = eig.eigenvectors;
        let s_inv = q * Matrix3::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / libm::sqrt(x))) * q.transpose();
        let log_s = q * Matrix3::from_diagonal(&eig.eigenvalues.map(|x| 0.5 * libm::log(x))) * q.transpose();
        Ok(FiberLog { w: sym_to_alg(&symmetrize(&log_s)), coord: m * s_inv, tie: false })
    }

    /// `Π_{i<j} sinh(λ_i - λ_j)/(λ_i - λ_j)` over eigenvalues of the symmetric part of `w`.
    fn fiber_jacobian_det(&self, w: &AlgebraVector) -> Result<f64> {
        let m = Matrix3::from_row_slice(w.as_slice());
        let lam = SymmetricEigen::new(symmetrize(&m)).eigenvalues;
        let shc = |x: f64| if libm::fabs(x) < 1e-5 { 1.0 + x * x / 6.0 } else { libm::sinh(x) / x };
        Ok(shc(lam[0] - lam[1]) * shc(lam[0] - lam[2]) * shc(lam[1] - lam[2]))
    }

    /// `|½ log(a^{-1/2} b a^{-1/2})|_F`.
    fn base_distance(&self, a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        match spd_inv_sqrt(a).and_then(|r| spd_log(&(r * b * r))) {
            Ok(l) => 0.5 * l.norm(),
            Err(_) => f64::NAN,
        }
    }

    fn vertical_basis(&self) -> Vec<AlgebraVector> {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|&(i, j)| {
                let mut v = AlgebraVector::zeros(9);
                v[3 * i + j] = s;
                v[3 * j + i] = -s;
                v
            })
            .collect()
    }

    fn horizontal_basis(&self) -> Vec<AlgebraVector> {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let mut out: Vec<AlgebraVector> = (0..3).map(|i| AlgebraVector::basis(9, 4 * i)).collect();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let mut v = AlgebraVector::zeros(9);
            v[3 * i + j] = s;
            v[3 * j + i] = s;
            out.push(v);
        }
        out
    }

    fn base_coords(&self, v: &Matrix3<f64>) -> Vec<f64> {
        v.transpose().as_slice().to_vec()
    }

    fn fiber_coords(&self, s: &Matrix3<f64>) -> Vec<f64> {
        s.transpose().as_slice().to_vec()
    }
}
