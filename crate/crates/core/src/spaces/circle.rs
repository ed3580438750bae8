use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use super::{FiberLog, GroupSpec, HomogeneousSpace};
use crate::error::{Error, Result};
use crate::float::rem_euclid;
use crate::lie::{Abelian, LieGroup};
use crate::vector::AlgebraVector;

/// The circle ℝ/2πℤ as a quotient of the abelian line. Fibers are the lattices `v + 2πℤ`.
#[derive(Clone, Debug)]
pub struct Circle {
    spec: GroupSpec<Abelian>,
}

impl Circle {
    pub fn new(spec: GroupSpec<Abelian>) -> Result<Self> {
        if spec.dim() != 1 {
            return Err(Error::Dimension { expected: 1, got: spec.dim() });
        }
        Ok(Self { spec })
    }
}

impl HomogeneousSpace for Circle {
    type Group = Abelian;
    type Base = f64;
    type Fiber = i64;

    fn spec(&self) -> &GroupSpec<Abelian> {
        &self.spec
    }

    fn name(&self) -> String {
        "circle".into()
    }

    fn base_dim(&self) -> usize {
        1
    }

    fn check_base(&self, v: &f64) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::InvalidInput("non-finite angle".into()));
        }
        Ok(())
    }

    fn project(&self, g: &AlgebraVector) -> f64 {
        rem_euclid(g[0], TAU)
    }

    fn fiber_point(&self, v: &f64, k: &i64) -> Result<AlgebraVector> {
        self.check_base(v)?;
        AlgebraVector::from_slice(&[v + TAU * *k as f64])
    }

    fn fiber_log(&self, y: &AlgebraVector, v: &f64) -> Result<FiberLog<i64>> {
        self.check_base(v)?;
        let u = (y[0] - v) / TAU;
        let k = libm::round(u);
        let tie = libm::fabs(libm::fabs(u - libm::floor(u)) - 0.5) < 1e-12;
        let k = if tie { libm::floor(u) } else { k } as i64;
        let w = self.spec.group().compose(&self.spec.group().inverse(&self.fiber_point(v, &k)?), y);
        Ok(FiberLog { w, coord: k, tie })
    }

    fn fiber_jacobian_det(&self, _w: &AlgebraVector) -> Result<f64> {
        Ok(1.0)
    }

    fn base_distance(&self, a: &f64, b: &f64) -> f64 {
        let d = rem_euclid(a - b, TAU);
        d.min(TAU - d)
    }

    fn vertical_basis(&self) -> Vec<AlgebraVector> {
        vec![]
    }

    fn horizontal_basis(&self) -> Vec<AlgebraVector> {
        vec![AlgebraVector::basis(1, 0)]
    }

    fn base_coords(&self, v: &f64) -> Vec<f64> {
        vec![*v]
    }

    fn fiber_coords(&self, k: &i64) -> Vec<f64> {
        vec![*k as f64]
    }
}
