use core::fmt;
use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Largest algebra dimension supported (gl(3)).
pub const MAX_DIM: usize = 9;

/// Coordinates of a Lie algebra element in the standard basis of its group.
///
/// Fixed capacity so the integrators never allocate per step.
#[derive(Clone, Copy, PartialEq)]
pub struct AlgebraVector {
    len: usize,
    data: [f64; MAX_DIM],
}

impl AlgebraVector {
    pub fn zeros(len: usize) -> Self {
        assert!(len <= MAX_DIM, "algebra dimension {len} exceeds {MAX_DIM}");
        Self { len, data: [0.0; MAX_DIM] }
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        if s.len() > MAX_DIM || s.is_empty() {
            return Err(Error::Dimension { expected: MAX_DIM, got: s.len() });
        }
        let mut v = Self::zeros(s.len());
        v.data[..s.len()].copy_from_slice(s);
        Ok(v)
    }

    pub fn basis(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.data[i] = 1.0;
        v
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.len]
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data[..self.len]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.len, other.len);
        self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        out.as_mut_slice().iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.as_slice().iter().zip(other.as_slice()).fold(0.0, |m, (a, b)| f64::max(m, libm::fabs(a - b)))
    }
}

impl fmt::Debug for AlgebraVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Index<usize> for AlgebraVector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl IndexMut<usize> for AlgebraVector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.as_mut_slice()[i]
    }
}

impl Add for AlgebraVector {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for AlgebraVector {
    fn add_assign(&mut self, rhs: Self) {
        debug_assert_eq!(self.len, rhs.len);
        for i in 0..self.len {
            self.data[i] += rhs.data[i];
        }
    }
}

impl Sub for AlgebraVector {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        debug_assert_eq!(self.len, rhs.len);
        for i in 0..self.len {
            self.data[i] -= rhs.data[i];
        }
        self
    }
}

impl Neg for AlgebraVector {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul<f64> for AlgebraVector {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}
