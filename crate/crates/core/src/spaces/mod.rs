//! Concrete groups with metrics, and homogeneous quotients `G/H` with their fibers.

mod circle;
mod s2;
mod spd;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Debug;

use nalgebra::DMatrix;

pub use circle::Circle;
pub use s2::{rz, s2_section, S2};
pub use spd::Spd3;

use crate::error::{Error, Result};
use crate::lie::{Abelian, Gl3, LieGroup, So3};
use crate::metric::MetricParam;
use crate::vector::AlgebraVector;

/// `C^k_ij` with `[b_i, b_j] = Σ_k C^k_ij b_k` for a basis `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureCoefficients {
    dim: usize,
    c: Vec<f64>,
}

impl StructureCoefficients {
    /// Coefficients of `basis`, whose coordinates in the standard basis are the columns of `b`.
    pub fn from_basis<G: LieGroup>(group: &G, b: &DMatrix<f64>) -> Result<Self> {
        let d = group.dim();
        let b_inv = b.clone().try_inverse().ok_or_else(|| Error::InvalidInput("basis is singular".into()))?;
        let col = |i: usize| {
            let mut v = AlgebraVector::zeros(d);
            for r in 0..d {
                v[r] = b[(r, i)];
            }
            v
        };
        let mut c = alloc::vec![0.0; d * d * d];
        for i in 0..d {
            for j in 0..d {
                let br = group.bracket(&col(i), &col(j));
                for k in 0..d {
                    let mut s = 0.0;
                    for r in 0..d {
                        s += b_inv[(k, r)] * br[r];
                    }
                    c[(i * d + j) * d + k] = s;
                }
            }
        }
        Ok(Self { dim: d, c })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c[(i * self.dim + j) * self.dim + k]
    }
}

/// A group together with a left-invariant metric.
#[derive(Clone, Debug)]
pub struct GroupSpec<G: LieGroup> {
    group: G,
    metric: MetricParam,
    structure: StructureCoefficients,
    v0: AlgebraVector,
}

impl<G: LieGroup> GroupSpec<G> {
    pub fn new(group: G, metric: MetricParam) -> Result<Self> {
        let d = group.dim();
        if metric.dim() != d {
            return Err(Error::Dimension { expected: d, got: metric.dim() });
        }
        let structure = StructureCoefficients::from_basis(&group, metric.noise_factor())?;
        // Σ_ij C^j_ij b_i, the Itô-free correction for non-unimodular algebras.
        let mut v0 = AlgebraVector::zeros(d);
        for i in 0..d {
            let trace: f64 = (0..d).map(|j| structure.get(i, j, j)).sum();
            for r in 0..d {
                v0[r] += trace * metric.noise_factor()[(r, i)];
            }
        }
        Ok(Self { group, metric, structure, v0 })
    }

    pub fn with_identity_metric(group: G) -> Result<Self> {
        let d = group.dim();
        Self::new(group, MetricParam::identity(d)?)
    }

    /// Same group, new metric.
    pub fn with_metric(&self, metric: MetricParam) -> Result<Self> {
        Self::new(self.group.clone(), metric)
    }

    pub fn group(&self) -> &G {
        &self.group
    }

    pub fn metric(&self) -> &MetricParam {
        &self.metric
    }

    pub fn structure(&self) -> &StructureCoefficients {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.group.dim()
    }

    pub fn name(&self) -> String {
        self.group.name()
    }

    /// Driving directions `b_i` (columns of `A^{-1/2}`) in standard coordinates.
    pub fn basis(&self) -> Vec<AlgebraVector> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                let mut v = AlgebraVector::zeros(d);
                for r in 0..d {
                    v[r] = self.metric.noise_factor()[(r, i)];
                }
                v
            })
            .collect()
    }

    pub fn v0(&self) -> &AlgebraVector {
        &self.v0
    }

    pub fn distance(&self, a: &G::Point, b: &G::Point) -> Result<f64> {
        let w = crate::lie::group_log_to(&self.group, a, b)?;
        Ok(self.metric.norm(&w))
    }
}

/// Drift vector `V₀` in standard algebra coordinates.
pub fn v0_drift<G: LieGroup>(spec: &GroupSpec<G>) -> AlgebraVector {
    *spec.v0()
}

pub fn so3_spec() -> GroupSpec<So3> {
    GroupSpec::with_identity_metric(So3).expect("identity metric")
}

pub fn gl3_spec() -> GroupSpec<Gl3> {
    GroupSpec::with_identity_metric(Gl3).expect("identity metric")
}

pub fn abelian_spec(d: usize) -> Result<GroupSpec<Abelian>> {
    GroupSpec::with_identity_metric(Abelian::new(d)?)
}

/// Nearest point `v̄` of a fiber, described by its fiber coordinate and `w = log(v̄⁻¹ y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberLog<S> {
    pub w: AlgebraVector,
    pub coord: S,
    /// Several fiber points were equally close; the smallest coordinate was kept.
    pub tie: bool,
}

/// A quotient `G/H` realised by a projection `π` with fibers `π⁻¹(v)`.
pub trait HomogeneousSpace: Send + Sync {
    type Group: LieGroup;
    type Base: Clone + Debug + PartialEq + Send + Sync;
    type Fiber: Copy + Debug + PartialEq + Send + Sync;

    fn spec(&self) -> &GroupSpec<Self::Group>;
    fn name(&self) -> String;
    fn base_dim(&self) -> usize;
    fn check_base(&self, v: &Self::Base) -> Result<()>;
    fn project(&self, g: &<Self::Group as LieGroup>::Point) -> Self::Base;
    fn fiber_point(&self, v: &Self::Base, s: &Self::Fiber) -> Result<<Self::Group as LieGroup>::Point>;
    fn fiber_log(&self, y: &<Self::Group as LieGroup>::Point, v: &Self::Base) -> Result<FiberLog<Self::Fiber>>;
    /// Volume distortion `Θ_N` of the normal exponential chart of a fiber, 1 at `w = 0`.
    fn fiber_jacobian_det(&self, w: &AlgebraVector) -> Result<f64>;
    fn base_distance(&self, a: &Self::Base, b: &Self::Base) -> f64;
    /// Isotropy algebra, standard coordinates. Empty for discrete fibers.
    fn vertical_basis(&self) -> Vec<AlgebraVector>;
    fn horizontal_basis(&self) -> Vec<AlgebraVector>;
    fn base_coords(&self, v: &Self::Base) -> Vec<f64>;
    fn fiber_coords(&self, s: &Self::Fiber) -> Vec<f64>;

    fn codim(&self) -> usize {
        self.spec().dim() - self.vertical_basis().len()
    }
}

/// `Θ_N(w)` from the left-trivialised differential of `(h, w) ↦ h·exp(w)`:
/// `det[Ad(exp(-w)) V | dexp_w H]`, normalised at `w = 0`.
pub fn fiber_jacobian_det_generic<S: HomogeneousSpace>(space: &S, w: &AlgebraVector) -> f64 {
    let group = space.spec().group();
    let d = group.dim();
    let vert = space.vertical_basis();
    let hor = space.horizontal_basis();
    let ad = group.adjoint(&group.exp(&(-*w)));
    let jac = crate::lie::dexp_series(group, w);
    let mut m = DMatrix::zeros(d, d);
    let mut m0 = DMatrix::zeros(d, d);
    for (c, v) in vert.iter().enumerate() {
        let vv = nalgebra::DVector::from_column_slice(v.as_slice());
        m.set_column(c, &(&ad * &vv));
        m0.set_column(c, &vv);
    }
    for (c, h) in hor.iter().enumerate() {
        let hv = nalgebra::DVector::from_column_slice(h.as_slice());
        m.set_column(vert.len() + c, &(&jac * &hv));
        m0.set_column(vert.len() + c, &hv);
    }
    m.determinant() / m0.determinant()
}

/// Radial log-derivative `∂_r log Θ^{-1/2}` at `w`, with `r = |w|_A`, by central differences.
pub(crate) fn radial_log_derivative(
    metric: &MetricParam,
    w: &AlgebraVector,
    theta: impl Fn(&AlgebraVector) -> Result<f64>,
) -> Result<(f64, f64)> {
    const H: f64 = 1e-5;
    let r = metric.norm(w);
    if r < 1e-12 {
        return Ok((r, 0.0));
    }
    let up = theta(&w.scale((r + H) / r))?;
    let down = theta(&w.scale((r - H) / r))?;
    if !(up > 0.0 && down > 0.0) {
        return Err(Error::Numerical { what: "volume distortion", residual: f64::min(up, down) });
    }
    Ok((r, -0.5 * (libm::log(up) - libm::log(down)) / (2.0 * H)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure_reproduces_brackets() {
        let m = MetricParam::from_upper(3, &[1.5, 0.2, 0.0, 0.8, -0.1, 2.0]).unwrap();
        let spec = GroupSpec::new(So3, m).unwrap();
        let basis = spec.basis();
        for i in 0..3 {
            for j in 0..3 {
                let br = So3.bracket(&basis[i], &basis[j]);
                let mut rebuilt = AlgebraVector::zeros(3);
                for k in 0..3 {
                    rebuilt += basis[k] * spec.structure().get(i, j, k);
                }
                assert!(br.max_abs_diff(&rebuilt) < 1e-12);
            }
        }
    }

    #[test]
    fn unimodular_groups_have_no_v0() {
        assert!(v0_drift(&so3_spec()).norm() < 1e-15);
        assert!(v0_drift(&gl3_spec()).norm() < 1e-12);
        assert_eq!(v0_drift(&abelian_spec(3).unwrap()).norm(), 0.0);
        let aniso = GroupSpec::new(So3, MetricParam::diagonal(&[0.2, 0.2, 0.8]).unwrap()).unwrap();
        assert!(v0_drift(&aniso).norm() < 1e-15);
    }

    #[test]
    fn abelian_exp_is_additive() {
        let spec = abelian_spec(3).unwrap();
        let g = spec.group();
        let a = AlgebraVector::from_slice(&[1.0, 2.0, 3.0]).unwrap();
        let b = AlgebraVector::from_slice(&[-0.5, 0.25, 4.0]).unwrap();
        assert_eq!(g.compose(&g.exp(&a), &g.exp(&b)), g.exp(&(a + b)));
    }
}
