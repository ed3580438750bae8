//! Importance-sampling density estimates, likelihoods and the iterative MLE.

mod mle;
mod s2;

use alloc::vec::Vec;

pub use mle::{diffusion_mean_spd, metric_mle, spd_log_likelihood, MleConfig, MleIterate, MleTrace};
pub use s2::{pushforward_density_grid, s2_exact_kernel, s2_kernel_is, DensityGrid, GridCell, GridConfig};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::fiber::{fermi_log_phi, log_mean_exp};
use crate::lie::LieGroup;
use crate::rng::StreamKey;
use crate::sde::{guided_log_phi, TimeGrid};
use crate::spaces::{GroupSpec, HomogeneousSpace};
use crate::vector::AlgebraVector;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityEstimate {
    pub value: f64,
    pub mc_std_error: f64,
    pub n_bridges: usize,
}

/// `log q_T(e, v) = ½ log det A - (d/2) log 2πT - |log v|²_A / 2T`.
pub fn log_q_density<G: LieGroup>(spec: &GroupSpec<G>, v: &G::Point, t: f64) -> Result<f64> {
    let ell = spec.group().log(v)?;
    Ok(log_gaussian(spec, &ell, spec.dim(), 0.5 * libm::log(spec.metric().det()), t))
}

pub fn q_density<G: LieGroup>(spec: &GroupSpec<G>, v: &G::Point, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput("T must be positive".into()));
    }
    Ok(libm::exp(log_q_density(spec, v, t)?))
}

fn log_gaussian<G: LieGroup>(spec: &GroupSpec<G>, w: &AlgebraVector, dim: usize, half_log_det: f64, t: f64) -> f64 {
    half_log_det - 0.5 * dim as f64 * (LN_2PI + libm::log(t)) - spec.metric().norm_sq(w) / (2.0 * t)
}

/// Normal density of the distance to a fiber, in the codimension of the fiber.
pub fn log_q_fiber<S: HomogeneousSpace>(space: &S, v: &S::Base, t: f64) -> Result<f64> {
    let spec = space.spec();
    let fl = space.fiber_log(&spec.group().identity(), v)?;
    let hor = space.horizontal_basis();
    let gram = nalgebra::DMatrix::from_fn(hor.len(), hor.len(), |i, j| spec.metric().inner(&hor[i], &hor[j]));
    let half_log_det = 0.5 * libm::log(gram.determinant());
    Ok(log_gaussian(spec, &fl.w, space.codim(), half_log_det, t))
}

fn summarize(q: f64, log_phis: &[f64]) -> DensityEstimate {
    let n = log_phis.len();
    let phis: Vec<f64> = log_phis.iter().map(|l| libm::exp(*l)).collect();
    let mean = phis.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { phis.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    DensityEstimate { value: q * mean, mc_std_error: q * libm::sqrt(var / n as f64), n_bridges: n }
}

/// `p_T(e, v) ≈ q_T(e, v) · mean φ` over `n` guided bridges.
pub fn heat_kernel_is<G: LieGroup, E: Executor>(
    spec: &GroupSpec<G>,
    v: &G::Point,
    grid: &TimeGrid,
    n: usize,
    key: StreamKey,
    exec: &E,
) -> Result<DensityEstimate> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one bridge".into()));
    }
    let q = q_density(spec, v, grid.t_final())?;
    let log_phis: Vec<f64> =
        exec.map(n, |i| guided_log_phi(spec, v, grid, &mut key.stream(i as u64))).into_iter().collect::<Result<_>>()?;
    Ok(summarize(q, &log_phis))
}

/// Density of `π(X_T)` at `v`, from Fermi bridges to the fiber over `v`.
pub fn fermi_density_is<S: HomogeneousSpace, E: Executor>(
    space: &S,
    v: &S::Base,
    grid: &TimeGrid,
    n: usize,
    key: StreamKey,
    exec: &E,
) -> Result<DensityEstimate> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one bridge".into()));
    }
    let q = libm::exp(log_q_fiber(space, v, grid.t_final())?);
    let log_phis: Vec<f64> =
        exec.map(n, |i| fermi_log_phi(space, v, grid, &mut key.stream(i as u64))).into_iter().collect::<Result<_>>()?;
    Ok(summarize(q, &log_phis))
}

/// Rejects data whose logarithm does not exist, listing every offender.
pub fn check_observations<G: LieGroup>(spec: &GroupSpec<G>, data: &[G::Point]) -> Result<()> {
    let bad: Vec<usize> =
        data.iter().enumerate().filter(|(_, g)| spec.group().log(g).is_err()).map(|(i, _)| i).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::ObservationsOutsideBranch { indices: bad })
    }
}

/// `Σ_j log(q_T(e, v_j) · mean_i φ^i_j)` with `m` bridges per observation.
/// Bridge `i` of observation `j` uses stream `j·m + i` of `key`.
pub fn log_likelihood<G: LieGroup, E: Executor>(
    spec: &GroupSpec<G>,
    data: &[G::Point],
    grid: &TimeGrid,
    m: usize,
    key: StreamKey,
    exec: &E,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidInput("need at least one bridge per observation".into()));
    }
    check_observations(spec, data)?;
    let t = grid.t_final();
    let terms = exec.map(data.len(), |j| -> Result<f64> {
        let log_phis = (0..m)
            .map(|i| guided_log_phi(spec, &data[j], grid, &mut key.stream((j * m + i) as u64)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(log_q_density(spec, &data[j], t)? + log_mean_exp(&log_phis))
    });
    let mut total = 0.0;
    for term in terms {
        total += term?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::lie::So3;
    use crate::metric::MetricParam;
    use crate::spaces::{abelian_spec, so3_spec};
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    #[test]
    fn q_density_examples() {
        let so3 = so3_spec();
        assert_relative_eq!(
            q_density(&so3, &Matrix3::identity(), 1.0).unwrap(),
            0.063_493_635_934_240_97,
            epsilon = 1e-15
        );
        let ab = abelian_spec(3).unwrap();
        let v = AlgebraVector::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(q_density(&ab, &v, 1.0).unwrap(), 0.038_510_836_890_748_94, epsilon = 1e-15);
        let scaled = GroupSpec::new(So3, MetricParam::diagonal(&[4.0, 4.0, 4.0]).unwrap()).unwrap();
        assert_relative_eq!(
            q_density(&scaled, &Matrix3::identity(), 1.0).unwrap(),
            8.0 * 0.063_493_635_934_240_97,
            epsilon = 1e-14
        );
    }

    #[test]
    fn abelian_likelihood_at_origin() {
        let spec = abelian_spec(2).unwrap();
        let data = alloc::vec![AlgebraVector::zeros(2); 5];
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let ll = log_likelihood(&spec, &data, &grid, 2, StreamKey::new(1, 1), &Sequential).unwrap();
        assert_relative_eq!(ll, -5.0 * libm::log(2.0 * core::f64::consts::PI * 0.5), epsilon = 1e-12);
    }

    #[test]
    fn bad_observations_are_listed() {
        let spec = so3_spec();
        let half_turn = crate::lie::so3_exp(&nalgebra::Vector3::new(core::f64::consts::PI, 0.0, 0.0));
        let data = alloc::vec![Matrix3::identity(), half_turn, Matrix3::identity(), half_turn];
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let err = log_likelihood(&spec, &data, &grid, 1, StreamKey::new(1, 1), &Sequential).unwrap_err();
        assert_eq!(err, Error::ObservationsOutsideBranch { indices: alloc::vec![1, 3] });
    }
}
