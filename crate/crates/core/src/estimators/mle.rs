use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};

use super::{check_observations, log_likelihood, log_q_fiber};
use crate::error::{Error, Result, Warning};
use crate::exec::Executor;
use crate::fiber::{fermi_log_phi, log_mean_exp};
use crate::lie::LieGroup;
use crate::linalg::{check_spd, spd_inv_sqrt};
use crate::metric::MetricParam;
use crate::rng::StreamKey;
use crate::sde::TimeGrid;
use crate::spaces::{GroupSpec, HomogeneousSpace, Spd3};

#[derive(Clone, Copy, Debug)]
pub struct MleConfig {
    pub eta: f64,
    /// Number of updates `K`; the trace holds `K + 1` entries.
    pub iterations: usize,
    /// Bridges per observation.
    pub bridges: usize,
    pub grid: TimeGrid,
    pub fd_step: f64,
    pub eig_floor: f64,
}

impl MleConfig {
    pub fn new(eta: f64, iterations: usize, bridges: usize, grid: TimeGrid) -> Self {
        Self { eta, iterations, bridges, grid, fd_step: 1e-3, eig_floor: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MleIterate {
    pub iteration: usize,
    pub theta: DMatrix<f64>,
    /// Total log-likelihood over the data at `theta`.
    pub log_likelihood: f64,
    /// Euclidean norm of the finite-difference gradient over the upper-triangle entries.
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default)]
pub struct MleTrace {
    pub iterates: Vec<MleIterate>,
    /// Updates where the eigenvalue floor was active.
    pub projections: usize,
    pub warnings: Vec<Warning>,
}

impl MleTrace {
    pub fn final_theta(&self) -> Option<&DMatrix<f64>> {
        self.iterates.last().map(|it| &it.theta)
    }

    pub fn aborted(&self) -> bool {
        self.warnings.iter().any(|w| matches!(w, Warning::NonFiniteLikelihood { .. }))
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Symmetrises and clamps eigenvalues at `floor`. Returns whether the clamp was active.
fn project_spd(m: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, bool) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.min() >= floor {
        return (sym, false);
    }
    let clamped = eig.eigenvalues.map(|x| x.max(floor));
    (&eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose(), true)
}

/// Gradient ascent on the mean log-likelihood over SPD matrices.
///
/// The gradient comes from central differences in the upper-triangle entries
/// with common random numbers inside an iteration. Steps are preconditioned by
/// the affine-invariant geometry, `θ ← θ + η θ G θ`.
fn ascend<F>(theta0: DMatrix<f64>, cfg: &MleConfig, n_obs: usize, key: StreamKey, objective: F) -> Result<MleTrace>
where
    F: Fn(&DMatrix<f64>, StreamKey) -> Result<f64>,
{
    if !(cfg.eta > 0.0) || !(cfg.fd_step > 0.0) || cfg.bridges == 0 || n_obs == 0 {
        return Err(Error::InvalidInput("need eta > 0, fd_step > 0, bridges >= 1 and data".into()));
    }
    let d = theta0.nrows();
    let mut theta = theta0;
    let mut trace = MleTrace::default();
    for k in 0..=cfg.iterations {
        let key_k = key.derive(k as u64);
        let ll = objective(&theta, key_k)?;
        if !ll.is_finite() {
            trace.warnings.push(Warning::NonFiniteLikelihood { iteration: k });
            break;
        }
        let mut g = DMatrix::zeros(d, d);
        let mut sq = 0.0;
        let lam = min_eigenvalue(&theta);
        for i in 0..d {
            for j in i..d {
                let mut e = DMatrix::zeros(d, d);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                let h = cfg.fd_step.min(0.5 * lam);
                let up = objective(&(&theta + &e * h), key_k)?;
                let down = objective(&(&theta - &e * h), key_k)?;
                let dij = (up - down) / (2.0 * h);
                sq += dij * dij;
                let gij = if i == j { dij } else { 0.5 * dij };
                g[(i, j)] = gij;
                g[(j, i)] = gij;
            }
        }
        trace.iterates.push(MleIterate {
            iteration: k,
            theta: theta.clone(),
            log_likelihood: ll,
            grad_norm: libm::sqrt(sq),
        });
        if !sq.is_finite() {
            trace.warnings.push(Warning::NonFiniteLikelihood { iteration: k });
            break;
        }
        if k == cfg.iterations {
            break;
        }
        let step = &theta * &g * &theta * (cfg.eta / n_obs as f64);
        let (next, clipped) = project_spd(&(&theta + step), cfg.eig_floor);
        trace.projections += clipped as usize;
        theta = next;
    }
    if cfg.iterations > 0 && 2 * trace.projections > cfg.iterations {
        trace.warnings.push(Warning::FrequentProjection { projected: trace.projections, iterations: cfg.iterations });
    }
    Ok(trace)
}

/// Iterative MLE of the metric `A` from group-valued observations at time `T`.
pub fn metric_mle<G: LieGroup, E: Executor>(
    spec: &GroupSpec<G>,
    data: &[G::Point],
    theta0: &MetricParam,
    cfg: &MleConfig,
    key: StreamKey,
    exec: &E,
) -> Result<MleTrace> {
    check_observations(spec, data)?;
    let base = spec.with_metric(theta0.clone())?;
    ascend(theta0.matrix().clone(), cfg, data.len(), key, |theta, k| {
        let s = base.with_metric(MetricParam::new(theta.clone())?)?;
        log_likelihood(&s, data, &cfg.grid, cfg.bridges, k, exec)
    })
}

/// `Σ_j log p_T(μ, P_j)` on SPD(3), from Fermi bridges started at `μ^{1/2}`
/// (translated to `e`, so the target fibers sit over `μ^{-1/2} P_j μ^{-1/2}`).
pub fn spd_log_likelihood<E: Executor>(
    space: &Spd3,
    data: &[Matrix3<f64>],
    mu: &Matrix3<f64>,
    grid: &TimeGrid,
    m: usize,
    key: StreamKey,
    exec: &E,
) -> Result<f64> {
    let r = spd_inv_sqrt(mu)?;
    let terms = exec.map(data.len(), |j| -> Result<f64> {
        let target = r * data[j] * r;
        let log_phis = (0..m)
            .map(|i| fermi_log_phi(space, &target, grid, &mut key.stream((j * m + i) as u64)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(log_q_fiber(space, &target, grid.t_final())? + log_mean_exp(&log_phis))
    });
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total)
}

/// Iterative MLE of the diffusion mean of SPD(3) data.
pub fn diffusion_mean_spd<E: Executor>(
    space: &Spd3,
    data: &[Matrix3<f64>],
    mu0: &Matrix3<f64>,
    cfg: &MleConfig,
    key: StreamKey,
    exec: &E,
) -> Result<MleTrace> {
    check_spd(mu0)?;
    let bad: Vec<usize> =
        data.iter().enumerate().filter(|(_, p)| space.check_base(p).is_err()).map(|(i, _)| i).collect();
    if !bad.is_empty() {
        return Err(Error::ObservationsOutsideBranch { indices: bad });
    }
    let to_mat = |m: &DMatrix<f64>| Matrix3::from_fn(|i, j| m[(i, j)]);
    let mu0 = DMatrix::from_fn(3, 3, |i, j| mu0[(i, j)]);
    ascend(mu0, cfg, data.len(), key, |mu, k| {
        spd_log_likelihood(space, data, &to_mat(mu), &cfg.grid, cfg.bridges, k, exec)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_clamps_small_eigenvalues() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[1.0, -0.5, 2.0]));
        let (p, hit) = project_spd(&m, 1e-4);
        assert!(hit);
        assert!((p[(1, 1)] - 1e-4).abs() < 1e-15);
        let (same, hit) = project_spd(&DMatrix::identity(3, 3), 1e-4);
        assert!(!hit);
        assert_eq!(same, DMatrix::identity(3, 3));
    }
}
