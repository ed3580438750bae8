//! Stratonovich Euler–Heun integration of left-invariant Brownian motion,
//! guided bridges and their importance weights.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lie::{group_log_to, LieGroup};
use crate::rng::{NoiseStream, StreamKey};
use crate::spaces::{radial_log_derivative, GroupSpec};
use crate::vector::AlgebraVector;

/// Paths needing more restarts than this are reported as failures.
pub const MAX_RESAMPLES: u32 = 64;

/// Uniform grid `t_i = i T / k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidInput("final time must be positive".into()));
        }
        if steps == 0 {
            return Err(Error::InvalidInput("need at least one step".into()));
        }
        Ok(Self { t_final, steps })
    }

    /// `k = ceil(per_unit · T)` steps, at least 2.
    pub fn with_density(t_final: f64, per_unit: usize) -> Result<Self> {
        Self::new(t_final, usize::max(2, libm::ceil(t_final * per_unit as f64) as usize))
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t_final
        } else {
            i as f64 * self.t_final / self.steps as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedRecord {
    pub seed: u64,
    pub tag: u64,
    pub index: u64,
}

impl SeedRecord {
    pub fn of(noise: &NoiseStream) -> Self {
        let StreamKey { seed, tag } = noise.key();
        Self { seed, tag, index: noise.index() }
    }
}

#[derive(Clone, Debug)]
pub struct SamplePath<P> {
    pub grid: TimeGrid,
    pub points: Vec<P>,
    /// Zero for unguided paths.
    pub log_phi: f64,
    /// Restarts caused by leaving the log branch.
    pub resamples: u32,
    pub seed: SeedRecord,
}

impl<P: Copy> SamplePath<P> {
    pub fn endpoint(&self) -> P {
        *self.points.last().expect("paths are never empty")
    }

    pub fn phi(&self) -> f64 {
        libm::exp(self.log_phi)
    }
}

/// One Heun step of `dX = -½ V₀ dt + V_i(X) ∘ dB^i` with the guiding drift
/// folded into the increment: `ξ = A^{-1/2} dB + drift·dt`.
pub fn euler_heun_step<G: LieGroup>(
    spec: &GroupSpec<G>,
    x: &G::Point,
    drift: &AlgebraVector,
    db: &AlgebraVector,
    dt: f64,
) -> G::Point {
    let g = spec.group();
    let xi = spec.metric().apply_noise(db) + drift.scale(dt);
    let v = g.field(x, &xi);
    let predicted = g.axpy(x, 1.0, &v);
    let corrected = g.field(&predicted, &xi);
    let mut out = g.axpy(&g.axpy(x, 0.5, &v), 0.5, &corrected);
    if spec.v0().as_slice().iter().any(|&c| c != 0.0) {
        out = g.axpy(&out, -0.5 * dt, &g.field(x, spec.v0()));
    }
    g.retract(&out)
}

pub fn sample_brownian_motion<G: LieGroup>(
    spec: &GroupSpec<G>,
    grid: &TimeGrid,
    noise: &mut NoiseStream,
) -> SamplePath<G::Point> {
    let seed = SeedRecord::of(noise);
    let d = spec.dim();
    let zero = AlgebraVector::zeros(d);
    let mut x = spec.group().identity();
    let mut points = Vec::with_capacity(grid.steps() + 1);
    points.push(x);
    for _ in 0..grid.steps() {
        let db = noise.increment(d, grid.dt());
        x = euler_heun_step(spec, &x, &zero, &db, grid.dt());
        points.push(x);
    }
    SamplePath { grid: *grid, points, log_phi: 0.0, resamples: 0, seed }
}

/// Endpoint of a Brownian path without storing it.
pub fn brownian_endpoint<G: LieGroup>(spec: &GroupSpec<G>, grid: &TimeGrid, noise: &mut NoiseStream) -> G::Point {
    let d = spec.dim();
    let zero = AlgebraVector::zeros(d);
    let mut x = spec.group().identity();
    for _ in 0..grid.steps() {
        let db = noise.increment(d, grid.dt());
        x = euler_heun_step(spec, &x, &zero, &db, grid.dt());
    }
    x
}

/// What a guide reports at `(t, Y_t)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct GuideEval {
    /// Algebra vector pointing at the current target; the drift is `ell / (T - t)`.
    pub ell: AlgebraVector,
    /// `r ∂_r log Θ^{-1/2}`; the weight integrand is this over `T - t`.
    pub phi_rate: f64,
}

pub(crate) trait Guide<G: LieGroup> {
    fn eval(&self, spec: &GroupSpec<G>, y: &G::Point, remaining: f64, step: usize) -> Result<GuideEval>;
    /// Pinned value of `Y_T` given `Y_{t_{k-1}}`.
    fn pin(&self, spec: &GroupSpec<G>, y: &G::Point) -> Result<G::Point>;
}

pub(crate) struct PointGuide<P> {
    pub target: P,
}

impl<G: LieGroup> Guide<G> for PointGuide<G::Point> {
    fn eval(&self, spec: &GroupSpec<G>, y: &G::Point, _remaining: f64, _step: usize) -> Result<GuideEval> {
        let ell = group_log_to(spec.group(), y, &self.target)?;
        let (r, deriv) = radial_log_derivative(spec.metric(), &(-ell), |w| spec.group().dexp_det(w))?;
        Ok(GuideEval { ell, phi_rate: r * deriv })
    }

    fn pin(&self, _spec: &GroupSpec<G>, _y: &G::Point) -> Result<G::Point> {
        Ok(self.target)
    }
}

pub(crate) struct GuidedRun<P> {
    pub points: Vec<P>,
    pub log_phi: f64,
    pub resamples: u32,
}

fn recoverable(e: &Error) -> bool {
    matches!(e, Error::Branch { .. } | Error::Numerical { .. })
}

/// Integrates a guided diffusion, restarting with fresh noise from the same
/// stream when a log leaves its branch.
pub(crate) fn run_guided<G: LieGroup, D: Guide<G>>(
    spec: &GroupSpec<G>,
    guide: &D,
    grid: &TimeGrid,
    noise: &mut NoiseStream,
    record: bool,
) -> Result<GuidedRun<G::Point>> {
    let d = spec.dim();
    let dt = grid.dt();
    let k = grid.steps();
    let t_final = grid.t_final();
    'attempt: for attempt in 0..=MAX_RESAMPLES {
        let mut y = spec.group().identity();
        let mut points = Vec::new();
        if record {
            points.reserve(k + 1);
            points.push(y);
        }
        let mut log_phi = 0.0;
        for i in 0..k - 1 {
            let remaining = t_final - grid.time(i);
            let ev = match guide.eval(spec, &y, remaining, i) {
                Ok(ev) => ev,
                Err(e) if recoverable(&e) => continue 'attempt,
                Err(e) => return Err(e),
            };
            log_phi += ev.phi_rate / remaining * dt;
            let db = noise.increment(d, dt);
            y = euler_heun_step(spec, &y, &ev.ell.scale(1.0 / remaining), &db, dt);
            if spec.group().check_point(&y).is_err() {
                continue 'attempt;
            }
            if record {
                points.push(y);
            }
        }
        let endpoint = match guide.pin(spec, &y) {
            Ok(p) => p,
            Err(e) if recoverable(&e) => continue 'attempt,
            Err(e) => return Err(e),
        };
        if !log_phi.is_finite() {
            continue 'attempt;
        }
        if record {
            points.push(endpoint);
        }
        return Ok(GuidedRun { points, log_phi, resamples: attempt });
    }
    Err(Error::ResampleExhausted { attempts: MAX_RESAMPLES + 1 })
}

pub(crate) fn into_path<P>(run: GuidedRun<P>, grid: &TimeGrid, seed: SeedRecord) -> SamplePath<P> {
    SamplePath { grid: *grid, points: run.points, log_phi: run.log_phi, resamples: run.resamples, seed }
}

/// Bridge from `e` to `v` with drift `log(Y⁻¹ v)/(T - t)`, pinned at `Y_T = v`.
pub fn sample_guided_bridge<G: LieGroup>(
    spec: &GroupSpec<G>,
    v: &G::Point,
    grid: &TimeGrid,
    noise: &mut NoiseStream,
) -> Result<SamplePath<G::Point>> {
    spec.group().check_point(v)?;
    let seed = SeedRecord::of(noise);
    let run = run_guided(spec, &PointGuide { target: *v }, grid, noise, true)?;
    Ok(into_path(run, grid, seed))
}

/// `log φ` of a bridge without keeping its path.
pub(crate) fn guided_log_phi<G: LieGroup>(
    spec: &GroupSpec<G>,
    v: &G::Point,
    grid: &TimeGrid,
    noise: &mut NoiseStream,
) -> Result<f64> {
    Ok(run_guided(spec, &PointGuide { target: *v }, grid, noise, false)?.log_phi)
}

/// Left-rectangle sum of `r/(T-s) ∂_r log Θ^{-1/2}` over `[0, T - Δt]` along a stored path.
pub fn estimate_log_phi<G: LieGroup>(spec: &GroupSpec<G>, path: &SamplePath<G::Point>, v: &G::Point) -> Result<f64> {
    let grid = &path.grid;
    if path.points.len() != grid.steps() + 1 {
        return Err(Error::Dimension { expected: grid.steps() + 1, got: path.points.len() });
    }
    let guide = PointGuide { target: *v };
    let mut log_phi = 0.0;
    for i in 0..grid.steps() - 1 {
        let remaining = grid.t_final() - grid.time(i);
        log_phi += Guide::<G>::eval(&guide, spec, &path.points[i], remaining, i)?.phi_rate / remaining * grid.dt();
    }
    Ok(log_phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{so3_exp, So3};
    use crate::spaces::{abelian_spec, so3_spec};
    use nalgebra::{Matrix3, Vector3};

    #[test]
    fn grid_ends_exactly_at_t() {
        let g = TimeGrid::new(0.7, 3).unwrap();
        assert_eq!(g.time(3), 0.7);
        assert!(g.time(1) < g.time(2));
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert_eq!(TimeGrid::with_density(0.5, 100).unwrap().steps(), 50);
    }

    #[test]
    fn zero_increment_leaves_point_fixed() {
        let spec = so3_spec();
        let x = so3_exp(&Vector3::new(0.1, 0.2, 0.3));
        let z = AlgebraVector::zeros(3);
        assert_eq!(euler_heun_step(&spec, &x, &z, &z, 0.01), x);
    }

    #[test]
    fn abelian_step_is_flat() {
        let spec = abelian_spec(3).unwrap();
        let x = AlgebraVector::from_slice(&[1.0, -2.0, 0.5]).unwrap();
        let db = AlgebraVector::from_slice(&[0.1, 0.2, -0.3]).unwrap();
        let drift = AlgebraVector::from_slice(&[2.0, 0.0, 1.0]).unwrap();
        let out = euler_heun_step(&spec, &x, &drift, &db, 0.01);
        assert!(out.max_abs_diff(&(x + db + drift * 0.01)) < 1e-15);
    }

    #[test]
    fn so3_step_tracks_exponential() {
        let spec = so3_spec();
        for h in [0.01, 0.005] {
            let db = AlgebraVector::from_slice(&[h, 0.0, 0.0]).unwrap();
            let out = euler_heun_step(&spec, &Matrix3::identity(), &AlgebraVector::zeros(3), &db, 1e-4);
            let err = (out - so3_exp(&Vector3::new(h, 0.0, 0.0))).norm();
            assert!(err < h * h, "h={h}: {err}");
        }
    }

    #[test]
    fn bridge_to_identity_returns_home() {
        let spec = so3_spec();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let path =
            sample_guided_bridge(&spec, &Matrix3::identity(), &grid, &mut StreamKey::new(1, 1).stream(0)).unwrap();
        assert_eq!(path.endpoint(), Matrix3::identity());
        assert_eq!(path.points.len(), 51);
        for p in &path.points {
            assert!((p.transpose() * p - Matrix3::identity()).norm() < 1e-9);
        }
    }

    #[test]
    fn stored_path_reproduces_accumulated_weight() {
        let spec = so3_spec();
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let v = So3.exp(&AlgebraVector::from_slice(&[0.0, 0.0, 1.0]).unwrap());
        let path = sample_guided_bridge(&spec, &v, &grid, &mut StreamKey::new(3, 9).stream(2)).unwrap();
        let again = estimate_log_phi(&spec, &path, &v).unwrap();
        assert_eq!(path.log_phi, again);
        assert!(path.phi() > 0.0);
    }

    #[test]
    fn abelian_weight_is_exactly_one() {
        let spec = abelian_spec(2).unwrap();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let v = AlgebraVector::from_slice(&[1.0, -3.0]).unwrap();
        let path = sample_guided_bridge(&spec, &v, &grid, &mut StreamKey::new(3, 9).stream(0)).unwrap();
        assert_eq!(path.log_phi, 0.0);
        assert_eq!(path.endpoint(), v);
    }
}
