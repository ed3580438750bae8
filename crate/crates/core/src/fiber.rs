//! Conditioning on fibers: nearest-point (Fermi) bridges, k-point bridges and
//! the stochastic Metropolis–Hastings sampler over fiber points.

use alloc::vec::Vec;
use core::f64::consts::TAU;
use core::fmt::Debug;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result, Warning};
use crate::estimators::log_q_density;
use crate::exec::Executor;
use crate::float::rem_euclid;
use crate::lie::{group_log_to, Abelian, LieGroup, So3};
use crate::rng::{NoiseStream, StreamKey};
use crate::sde::{guided_log_phi, into_path, run_guided, Guide, GuideEval, SamplePath, SeedRecord, TimeGrid};
use crate::spaces::{radial_log_derivative, rz, s2_section, GroupSpec, HomogeneousSpace};
use crate::vector::AlgebraVector;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearestFiberPoint<P, S> {
    pub point: P,
    pub coord: S,
    pub distance: f64,
    pub tie: bool,
}

pub fn nearest_fiber_point<S: HomogeneousSpace>(
    space: &S,
    y: &<S::Group as LieGroup>::Point,
    v: &S::Base,
) -> Result<NearestFiberPoint<<S::Group as LieGroup>::Point, S::Fiber>> {
    let fl = space.fiber_log(y, v)?;
    Ok(NearestFiberPoint {
        point: space.fiber_point(v, &fl.coord)?,
        coord: fl.coord,
        distance: space.spec().metric().norm(&fl.w),
        tie: fl.tie,
    })
}

struct FermiGuide<'a, S: HomogeneousSpace> {
    space: &'a S,
    v: &'a S::Base,
}

impl<S: HomogeneousSpace> Guide<S::Group> for FermiGuide<'_, S> {
    fn eval(
        &self,
        spec: &GroupSpec<S::Group>,
        y: &<S::Group as LieGroup>::Point,
        _remaining: f64,
        _step: usize,
    ) -> Result<GuideEval> {
        let fl = self.space.fiber_log(y, self.v)?;
        let (r, deriv) = radial_log_derivative(spec.metric(), &fl.w, |w| self.space.fiber_jacobian_det(w))?;
        Ok(GuideEval { ell: -fl.w, phi_rate: r * deriv })
    }

    fn pin(
        &self,
        _spec: &GroupSpec<S::Group>,
        y: &<S::Group as LieGroup>::Point,
    ) -> Result<<S::Group as LieGroup>::Point> {
        let fl = self.space.fiber_log(y, self.v)?;
        self.space.fiber_point(self.v, &fl.coord)
    }
}

/// Bridge from `e` to the fiber over `v`, re-aiming at the nearest fiber point every step.
pub fn sample_fermi_bridge<S: HomogeneousSpace>(
    space: &S,
    v: &S::Base,
    grid: &TimeGrid,
    noise: &mut NoiseStream,
) -> Result<SamplePath<<S::Group as LieGroup>::Point>> {
    space.check_base(v)?;
    let seed = SeedRecord::of(noise);
    let run = run_guided(space.spec(), &FermiGuide { space, v }, grid, noise, true)?;
    Ok(into_path(run, grid, seed))
}

pub(crate) fn fermi_log_phi<S: HomogeneousSpace>(
    space: &S,
    v: &S::Base,
    grid: &TimeGrid,
    noise: &mut NoiseStream,
) -> Result<f64> {
    Ok(run_guided(space.spec(), &FermiGuide { space, v }, grid, noise, false)?.log_phi)
}

/// Finitely many target points with weights `c_i`, stored as logs.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<P> {
    points: Vec<P>,
    log_c: Vec<f64>,
}

impl<P: Copy> PointSet<P> {
    pub fn new<G: LieGroup<Point = P>>(group: &G, points: Vec<P>, log_c: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point set is empty".into()));
        }
        if points.len() != log_c.len() {
            return Err(Error::Dimension { expected: points.len(), got: log_c.len() });
        }
        if log_c.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("log weights must be finite".into()));
        }
        for p in &points {
            group.check_point(p)?;
        }
        Ok(Self { points, log_c })
    }

    pub fn uniform<G: LieGroup<Point = P>>(group: &G, points: Vec<P>) -> Result<Self> {
        let n = points.len();
        Self::new(group, points, alloc::vec![0.0; n])
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn log_c(&self) -> &[f64] {
        &self.log_c
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Normalised weights `∝ c_i exp(-|log(Y⁻¹v_i)|²_A / 2τ)` and the weighted
/// direction `Σ w_i log(Y⁻¹ v_i)`, with `τ = T - t` the remaining time.
pub fn kpoint_weights<G: LieGroup>(
    spec: &GroupSpec<G>,
    targets: &PointSet<G::Point>,
    y: &G::Point,
    remaining: f64,
    step: usize,
) -> Result<(AlgebraVector, Vec<f64>)> {
    let mut logs = Vec::with_capacity(targets.len());
    let mut lw = Vec::with_capacity(targets.len());
    for (p, c) in targets.points.iter().zip(&targets.log_c) {
        let ell = group_log_to(spec.group(), y, p)?;
        lw.push(c - spec.metric().norm_sq(&ell) / (2.0 * remaining));
        logs.push(ell);
    }
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::WeightUnderflow { step, max_log_weight: max });
    }
    let mut w: Vec<f64> = lw.iter().map(|l| libm::exp(l - max)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let mut ell = AlgebraVector::zeros(spec.dim());
    for (wi, li) in w.iter().zip(&logs) {
        ell += li.scale(*wi);
    }
    Ok((ell, w))
}

struct KPointGuide<'a, P> {
    targets: &'a PointSet<P>,
    last_remaining: f64,
}

impl<G: LieGroup> Guide<G> for KPointGuide<'_, G::Point> {
    fn eval(&self, spec: &GroupSpec<G>, y: &G::Point, remaining: f64, step: usize) -> Result<GuideEval> {
        let (ell, _) = kpoint_weights(spec, self.targets, y, remaining, step)?;
        Ok(GuideEval { ell, phi_rate: 0.0 })
    }

    /// Pins to the target carrying the most weight at the last grid time.
    fn pin(&self, spec: &GroupSpec<G>, y: &G::Point) -> Result<G::Point> {
        let (_, w) = kpoint_weights(spec, self.targets, y, self.last_remaining, usize::MAX)?;
        let best = (0..w.len()).fold(0, |b, i| if w[i] > w[b] { i } else { b });
        Ok(self.targets.points[best])
    }
}

/// Doob-transformed bridge towards a finite point set. Paths carry no weight (`log_phi = 0`).
pub fn sample_kpoint_bridge<G: LieGroup>(
    spec: &GroupSpec<G>,
    targets: &PointSet<G::Point>,
    grid: &TimeGrid,
    noise: &mut NoiseStream,
) -> Result<SamplePath<G::Point>> {
    let seed = SeedRecord::of(noise);
    let guide = KPointGuide { targets, last_remaining: grid.dt() };
    let run = run_guided(spec, &guide, grid, noise, true)?;
    Ok(into_path(run, grid, seed))
}

/// The `k` lattice points `v + 2πj` nearest to 0, in increasing order.
pub fn truncated_lattice(v: f64, k: usize) -> Vec<f64> {
    let base = rem_euclid(v, TAU);
    let mut pts: Vec<f64> = (-(k as i64) - 1..=(k as i64) + 1).map(|j| base + TAU * j as f64).collect();
    pts.sort_by(|a, b| libm::fabs(*a).total_cmp(&libm::fabs(*b)));
    pts.truncate(k);
    pts.sort_by(f64::total_cmp);
    pts
}

/// A parametrised piece of a fiber that the MH chain walks on.
pub trait FiberChart<G: LieGroup>: Sync {
    type Coord: Copy + Debug + PartialEq + Send + Sync;
    fn point(&self, c: &Self::Coord) -> Result<G::Point>;
    /// Nearest chart point to `e`; the chain starts there.
    fn initial(&self) -> Result<Self::Coord>;
    /// Draw from a symmetric proposal. `None` means the draw left the chart and is rejected.
    fn propose(&self, c: &Self::Coord, noise: &mut NoiseStream) -> Option<Self::Coord>;
    fn coords(&self, c: &Self::Coord) -> Vec<f64>;
    fn scale(&self) -> f64;
}

/// Lattice fiber `v + 2πℤ` of the circle, truncated to `lo..=hi`, with ±1 proposals.
#[derive(Clone, Debug)]
pub struct LatticeChart {
    pub v: f64,
    pub lo: i64,
    pub hi: i64,
}

impl LatticeChart {
    /// The `k` lattice points nearest to 0.
    pub fn nearest(v: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("need at least one lattice point".into()));
        }
        let pts = truncated_lattice(v, k);
        let base = rem_euclid(v, TAU);
        let idx = |p: f64| libm::round((p - base) / TAU) as i64;
        Ok(Self { v: base, lo: idx(pts[0]), hi: idx(pts[k - 1]) })
    }

    pub fn points(&self) -> Vec<f64> {
        (self.lo..=self.hi).map(|j| self.v + TAU * j as f64).collect()
    }
}

impl FiberChart<Abelian> for LatticeChart {
    type Coord = i64;

    fn point(&self, c: &i64) -> Result<AlgebraVector> {
        AlgebraVector::from_slice(&[self.v + TAU * *c as f64])
    }

    fn initial(&self) -> Result<i64> {
        Ok((self.lo..=self.hi)
            .min_by(|a, b| libm::fabs(self.v + TAU * *a as f64).total_cmp(&libm::fabs(self.v + TAU * *b as f64)))
            .expect("non-empty range"))
    }

    fn propose(&self, c: &i64, noise: &mut NoiseStream) -> Option<i64> {
        let next = if noise.uniform() < 0.5 { c - 1 } else { c + 1 };
        (self.lo..=self.hi).contains(&next).then_some(next)
    }

    fn coords(&self, c: &i64) -> Vec<f64> {
        alloc::vec![*c as f64, self.v + TAU * *c as f64]
    }

    fn scale(&self) -> f64 {
        1.0
    }
}

/// The circle fiber `R_v Rz(s)` over an S² point, walked by Gaussian angle steps.
/// With `bins > 0` angles are snapped to `bins` equally spaced values.
#[derive(Clone, Debug)]
pub struct S2FiberChart {
    section: Matrix3<f64>,
    pub scale: f64,
    pub bins: usize,
}

impl S2FiberChart {
    pub fn new(v: &Vector3<f64>, scale: f64, bins: usize) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidInput("proposal scale must be positive".into()));
        }
        Ok(Self { section: s2_section(v), scale, bins })
    }

    fn snap(&self, s: f64) -> f64 {
        let s = rem_euclid(s, TAU);
        if self.bins == 0 {
            return s;
        }
        let width = TAU / self.bins as f64;
        (libm::round(s / width) as usize % self.bins) as f64 * width
    }
}

impl FiberChart<So3> for S2FiberChart {
    type Coord = f64;

    fn point(&self, s: &f64) -> Result<Matrix3<f64>> {
        Ok(self.section * rz(*s))
    }

    fn initial(&self) -> Result<f64> {
        // max tr(R_v Rz(s)) picks the smallest rotation angle
        let m = self.section;
        Ok(self.snap(libm::atan2(m[(1, 0)] - m[(0, 1)], m[(0, 0)] + m[(1, 1)])))
    }

    fn propose(&self, s: &f64, noise: &mut NoiseStream) -> Option<f64> {
        if self.bins == 0 {
            return Some(rem_euclid(s + self.scale * noise.normal(), TAU));
        }
        let width = TAU / self.bins as f64;
        let jump = libm::round(self.scale * noise.normal() / width) as i64;
        let idx = (libm::round(s / width) as i64 + jump).rem_euclid(self.bins as i64);
        Some(idx as f64 * width)
    }

    fn coords(&self, s: &f64) -> Vec<f64> {
        alloc::vec![*s]
    }

    fn scale(&self) -> f64 {
        self.scale
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MhConfig {
    pub iterations: usize,
    pub bridges_per_eval: usize,
    pub grid: TimeGrid,
    /// Warn when this many consecutive proposals are all rejected.
    pub stall_window: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MhStep<C> {
    pub iteration: usize,
    pub coord: C,
    pub log_c: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct MhChain<C> {
    /// One entry per iteration: the state after that iteration.
    pub steps: Vec<MhStep<C>>,
    pub accepted: usize,
    pub warnings: Vec<Warning>,
}

impl<C: Copy> MhChain<C> {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.steps.len().max(1) as f64
    }

    /// States entered by accepted proposals.
    pub fn accepted_states(&self) -> Vec<C> {
        self.steps.iter().filter(|s| s.accepted).map(|s| s.coord).collect()
    }
}

/// `log` of the mean of `exp(x_i)`, computed stably.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|x| libm::exp(x - max)).sum();
    max + libm::log(s / xs.len() as f64)
}

fn estimate_log_c<G: LieGroup, E: Executor>(
    spec: &GroupSpec<G>,
    target: &G::Point,
    cfg: &MhConfig,
    key: StreamKey,
    exec: &E,
) -> Result<f64> {
    let phis = exec.map(cfg.bridges_per_eval, |b| guided_log_phi(spec, target, &cfg.grid, &mut key.stream(b as u64)));
    let phis: Vec<f64> = phis.into_iter().collect::<Result<_>>()?;
    Ok(log_mean_exp(&phis))
}

/// Pseudo-marginal Metropolis–Hastings over fiber points with target
/// `∝ q_T(e, u) c_u`. Each proposal's `c_u` comes from fresh guided bridges
/// and stays frozen once the chain moves there.
pub fn mh_fiber_sampler<G: LieGroup, F: FiberChart<G>, E: Executor>(
    spec: &GroupSpec<G>,
    chart: &F,
    cfg: &MhConfig,
    key: StreamKey,
    exec: &E,
) -> Result<MhChain<F::Coord>> {
    if cfg.iterations == 0 || cfg.bridges_per_eval == 0 {
        return Err(Error::InvalidInput("iterations and bridges_per_eval must be at least 1".into()));
    }
    let t = cfg.grid.t_final();
    let mut proposals = key.derive(u64::MAX).stream(0);
    let mut current = chart.initial()?;
    let cur_point = chart.point(&current)?;
    let mut cur_log_c = estimate_log_c(spec, &cur_point, cfg, key.derive(u64::MAX - 1), exec)?;
    let mut cur_target = log_q_density(spec, &cur_point, t)? + cur_log_c;
    let mut steps = Vec::with_capacity(cfg.iterations);
    let mut accepted = 0;
    let mut warnings = Vec::new();
    let mut last_accept = 0;
    let mut warned_at = None;
    for i in 0..cfg.iterations {
        let mut moved = false;
        match chart.propose(&current, &mut proposals) {
            // ratio 1: the frozen estimate is kept
            Some(u) if u == current => moved = true,
            Some(u) => {
                let u_point = chart.point(&u)?;
                // targets outside the principal log have no density here
                let evaluated = estimate_log_c(spec, &u_point, cfg, key.derive(i as u64), exec)
                    .and_then(|c| Ok((c, log_q_density(spec, &u_point, t)? + c)));
                let (u_log_c, u_target) = match evaluated {
                    Ok(x) => x,
                    Err(Error::Branch { .. } | Error::ResampleExhausted { .. }) => (f64::NAN, f64::NEG_INFINITY),
                    Err(e) => return Err(e),
                };
                let log_ratio = u_target - cur_target;
                if log_ratio >= 0.0 || libm::log(proposals.uniform()) < log_ratio {
                    current = u;
                    cur_log_c = u_log_c;
                    cur_target = u_target;
                    moved = true;
                }
            }
            None => {}
        }
        if moved {
            accepted += 1;
            last_accept = i + 1;
        } else if cfg.stall_window > 0 && i + 1 - last_accept >= cfg.stall_window && warned_at != Some(last_accept) {
            warnings.push(Warning::ChainStalled { from: last_accept, window: cfg.stall_window, scale: chart.scale() });
            warned_at = Some(last_accept);
        }
        steps.push(MhStep { iteration: i, coord: current, log_c: cur_log_c, accepted: moved });
    }
    Ok(MhChain { steps, accepted, warnings })
}

/// Base-point trajectory of a group path.
#[derive(Clone, Debug)]
pub struct ProjectedPath<B> {
    pub times: Vec<f64>,
    pub points: Vec<B>,
    pub log_phi: f64,
}

pub fn project_path<S: HomogeneousSpace>(
    space: &S,
    path: &SamplePath<<S::Group as LieGroup>::Point>,
) -> ProjectedPath<S::Base> {
    ProjectedPath {
        times: (0..path.points.len()).map(|i| path.grid.time(i)).collect(),
        points: path.points.iter().map(|g| space.project(g)).collect(),
        log_phi: path.log_phi,
    }
}
