use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::Vector3;

use super::{fermi_density_is, log_q_density, DensityEstimate};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::fiber::log_mean_exp;
use crate::lie::So3;
use crate::metric::MetricParam;
use crate::rng::StreamKey;
use crate::sde::{guided_log_phi, TimeGrid};
use crate::spaces::{rz, s2_section, GroupSpec, S2};

/// Heat kernel of S² (generator ½Δ) truncated at degree `l_max`:
/// `Σ_l (2l+1)/(4π) e^{-l(l+1)T/2} P_l(cos θ)`.
pub fn s2_exact_kernel(theta: f64, t: f64, l_max: usize) -> f64 {
    let x = libm::cos(theta);
    let (mut p_prev, mut p) = (1.0, x);
    let mut sum = 1.0 / (4.0 * PI);
    for l in 1..=l_max {
        let lf = l as f64;
        sum += (2.0 * lf + 1.0) / (4.0 * PI) * libm::exp(-lf * (lf + 1.0) * t / 2.0) * p;
        let next = ((2.0 * lf + 1.0) * x * p - lf * p_prev) / (lf + 1.0);
        p_prev = p;
        p = next;
    }
    sum
}

/// Density of the one-point motion `X_T n` at `v`, from Fermi bridges.
pub fn s2_kernel_is<E: Executor>(
    space: &S2,
    v: &Vector3<f64>,
    grid: &TimeGrid,
    n: usize,
    key: StreamKey,
    exec: &E,
) -> Result<DensityEstimate> {
    if (v + S2::north()).norm() < 1e-8 {
        return Err(Error::InvalidInput("the south pole is the singular point of the fiber section".into()));
    }
    fermi_density_is(space, v, grid, n, key, exec)
}

#[derive(Clone, Copy, Debug)]
pub struct GridConfig {
    /// Equal-area bands in `z = cos θ`.
    pub n_polar: usize,
    pub n_azimuth: usize,
    /// Sample points per cell along the fiber.
    pub fiber_points: usize,
    pub bridges: usize,
    pub steps_per_unit: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_polar: 8, n_azimuth: 8, fiber_points: 8, bridges: 3, steps_per_unit: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub polar: f64,
    pub azimuth: f64,
    pub area: f64,
    /// Normalised so the grid integrates to one.
    pub density: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub t: f64,
    pub n_polar: usize,
    pub n_azimuth: usize,
    /// Band-major: cell `(b, a)` sits at `b * n_azimuth + a`.
    pub cells: Vec<GridCell>,
    /// Integral of the unnormalised estimate.
    pub raw_mass: f64,
}

impl DensityGrid {
    pub fn tv_to_uniform(&self) -> f64 {
        let u = 1.0 / (4.0 * PI);
        0.5 * self.cells.iter().map(|c| libm::fabs(c.density - u) * c.area).sum::<f64>()
    }

    /// Band whose centre is closest to `polar`.
    pub fn band_near(&self, polar: f64) -> usize {
        (0..self.n_polar)
            .min_by(|&a, &b| {
                let pa = self.cells[a * self.n_azimuth].polar;
                let pb = self.cells[b * self.n_azimuth].polar;
                libm::fabs(pa - polar).total_cmp(&libm::fabs(pb - polar))
            })
            .unwrap_or(0)
    }

    /// Max over min density across azimuth in the band nearest `polar`.
    pub fn anisotropy_ratio(&self, polar: f64) -> f64 {
        let b = self.band_near(polar);
        let band = &self.cells[b * self.n_azimuth..(b + 1) * self.n_azimuth];
        let max = band.iter().map(|c| c.density).fold(f64::NEG_INFINITY, f64::max);
        let min = band.iter().map(|c| c.density).fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Cell centres of the equal-area grid, band-major.
pub fn grid_centres(n_polar: usize, n_azimuth: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n_polar * n_azimuth);
    for b in 0..n_polar {
        let z = 1.0 - (2.0 * b as f64 + 1.0) / n_polar as f64;
        for a in 0..n_azimuth {
            out.push((libm::acos(z), TAU * (a as f64 + 0.5) / n_azimuth as f64));
        }
    }
    out
}

/// Density of `X_T n` on an equal-area grid for each `T`, where `X` is
/// Brownian motion on SO(3) under `metric`. Each cell integrates the group
/// density along `fiber_points` fiber samples, each from `bridges` guided
/// bridges. All times share the sample points and the bridge noise.
pub fn pushforward_density_grid<E: Executor>(
    metric: &MetricParam,
    t_list: &[f64],
    cfg: &GridConfig,
    key: StreamKey,
    exec: &E,
) -> Result<Vec<DensityGrid>> {
    if cfg.n_polar == 0 || cfg.n_azimuth == 0 || cfg.fiber_points == 0 || cfg.bridges == 0 {
        return Err(Error::InvalidInput("grid sizes must be positive".into()));
    }
    let spec = GroupSpec::new(So3, metric.clone())?;
    let centres = grid_centres(cfg.n_polar, cfg.n_azimuth);
    let m = cfg.fiber_points;
    let area = 4.0 * PI / centres.len() as f64;
    let mut out = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let grid = TimeGrid::with_density(t, cfg.steps_per_unit)?;
        // (density, variance) of the group density at each sample point
        let samples = exec.map(centres.len() * m, |idx| -> Result<(f64, f64)> {
            let (polar, az) = centres[idx / m];
            let s = TAU * ((idx % m) as f64 + 0.5) / m as f64;
            let g = s2_section(&S2::spherical(polar, az)) * rz(s);
            let log_q = match log_q_density(&spec, &g, t) {
                Ok(l) => l,
                Err(Error::Branch { .. }) => return Ok((0.0, 0.0)),
                Err(e) => return Err(e),
            };
            let log_phis = (0..cfg.bridges)
                .map(|b| guided_log_phi(&spec, &g, &grid, &mut key.stream((idx * cfg.bridges + b) as u64)))
                .collect::<Result<Vec<f64>>>()?;
            let n = log_phis.len() as f64;
            let mean = libm::exp(log_mean_exp(&log_phis));
            let var = if log_phis.len() > 1 {
                log_phis
                    .iter()
                    .map(|l| {
                        let e = libm::exp(*l) - mean;
                        e * e
                    })
                    .sum::<f64>()
                    / (n - 1.0)
                    / n
            } else {
                0.0
            };
            let q = libm::exp(log_q);
            Ok((q * mean, q * q * var))
        });
        let samples: Vec<(f64, f64)> = samples.into_iter().collect::<Result<_>>()?;
        let w = TAU / m as f64;
        let mut cells: Vec<GridCell> = centres
            .iter()
            .enumerate()
            .map(|(c, &(polar, azimuth))| {
                let chunk = &samples[c * m..(c + 1) * m];
                GridCell {
                    polar,
                    azimuth,
                    area,
                    density: w * chunk.iter().map(|s| s.0).sum::<f64>(),
                    std_error: w * libm::sqrt(chunk.iter().map(|s| s.1).sum::<f64>()),
                }
            })
            .collect();
        let raw_mass: f64 = cells.iter().map(|c| c.density * c.area).sum();
        if !(raw_mass > 0.0) {
            return Err(Error::Numerical { what: "pushforward grid normalisation", residual: raw_mass });
        }
        for c in &mut cells {
            c.density /= raw_mass;
            c.std_error /= raw_mass;
        }
        out.push(DensityGrid { t, n_polar: cfg.n_polar, n_azimuth: cfg.n_azimuth, cells, raw_mass });
    }
    Ok(out)
}
