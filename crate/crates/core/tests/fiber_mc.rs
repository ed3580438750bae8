//! Fiber conditioning against enumerated and symmetry oracles.

use std::f64::consts::{PI, TAU};

use liebridge_core::estimators::log_q_density;
use liebridge_core::exec::{Executor, Sequential};
use liebridge_core::fiber::{
    log_mean_exp, mh_fiber_sampler, project_path, sample_fermi_bridge, sample_kpoint_bridge, FiberChart, LatticeChart,
    MhConfig, PointSet, S2FiberChart,
};
use liebridge_core::rng::StreamKey;
use liebridge_core::sde::{sample_brownian_motion, sample_guided_bridge, TimeGrid};
use liebridge_core::spaces::{abelian_spec, so3_spec, HomogeneousSpace, S2};
use liebridge_core::AlgebraVector;

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn normalise(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
}

fn kpoint_frequencies(targets: &[f64], t: f64, n: usize, tag: &str) -> Vec<f64> {
    let spec = abelian_spec(1).unwrap();
    let pts = targets.iter().map(|x| AlgebraVector::from_slice(&[*x]).unwrap()).collect();
    let set = PointSet::uniform(spec.group(), pts).unwrap();
    let grid = TimeGrid::new(t, 100).unwrap();
    let key = StreamKey::named(11, tag);
    let mut freq = vec![0.0; targets.len()];
    for i in 0..n {
        let end = sample_kpoint_bridge(&spec, &set, &grid, &mut key.stream(i as u64)).unwrap().endpoint()[0];
        let j = targets.iter().position(|x| *x == end).expect("pinned to a target");
        freq[j] += 1.0 / n as f64;
    }
    freq
}

#[test]
fn kpoint_endpoint_frequencies_follow_gaussian_weights() {
    let n = 4000;
    let f = kpoint_frequencies(&[-1.0, 1.0], 1.0, n, "pm1");
    let se = (0.25 / n as f64).sqrt();
    assert!((f[1] - 0.5).abs() < 3.0 * se, "{f:?}");

    let f = kpoint_frequencies(&[1.0, 2.0], 1.0, n, "one-two");
    let p1 = (-0.5f64).exp() / ((-0.5f64).exp() + (-2.0f64).exp());
    let se = (p1 * (1.0 - p1) / n as f64).sqrt();
    assert!((f[0] - p1).abs() < 3.0 * se, "{} vs {p1}", f[0]);
}

fn lattice_chain(iterations: usize) -> (LatticeChart, Vec<i64>, Vec<f64>) {
    let spec = abelian_spec(1).unwrap();
    let t = 4.0;
    let chart = LatticeChart::nearest(2.0, 5).unwrap();
    let cfg = MhConfig { iterations, bridges_per_eval: 1, grid: TimeGrid::new(t, 8).unwrap(), stall_window: 500 };
    let chain = mh_fiber_sampler(&spec, &chart, &cfg, StreamKey::named(12, "lattice"), &Sequential).unwrap();
    let mut target: Vec<f64> = chart
        .points()
        .iter()
        .map(|x| log_q_density(&spec, &AlgebraVector::from_slice(&[*x]).unwrap(), t).unwrap().exp())
        .collect();
    normalise(&mut target);
    assert!(chain.warnings.is_empty());
    (chart.clone(), chain.steps.iter().map(|s| s.coord).collect(), target)
}

#[test]
fn lattice_chain_matches_wrapped_gaussian_and_is_reversible() {
    let (chart, states, target) = lattice_chain(10_000);
    let k = target.len();
    let mut freq = vec![0.0; k];
    for s in &states {
        freq[(s - chart.lo) as usize] += 1.0 / states.len() as f64;
    }
    assert!(tv(&freq, &target) < 0.05, "{freq:?} vs {target:?}");

    let mut counts = vec![vec![0.0f64; k]; k];
    for w in states.windows(2) {
        counts[(w[0] - chart.lo) as usize][(w[1] - chart.lo) as usize] += 1.0;
    }
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (counts[i][j], counts[j][i]);
            assert!((a - b).abs() <= 3.0 * (a + b).sqrt().max(1.0), "{i}->{j}: {a} vs {b}");
        }
    }
}

#[test]
fn s2_chain_on_64_angles_matches_grid_oracle() {
    let spec = so3_spec();
    let t = 0.5;
    let v = S2::spherical(1.0, 0.3);
    let bins = 64;
    let grid = TimeGrid::new(t, 25).unwrap();
    let chart = S2FiberChart::new(&v, 0.6, bins).unwrap();
    let cfg = MhConfig { iterations: 10_000, bridges_per_eval: 4, grid, stall_window: 1000 };
    let chain = mh_fiber_sampler(&spec, &chart, &cfg, StreamKey::named(13, "s2-mh"), &Sequential).unwrap();

    // fixed c̄ per angle from many bridges
    let key = StreamKey::named(13, "s2-oracle");
    let mut target: Vec<f64> = Sequential.map(bins, |j| {
        let g = chart.point(&(TAU * j as f64 / bins as f64)).unwrap();
        let Ok(lq) = log_q_density(&spec, &g, t) else { return 0.0 };
        let phis: Vec<f64> = (0..256)
            .filter_map(|b| {
                let mut noise = key.derive(j as u64).stream(b);
                sample_guided_bridge(&spec, &g, &grid, &mut noise).ok().map(|p| p.log_phi)
            })
            .collect();
        (lq + log_mean_exp(&phis)).exp()
    });
    normalise(&mut target);
    let mut freq = vec![0.0; bins];
    let width = TAU / bins as f64;
    for s in &chain.steps {
        freq[(s.coord / width).round() as usize % bins] += 1.0 / chain.steps.len() as f64;
    }
    let d = tv(&freq, &target);
    assert!(d < 0.1, "TV {d}");
}

/// The base error at `t_{k-1}` follows the same `a₁·(codim)·Δt` law as point bridges.
#[test]
fn fermi_penultimate_base_error_scales_with_dt() {
    let space = S2::new(so3_spec());
    let v = S2::spherical(PI / 2.0, 0.0);
    let a1 = 1.0 + (2..10_000).map(|m| 1.0 / (m as f64 * ((m - 1) as f64).powi(2))).sum::<f64>();
    for k in [100usize, 200] {
        let grid = TimeGrid::new(1.0, k).unwrap();
        let key = StreamKey::named(14, "fermi-end");
        let d2: Vec<f64> = Sequential.map(1000, |i| {
            let p = sample_fermi_bridge(&space, &v, &grid, &mut key.stream(i as u64)).unwrap();
            let b = space.project(&p.points[k - 1]);
            assert!((space.project(&p.endpoint()) - v).norm() < 1e-9);
            (b - v).norm_squared()
        });
        let mean = d2.iter().sum::<f64>() / d2.len() as f64;
        let want = a1 * 2.0 * grid.dt();
        assert!((mean / want - 1.0).abs() < 0.15, "k={k}: {mean} vs {want}");
    }
}

/// Kolmogorov–Smirnov test of `X_T n` azimuth uniformity under the bi-invariant metric.
#[test]
fn projected_bm_is_rotationally_symmetric() {
    let spec = so3_spec();
    let space = S2::new(spec.clone());
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let key = StreamKey::named(15, "ks");
    let n = 2000;
    let mut az: Vec<f64> = (0..n)
        .map(|i| {
            let path = sample_brownian_motion(&spec, &grid, &mut key.stream(i));
            let b = *project_path(&space, &path).points.last().unwrap();
            (b.y.atan2(b.x) + TAU) % TAU / TAU
        })
        .collect();
    az.sort_by(f64::total_cmp);
    let d = az
        .iter()
        .enumerate()
        .map(|(i, x)| (x - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - x).abs()))
        .fold(0.0, f64::max);
    // critical value for p = 0.01
    assert!(d < 1.628 / (n as f64).sqrt(), "KS D = {d}");
}
