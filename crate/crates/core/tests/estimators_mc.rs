//! Density and likelihood estimators against closed forms.

use std::f64::consts::PI;

use liebridge_core::estimators::{
    diffusion_mean_spd, heat_kernel_is, log_likelihood, metric_mle, s2_exact_kernel, s2_kernel_is, spd_log_likelihood,
    MleConfig,
};
use liebridge_core::exec::Sequential;
use liebridge_core::lie::So3;
use liebridge_core::rng::StreamKey;
use liebridge_core::sde::{brownian_endpoint, TimeGrid};
use liebridge_core::spaces::{abelian_spec, gl3_spec, GroupSpec, Spd3, S2};
use liebridge_core::{AlgebraVector, MetricParam};
use nalgebra::{DMatrix, Matrix3};

fn gaussian(x: &[f64], t: f64) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (2.0 * PI * t).powf(-(x.len() as f64) / 2.0) * (-r2 / (2.0 * t)).exp()
}

#[test]
fn abelian_estimates_equal_the_gaussian_density() {
    let spec = abelian_spec(3).unwrap();
    let key = StreamKey::named(21, "abelian-is");
    for (i, (v, t)) in [
        ([0.0, 0.0, 0.0], 1.0),
        ([1.0, 0.0, 0.0], 1.0),
        ([0.5, -0.5, 0.2], 0.3),
        ([2.0, 1.0, 0.0], 2.0),
        ([-1.0, 0.3, 0.7], 0.5),
        ([0.1, 0.1, 0.1], 0.05),
        ([3.0, 0.0, -1.0], 4.0),
        ([0.0, -2.0, 0.0], 1.5),
        ([0.7, 0.7, 0.7], 0.8),
        ([-0.2, 0.0, 1.2], 0.25),
    ]
    .into_iter()
    .enumerate()
    {
        let grid = TimeGrid::new(t, 20).unwrap();
        let est = heat_kernel_is(
            &spec,
            &AlgebraVector::from_slice(&v).unwrap(),
            &grid,
            16,
            key.derive(i as u64),
            &Sequential,
        )
        .unwrap();
        let exact = gaussian(&v, t);
        assert!((est.value - exact).abs() <= 1e-12 * exact + 3.0 * est.mc_std_error, "{v:?} T={t}");
        assert_eq!(est.mc_std_error, 0.0);
    }
}

#[test]
fn one_dimensional_estimates_integrate_to_one() {
    let spec = abelian_spec(1).unwrap().with_metric(MetricParam::diagonal(&[2.5]).unwrap()).unwrap();
    let grid = TimeGrid::new(0.7, 10).unwrap();
    let h = 0.02;
    let mut total = 0.0;
    for i in -200i32..=200 {
        let v = AlgebraVector::from_slice(&[i as f64 * h]).unwrap();
        let w = if i.abs() == 200 { 0.5 } else { 1.0 };
        total += w * h * heat_kernel_is(&spec, &v, &grid, 2, StreamKey::new(22, 0), &Sequential).unwrap().value;
    }
    assert!((total - 1.0).abs() < 0.02, "{total}");
}

#[test]
fn s2_kernel_approaches_uniform_at_large_t() {
    let space = S2::new(liebridge_core::spaces::so3_spec());
    let t = 6.0;
    let grid = TimeGrid::with_density(t, 20).unwrap();
    let est = s2_kernel_is(&space, &S2::north(), &grid, 256, StreamKey::named(23, "s2-large-t"), &Sequential).unwrap();
    let uniform = 1.0 / (4.0 * PI);
    assert!((s2_exact_kernel(0.0, t, 20) / uniform - 1.0).abs() < 0.01);
    assert!((est.value / uniform - 1.0).abs() < 0.15, "{} vs {uniform}", est.value);
}

#[test]
fn s2_kernel_depends_only_on_distance() {
    let space = S2::new(liebridge_core::spaces::so3_spec());
    let grid = TimeGrid::new(0.5, 50).unwrap();
    let key = StreamKey::named(24, "s2-symmetry");
    let a = s2_kernel_is(&space, &S2::spherical(1.2, 0.0), &grid, 256, key.derive(0), &Sequential).unwrap();
    let b = s2_kernel_is(&space, &S2::spherical(1.2, 2.1), &grid, 256, key.derive(1), &Sequential).unwrap();
    let se = (a.mc_std_error.powi(2) + b.mc_std_error.powi(2)).sqrt();
    assert!((a.value - b.value).abs() < 3.0 * se, "{} vs {} (se {se})", a.value, b.value);
    assert!(s2_kernel_is(&space, &(-S2::north()), &grid, 4, key, &Sequential).is_err());
}

#[test]
fn scalar_likelihood_peaks_at_closed_form_mle() {
    let (t, v) = (1.0, 1.5);
    let data = [AlgebraVector::from_slice(&[v]).unwrap()];
    let grid = TimeGrid::new(t, 4).unwrap();
    let best = (1..=400)
        .map(|i| 0.005 * i as f64)
        .map(|a| {
            let spec = abelian_spec(1).unwrap().with_metric(MetricParam::diagonal(&[a]).unwrap()).unwrap();
            (a, log_likelihood(&spec, &data, &grid, 1, StreamKey::new(25, 0), &Sequential).unwrap())
        })
        .fold((0.0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
    let exact = t / (v * v);
    assert!((best.0 / exact - 1.0).abs() < 0.05, "{} vs {exact}", best.0);
}

#[test]
fn so3_likelihood_prefers_the_generating_metric() {
    let truth = MetricParam::diagonal(&[0.2, 0.2, 0.8]).unwrap();
    let true_spec = GroupSpec::new(So3, truth).unwrap();
    let id_spec = GroupSpec::new(So3, MetricParam::identity(3).unwrap()).unwrap();
    let t = 0.1;
    let (data_grid, grid) = (TimeGrid::new(t, 50).unwrap(), TimeGrid::new(t, 20).unwrap());
    let wins = (0..10u64)
        .filter(|&seed| {
            let dk = StreamKey::named(seed, "ll-data");
            let data: Vec<_> = (0..128).map(|i| brownian_endpoint(&true_spec, &data_grid, &mut dk.stream(i))).collect();
            let key = StreamKey::named(seed, "ll");
            let lt = log_likelihood(&true_spec, &data, &grid, 4, key, &Sequential).unwrap();
            let li = log_likelihood(&id_spec, &data, &grid, 4, key, &Sequential).unwrap();
            lt > li
        })
        .count();
    assert!(wins >= 9, "{wins}/10");
}

fn abelian_data(n: usize, scale: f64, seed: u64) -> Vec<AlgebraVector> {
    let spec = abelian_spec(3).unwrap().with_metric(MetricParam::diagonal(&[4.0, 1.0, 1.0]).unwrap()).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let key = StreamKey::named(seed, "mle-data");
    (0..n).map(|i| brownian_endpoint(&spec, &grid, &mut key.stream(i as u64)).scale(scale)).collect()
}

fn abelian_mle(data: &[AlgebraVector], k: usize, seed: u64) -> liebridge_core::estimators::MleTrace {
    let spec = abelian_spec(3).unwrap();
    let cfg = MleConfig::new(0.1, k, 1, TimeGrid::new(1.0, 2).unwrap());
    metric_mle(&spec, data, &MetricParam::identity(3).unwrap(), &cfg, StreamKey::named(seed, "mle"), &Sequential)
        .unwrap()
}

/// Closed form: `A = T Σ̂⁻¹` with `Σ̂ = (1/n) Σ x xᵀ`.
fn covariance_mle(data: &[AlgebraVector]) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(3, 3);
    for x in data {
        let v = nalgebra::DVector::from_column_slice(x.as_slice());
        s += &v * v.transpose();
    }
    (s / data.len() as f64).try_inverse().unwrap()
}

#[test]
fn abelian_metric_mle_recovers_the_covariance_oracle() {
    let data = abelian_data(500, 1.0, 26);
    let trace = abelian_mle(&data, 100, 26);
    assert_eq!(trace.iterates.len(), 101);
    let a = trace.final_theta().unwrap();
    let oracle = covariance_mle(&data);
    for (i, want) in [4.0, 1.0, 1.0].into_iter().enumerate() {
        assert!((a[(i, i)] / want - 1.0).abs() < 0.15, "{a}");
        assert!((a[(i, i)] / oracle[(i, i)] - 1.0).abs() < 0.02, "{a} vs {oracle}");
    }

    let scaled = abelian_mle(&abelian_data(500, 2.0, 26), 100, 26);
    let b = scaled.final_theta().unwrap();
    for i in 0..3 {
        assert!((b[(i, i)] * 4.0 / a[(i, i)] - 1.0).abs() < 0.1, "{a} vs {b}");
    }
}

#[test]
fn median_likelihood_trace_increases() {
    let traces: Vec<Vec<f64>> = (0..20u64)
        .map(|seed| {
            abelian_mle(&abelian_data(50, 1.0, 100 + seed), 20, seed)
                .iterates
                .iter()
                .map(|i| i.log_likelihood)
                .collect()
        })
        .collect();
    let median = |k: usize| {
        let mut v: Vec<f64> = traces.iter().map(|t| t[k]).collect();
        v.sort_by(f64::total_cmp);
        0.5 * (v[9] + v[10])
    };
    for k in 1..=20 {
        assert!(median(k) >= median(k - 1) - 1e-9, "iteration {k}");
    }
    assert!(median(20) > median(0));
}

#[test]
fn spd_mean_of_identical_points_is_that_point() {
    let space = Spd3::new(gl3_spec());
    let data = vec![Matrix3::identity(); 16];
    let grid = TimeGrid::new(0.125, 20).unwrap();
    // line search over μ = cI
    let key = StreamKey::named(27, "line");
    let best = (0..=40)
        .map(|i| 0.7 + 0.015 * i as f64)
        .map(|c| {
            (c, spd_log_likelihood(&space, &data, &(Matrix3::identity() * c), &grid, 3, key, &Sequential).unwrap())
        })
        .fold((0.0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
    assert!((best.0 - 1.0).abs() < 0.05, "line search argmax {}", best.0);

    let cfg = MleConfig::new(0.75, 15, 3, grid);
    let trace =
        diffusion_mean_spd(&space, &data, &(Matrix3::identity() * 1.5), &cfg, StreamKey::named(27, "spd"), &Sequential)
            .unwrap();
    let mu = trace.final_theta().unwrap();
    assert!((mu - DMatrix::<f64>::identity(3, 3)).norm() < 0.1, "{mu}");
}
