//! Experiment orchestration. Every experiment draws its noise from
//! `StreamKey::named(seed, experiment)`, path `i` from stream `i`.

use std::f64::consts::PI;
use std::time::Instant;

use liebridge_core::estimators::{
    diffusion_mean_spd, fermi_density_is, heat_kernel_is, log_q_density, metric_mle, pushforward_density_grid,
    s2_exact_kernel, s2_kernel_is, DensityEstimate, GridConfig, MleConfig, MleTrace,
};
use liebridge_core::exec::Executor;
use liebridge_core::fiber::{
    mh_fiber_sampler, project_path, sample_fermi_bridge, sample_kpoint_bridge, truncated_lattice, FiberChart,
    LatticeChart, MhChain, MhConfig, PointSet, S2FiberChart,
};
use liebridge_core::lie::{Abelian, Gl3, LieGroup, So3};
use liebridge_core::metric::upper_entries;
use liebridge_core::rng::StreamKey;
use liebridge_core::sde::{brownian_endpoint, sample_brownian_motion, sample_guided_bridge, SamplePath, TimeGrid};
use liebridge_core::spaces::{abelian_spec, Circle, GroupSpec, HomogeneousSpace, Spd3, S2};
use liebridge_core::{AlgebraVector, Error, MetricParam, Warning};
use nalgebra::{Matrix3, Vector3};
use serde_json::{json, Map, Value};

use crate::config::{fmt_f64, Experiment, ExperimentConfig, MetricLit, PointLit, Space};
use crate::error::CliError;
use crate::exec::Parallel;
use crate::output::{header, nums, Artifacts, RunManifest};

type Res<T> = Result<T, CliError>;

pub fn run_experiment(cfg: &ExperimentConfig) -> Res<RunManifest> {
    run_experiment_with(cfg, &Parallel::from_env())
}

pub fn run_experiment_with<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Res<RunManifest> {
    let start = Instant::now();
    let mut ctx = Ctx {
        cfg,
        key: StreamKey::named(cfg.seed, cfg.experiment.name()),
        out: Artifacts::create(&cfg.output_dir)?,
        warnings: Vec::new(),
        summary: Map::new(),
    };
    match cfg.experiment {
        Experiment::Bm => bm(&mut ctx, exec)?,
        Experiment::Bridge => match cfg.space {
            Space::So3 => bridge(&mut ctx, &so3(&cfg.metric)?, exec)?,
            Space::Gl3 => bridge(&mut ctx, &gl3(&cfg.metric)?, exec)?,
            Space::Abelian(d) => bridge(&mut ctx, &abelian(d, &cfg.metric)?, exec)?,
            _ => unreachable!("rejected by the config parser"),
        },
        Experiment::Fermi => match cfg.space {
            Space::S2 => {
                let space = S2::new(so3(&cfg.metric)?);
                fermi(&mut ctx, &space, &s2_point(&cfg.target)?, exec)?
            }
            Space::Spd3 => {
                let space = Spd3::new(gl3(&cfg.metric)?);
                fermi(&mut ctx, &space, &matrix(&cfg.target), exec)?
            }
            _ => {
                let space = Circle::new(abelian(1, &cfg.metric)?)?;
                fermi(&mut ctx, &space, &ambient(&cfg.target)[0], exec)?
            }
        },
        Experiment::Kpoint => kpoint(&mut ctx, exec)?,
        Experiment::Mh => mh(&mut ctx, exec)?,
        Experiment::MetricMle => match cfg.space {
            Space::So3 => mle(&mut ctx, &So3, exec)?,
            Space::Gl3 => mle(&mut ctx, &Gl3, exec)?,
            Space::Abelian(d) => mle(&mut ctx, &Abelian::new(d)?, exec)?,
            _ => unreachable!("rejected by the config parser"),
        },
        Experiment::SpdMean => spd_mean(&mut ctx, exec)?,
        Experiment::S2Kernel => s2_kernel(&mut ctx, exec)?,
        Experiment::S2Aniso => s2_aniso(&mut ctx, exec)?,
    }
    let manifest = RunManifest {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION"),
        files: ctx.out.files.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        warnings: ctx.warnings,
        summary: ctx.summary,
    };
    ctx.out.write_manifest(&manifest)?;
    Ok(manifest)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    key: StreamKey,
    out: Artifacts,
    warnings: Vec<String>,
    summary: Map<String, Value>,
}

impl Ctx<'_> {
    fn note(&mut self, k: &str, v: impl Into<Value>) {
        self.summary.insert(k.to_string(), v.into());
    }

    fn warn(&mut self, w: &[Warning]) {
        self.warnings.extend(w.iter().map(|w| format!("{w:?}")));
    }

    fn note_estimate(&mut self, e: &DensityEstimate) {
        self.note("density", e.value);
        self.note("mc_std_error", e.mc_std_error);
        self.note("n_bridges", e.n_bridges);
    }
}

fn metric_param(d: usize, lit: &MetricLit) -> liebridge_core::Result<MetricParam> {
    match lit {
        MetricLit::Identity => MetricParam::identity(d),
        MetricLit::Upper(v) => MetricParam::from_upper(d, v),
    }
}

fn so3(lit: &MetricLit) -> liebridge_core::Result<GroupSpec<So3>> {
    GroupSpec::new(So3, metric_param(3, lit)?)
}

fn gl3(lit: &MetricLit) -> liebridge_core::Result<GroupSpec<Gl3>> {
    GroupSpec::new(Gl3, metric_param(9, lit)?)
}

fn abelian(d: usize, lit: &MetricLit) -> liebridge_core::Result<GroupSpec<Abelian>> {
    abelian_spec(d)?.with_metric(metric_param(d, lit)?)
}

fn ambient(lit: &PointLit) -> &[f64] {
    match lit {
        PointLit::Exp(v) | PointLit::Ambient(v) => v,
    }
}

fn group_point<G: LieGroup>(g: &G, lit: &PointLit) -> liebridge_core::Result<G::Point> {
    match lit {
        PointLit::Exp(v) => Ok(g.exp(&AlgebraVector::from_slice(v)?)),
        PointLit::Ambient(v) => g.from_ambient(v),
    }
}

fn s2_point(lit: &PointLit) -> liebridge_core::Result<Vector3<f64>> {
    let v = Vector3::from_column_slice(ambient(lit));
    let n = v.norm();
    if !(n > 0.0) {
        return Err(Error::InvalidInput("S² target must be a non-zero 3-vector".into()));
    }
    Ok(v / n)
}

fn matrix(lit: &PointLit) -> Matrix3<f64> {
    Matrix3::from_row_slice(ambient(lit))
}

fn path_header(prefix: &str, n: usize) -> Vec<String> {
    let mut h = header(&["path", "t"]);
    h.extend((0..n).map(|i| format!("{prefix}{i}")));
    h.push("log_phi".into());
    h
}

/// One row per grid time; `log_phi` only on each path's final row.
fn path_rows<P>(paths: &[SamplePath<P>], coords: impl Fn(&P) -> Vec<f64>) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (p, path) in paths.iter().enumerate() {
        let last = path.points.len() - 1;
        for (i, x) in path.points.iter().enumerate() {
            let mut row = vec![p.to_string(), fmt_f64(path.grid.time(i))];
            row.extend(nums(coords(x)));
            row.push(if i == last { fmt_f64(path.log_phi) } else { String::new() });
            rows.push(row);
        }
    }
    rows
}

fn write_group_paths<G: LieGroup>(ctx: &mut Ctx, g: &G, paths: &[SamplePath<G::Point>]) -> Res<()> {
    let n = g.ambient(&g.identity()).len();
    ctx.out.csv("paths.csv", &path_header("x", n), path_rows(paths, |x| g.ambient(x)))
}

fn write_base_paths<S: HomogeneousSpace>(
    ctx: &mut Ctx,
    space: &S,
    paths: &[SamplePath<<S::Group as LieGroup>::Point>],
) -> Res<()> {
    let n = space.base_coords(&space.project(&space.spec().group().identity())).len();
    let rows: Vec<Vec<String>> = paths
        .iter()
        .enumerate()
        .flat_map(|(p, path)| {
            let proj = project_path(space, path);
            let last = proj.points.len() - 1;
            proj.points
                .iter()
                .zip(&proj.times)
                .enumerate()
                .map(|(i, (b, t))| {
                    let mut row = vec![p.to_string(), fmt_f64(*t)];
                    row.extend(nums(space.base_coords(b)));
                    row.push(if i == last { fmt_f64(proj.log_phi) } else { String::new() });
                    row
                })
                .collect::<Vec<_>>()
        })
        .collect();
    ctx.out.csv("base_paths.csv", &path_header("b", n), rows)
}

fn bm<E: Executor>(ctx: &mut Ctx, exec: &E) -> Res<()> {
    let cfg = ctx.cfg;
    let grid = TimeGrid::new(cfg.t, cfg.steps)?;
    fn run<G: LieGroup, E: Executor>(
        spec: &GroupSpec<G>,
        grid: &TimeGrid,
        n: usize,
        key: StreamKey,
        exec: &E,
    ) -> Vec<SamplePath<G::Point>> {
        exec.map(n, |i| sample_brownian_motion(spec, grid, &mut key.stream(i as u64)))
    }
    match cfg.space {
        Space::So3 | Space::S2 => {
            let spec = so3(&cfg.metric)?;
            let paths = run(&spec, &grid, cfg.n_paths, ctx.key, exec);
            write_group_paths(ctx, &So3, &paths)?;
            if cfg.space == Space::S2 {
                write_base_paths(ctx, &S2::new(spec), &paths)?;
            }
        }
        Space::Gl3 | Space::Spd3 => {
            let spec = gl3(&cfg.metric)?;
            let paths = run(&spec, &grid, cfg.n_paths, ctx.key, exec);
            write_group_paths(ctx, &Gl3, &paths)?;
            if cfg.space == Space::Spd3 {
                write_base_paths(ctx, &Spd3::new(spec), &paths)?;
            }
        }
        Space::Abelian(d) => {
            let spec = abelian(d, &cfg.metric)?;
            let paths = run(&spec, &grid, cfg.n_paths, ctx.key, exec);
            write_group_paths(ctx, spec.group(), &paths)?;
        }
    }
    Ok(())
}

fn bridge<G: LieGroup, E: Executor>(ctx: &mut Ctx, spec: &GroupSpec<G>, exec: &E) -> Res<()> {
    let cfg = ctx.cfg;
    let grid = TimeGrid::new(cfg.t, cfg.steps)?;
    let v = group_point(spec.group(), &cfg.target)?;
    let key = ctx.key;
    let paths = exec
        .map(cfg.n_paths, |i| sample_guided_bridge(spec, &v, &grid, &mut key.stream(i as u64)))
        .into_iter()
        .collect::<liebridge_core::Result<Vec<_>>>()?;
    write_group_paths(ctx, spec.group(), &paths)?;
    let est = heat_kernel_is(spec, &v, &grid, cfg.n_paths, key, exec)?;
    ctx.note_estimate(&est);
    ctx.note("resamples", paths.iter().map(|p| p.resamples as u64).sum::<u64>());
    Ok(())
}

fn fermi<S: HomogeneousSpace, E: Executor>(ctx: &mut Ctx, space: &S, v: &S::Base, exec: &E) -> Res<()> {
    let cfg = ctx.cfg;
    let grid = TimeGrid::new(cfg.t, cfg.steps)?;
    let key = ctx.key;
    let paths = exec
        .map(cfg.n_paths, |i| sample_fermi_bridge(space, v, &grid, &mut key.stream(i as u64)))
        .into_iter()
        .collect::<liebridge_core::Result<Vec<_>>>()?;
    write_group_paths(ctx, space.spec().group(), &paths)?;
    write_base_paths(ctx, space, &paths)?;
    let est = fermi_density_is(space, v, &grid, cfg.n_paths, key, exec)?;
    ctx.note_estimate(&est);
    Ok(())
}

/// Wrapped-Gaussian weights `∝ exp(-a x² / 2T)` of lattice points, normalised.
pub fn lattice_weights(a: f64, t: f64, points: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = points.iter().map(|x| (-a * x * x / (2.0 * t)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn kpoint<E: Executor>(ctx: &mut Ctx, exec: &E) -> Res<()> {
    let cfg = ctx.cfg;
    let spec = abelian(1, &cfg.metric)?;
    let grid = TimeGrid::new(cfg.t, cfg.steps)?;
    let lattice = truncated_lattice(ambient(&cfg.target)[0], cfg.lattice_points);
    let points = lattice.iter().map(|x| AlgebraVector::from_slice(&[*x])).collect::<liebridge_core::Result<_>>()?;
    let targets = PointSet::uniform(spec.group(), points)?;
    let key = ctx.key;
    let paths = exec
        .map(cfg.n_paths, |i| sample_kpoint_bridge(&spec, &targets, &grid, &mut key.stream(i as u64)))
        .into_iter()
        .collect::<liebridge_core::Result<Vec<_>>>()?;
    let mut counts = vec![0usize; lattice.len()];
    for p in &paths {
        let end = p.endpoint()[0];
        if let Some(j) = lattice.iter().position(|x| (x - end).abs() < 1e-9) {
            counts[j] += 1;
        }
    }
    let freq: Vec<f64> = counts.iter().map(|c| *c as f64 / paths.len() as f64).collect();
    let weights = lattice_weights(spec.metric().matrix()[(0, 0)], cfg.t, &lattice);
    write_group_paths(ctx, spec.group(), &paths)?;
    let rows = (0..lattice.len()).map(|j| nums([lattice[j], weights[j], freq[j]]));
    ctx.out.csv("endpoints.csv", &header(&["point", "weight", "frequency"]), rows)?;
    ctx.note("tv", total_variation(&freq, &weights));
    Ok(())
}

fn mh<E: Executor>(ctx: &mut Ctx, exec: &E) -> Res<()> {
    let cfg = ctx.cfg;
    let mh_cfg = MhConfig {
        iterations: cfg.k,
        bridges_per_eval: cfg.m,
        grid: TimeGrid::new(cfg.t, cfg.steps)?,
        stall_window: cfg.stall_window,
    };
    fn write<G: LieGroup, F: FiberChart<G>>(
        ctx: &mut Ctx,
        chart: &F,
        chain: &MhChain<F::Coord>,
        names: &[&str],
    ) -> Res<()> {
        let mut h = header(&["iteration"]);
        h.extend(header(names));
        h.extend(header(&["log_c", "accepted"]));
        let rows = chain.steps.iter().map(|s| {
            let mut row = vec![s.iteration.to_string()];
            row.extend(nums(chart.coords(&s.coord)));
            row.push(fmt_f64(s.log_c));
            row.push(u8::from(s.accepted).to_string());
            row
        });
        ctx.out.csv("chain.csv", &h, rows)?;
        ctx.note("acceptance_rate", chain.acceptance_rate());
        ctx.warn(&chain.warnings);
        Ok(())
    }
    match cfg.space {
        Space::S2 => {
            let spec = so3(&cfg.metric)?;
            let chart = S2FiberChart::new(&s2_point(&cfg.target)?, cfg.proposal_scale, cfg.bins)?;
            let chain = mh_fiber_sampler(&spec, &chart, &mh_cfg, ctx.key, exec)?;
            write(ctx, &chart, &chain, &["s"])
        }
        _ => {
            let spec = abelian(1, &cfg.metric)?;
            let chart = LatticeChart::nearest(ambient(&cfg.target)[0], cfg.lattice_points)?;
            let chain = mh_fiber_sampler(&spec, &chart, &mh_cfg, ctx.key, exec)?;
            write(ctx, &chart, &chain, &["j", "point"])?;
            let pts = chart.points();
            let mut freq = vec![0.0; pts.len()];
            for s in &chain.steps {
                freq[(s.coord - chart.lo) as usize] += 1.0 / chain.steps.len() as f64;
            }
            let mut dens = Vec::with_capacity(pts.len());
            for x in &pts {
                dens.push(log_q_density(&spec, &AlgebraVector::from_slice(&[*x])?, cfg.t)?.exp());
            }
            let total: f64 = dens.iter().sum();
            dens.iter_mut().for_each(|d| *d /= total);
            let rows = (0..pts.len()).map(|j| {
                let mut row = vec![(chart.lo + j as i64).to_string()];
                row.extend(nums([pts[j], dens[j], freq[j]]));
                row
            });
            ctx.out.csv("fiber_density.csv", &header(&["j", "point", "density", "frequency"]), rows)?;
            ctx.note("tv", total_variation(&freq, &dens));
            Ok(())
        }
    }
}

fn write_trace(ctx: &mut Ctx, trace: &MleTrace, prefix: &str) -> Res<()> {
    let d = trace.iterates.first().map_or(0, |it| it.theta.nrows());
    let mut h = header(&["iteration", "log_likelihood", "grad_norm"]);
    for i in 0..d {
        for j in i..d {
            h.push(format!("{prefix}{i}{j}"));
        }
    }
    let rows = trace.iterates.iter().map(|it| {
        let mut row = vec![it.iteration.to_string(), fmt_f64(it.log_likelihood), fmt_f64(it.grad_norm)];
        row.extend(nums(upper_entries(&it.theta)));
        row
    });
    ctx.out.csv("trace.csv", &h, rows)?;
    let json = json!({
        "iterates": trace.iterates.iter().map(|it| json!({
            "iteration": it.iteration,
            "log_likelihood": it.log_likelihood,
            "grad_norm": it.grad_norm,
            "theta": it.theta.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "projections": trace.projections,
        "warnings": trace.warnings.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>(),
    });
    ctx.out.json("trace.json", &json)?;
    ctx.warn(&trace.warnings);
    if let Some(theta) = trace.final_theta() {
        ctx.note("final", upper_entries(theta));
    }
    Ok(())
}

fn mle<G: LieGroup, E: Executor>(ctx: &mut Ctx, g: &G, exec: &E) -> Res<()> {
    let cfg = ctx.cfg;
    let d = g.dim();
    let data_spec = GroupSpec::new(g.clone(), metric_param(d, &cfg.data_metric)?)?;
    let data_grid = TimeGrid::new(cfg.t, cfg.data_steps)?;
    let data_key = StreamKey::named(cfg.seed, "metric-mle/data");
    let data = exec.map(cfg.n_data, |i| brownian_endpoint(&data_spec, &data_grid, &mut data_key.stream(i as u64)));
    let n = g.ambient(&g.identity()).len();
    let mut h = header(&["index"]);
    h.extend((0..n).map(|i| format!("x{i}")));
    let rows = data.iter().enumerate().map(|(i, x)| {
        let mut row = vec![i.to_string()];
        row.extend(nums(g.ambient(x)));
        row
    });
    ctx.out.csv("data.csv", &h, rows)?;
    let theta0 = metric_param(d, &cfg.metric)?;
    let mle_cfg = MleConfig::new(cfg.eta, cfg.k, cfg.m, TimeGrid::new(cfg.t, cfg.steps)?);
    let trace = metric_mle(&data_spec, &data, &theta0, &mle_cfg, ctx.key, exec)?;
    write_trace(ctx, &trace, "a")
}

fn spd_mean<E: Executor>(ctx: &mut Ctx, exec: &E) -> Res<()> {
    let cfg = ctx.cfg;
    let space = Spd3::new(gl3(&cfg.metric)?);
    let data_spec = gl3(&cfg.data_metric)?;
    let data_grid = TimeGrid::new(cfg.t, cfg.data_steps)?;
    let data_key = StreamKey::named(cfg.seed, "spd-mean/data");
    let data: Vec<Matrix3<f64>> = exec
        .map(cfg.n_data, |i| brownian_endpoint(&data_spec, &data_grid, &mut data_key.stream(i as u64)))
        .iter()
        .map(|g| space.project(g))
        .collect();
    let rows = data.iter().enumerate().map(|(i, p)| {
        let mut row = vec![i.to_string()];
        row.extend(nums(space.base_coords(p)));
        row
    });
    let mut h = header(&["index"]);
    h.extend((0..9).map(|i| format!("p{i}")));
    ctx.out.csv("data.csv", &h, rows)?;
    let mu0 = Matrix3::identity() * cfg.mu0_scale;
    let mle_cfg = MleConfig::new(cfg.eta, cfg.k, cfg.m, TimeGrid::new(cfg.t, cfg.steps)?);
    let trace = diffusion_mean_spd(&space, &data, &mu0, &mle_cfg, ctx.key, exec)?;
    write_trace(ctx, &trace, "mu")?;
    if let Some(mu) = trace.final_theta() {
        let dist = (mu - nalgebra::DMatrix::<f64>::identity(3, 3)).norm();
        ctx.note("distance_to_identity", dist);
    }
    Ok(())
}

fn s2_kernel<E: Executor>(ctx: &mut Ctx, exec: &E) -> Res<()> {
    let cfg = ctx.cfg;
    let space = S2::new(so3(&cfg.metric)?);
    let grid = TimeGrid::new(cfg.t, cfg.steps)?;
    let mut rows = Vec::with_capacity(cfg.n_points);
    let mut worst: f64 = 0.0;
    for k in 0..cfg.n_points {
        let theta = PI * k as f64 / cfg.n_points as f64;
        let est =
            s2_kernel_is(&space, &S2::spherical(theta, 0.0), &grid, cfg.n_bridges, ctx.key.derive(k as u64), exec)?;
        let exact = s2_exact_kernel(theta, cfg.t, 20);
        let rel = (est.value - exact).abs() / exact;
        if exact > 0.01 {
            worst = worst.max(rel);
        }
        rows.push(nums([theta, est.value, est.mc_std_error, exact, rel]));
    }
    ctx.out.csv("grid.csv", &header(&["theta", "estimate", "std_error", "exact", "rel_error"]), rows)?;
    ctx.note("max_rel_error", worst);
    Ok(())
}

fn s2_aniso<E: Executor>(ctx: &mut Ctx, exec: &E) -> Res<()> {
    let cfg = ctx.cfg;
    let grid_cfg = GridConfig {
        n_polar: cfg.grid_polar,
        n_azimuth: cfg.grid_azimuth,
        fiber_points: cfg.fiber_points,
        bridges: cfg.n_bridges,
        steps_per_unit: cfg.steps,
    };
    let grids = pushforward_density_grid(&metric_param(3, &cfg.metric)?, &cfg.t_list, &grid_cfg, ctx.key, exec)?;
    let mut summary = Vec::new();
    for g in &grids {
        let rows = g.cells.iter().enumerate().map(|(i, c)| {
            let mut row = vec![(i / g.n_azimuth).to_string(), (i % g.n_azimuth).to_string()];
            row.extend(nums([c.polar, c.azimuth, c.area, c.density, c.std_error]));
            row
        });
        let h = header(&["band", "sector", "polar", "azimuth", "area", "density", "std_error"]);
        ctx.out.csv(&format!("grid_T{}.csv", fmt_f64(g.t)), &h, rows)?;
        summary.push(nums([g.t, g.tv_to_uniform(), g.anisotropy_ratio(0.5), g.raw_mass]));
    }
    ctx.out.csv("summary.csv", &header(&["T", "tv_to_uniform", "anisotropy_ratio", "raw_mass"]), summary)?;
    Ok(())
}
