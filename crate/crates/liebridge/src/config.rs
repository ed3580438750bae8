//! Experiment configuration: `key = value` lines or a flat JSON object.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Bm,
    Bridge,
    Fermi,
    Kpoint,
    Mh,
    MetricMle,
    SpdMean,
    S2Kernel,
    S2Aniso,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Bm,
        Experiment::Bridge,
        Experiment::Fermi,
        Experiment::Kpoint,
        Experiment::Mh,
        Experiment::MetricMle,
        Experiment::SpdMean,
        Experiment::S2Kernel,
        Experiment::S2Aniso,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bm => "bm",
            Experiment::Bridge => "bridge",
            Experiment::Fermi => "fermi",
            Experiment::Kpoint => "kpoint",
            Experiment::Mh => "mh",
            Experiment::MetricMle => "metric-mle",
            Experiment::SpdMean => "spd-mean",
            Experiment::S2Kernel => "s2-kernel",
            Experiment::S2Aniso => "s2-aniso",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    fn allowed_spaces(self) -> &'static [&'static str] {
        match self {
            Experiment::Bm => &["so3", "gl3", "abelian", "s2", "spd3"],
            Experiment::Bridge | Experiment::MetricMle => &["so3", "gl3", "abelian"],
            Experiment::Fermi => &["s2", "spd3", "abelian"],
            Experiment::Kpoint => &["abelian"],
            Experiment::Mh => &["abelian", "s2"],
            Experiment::SpdMean => &["spd3"],
            Experiment::S2Kernel | Experiment::S2Aniso => &["s2"],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    So3,
    Gl3,
    Abelian(usize),
    S2,
    Spd3,
}

impl Space {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "so3" => Some(Space::So3),
            "gl3" => Some(Space::Gl3),
            "s2" => Some(Space::S2),
            "spd3" => Some(Space::Spd3),
            "abelian" => Some(Space::Abelian(1)),
            _ => {
                let d: usize = s.strip_prefix("abelian:")?.parse().ok()?;
                (1..=liebridge_core::MAX_DIM).contains(&d).then_some(Space::Abelian(d))
            }
        }
    }

    fn family(self) -> &'static str {
        match self {
            Space::So3 => "so3",
            Space::Gl3 => "gl3",
            Space::Abelian(_) => "abelian",
            Space::S2 => "s2",
            Space::Spd3 => "spd3",
        }
    }

    /// Dimension of the group acting on the space.
    pub fn group_dim(self) -> usize {
        match self {
            Space::So3 | Space::S2 => 3,
            Space::Gl3 | Space::Spd3 => 9,
            Space::Abelian(d) => d,
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Abelian(d) => write!(f, "abelian:{d}"),
            s => f.write_str(s.family()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MetricLit {
    Identity,
    /// Upper triangle, row by row.
    Upper(Vec<f64>),
}

/// A group point given by algebra coordinates (`exp:`) or ambient entries.
#[derive(Clone, Debug, PartialEq)]
pub enum PointLit {
    Exp(Vec<f64>),
    Ambient(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub space: Space,
    pub t: f64,
    /// Integrator steps over `[0, T]`; per unit time for `s2-aniso`.
    pub steps: usize,
    pub n_paths: usize,
    pub n_bridges: usize,
    /// Iterations of the optimiser or the MH chain.
    pub k: usize,
    /// Bridges per observation or per MH target evaluation.
    pub m: usize,
    pub eta: f64,
    pub seed: u64,
    /// Metric of the sampler, or the starting point `θ₀` for `metric-mle`.
    pub metric: MetricLit,
    pub target: PointLit,
    pub output_dir: PathBuf,
    pub t_list: Vec<f64>,
    pub n_data: usize,
    pub data_steps: usize,
    pub data_metric: MetricLit,
    pub lattice_points: usize,
    pub proposal_scale: f64,
    pub bins: usize,
    pub n_points: usize,
    pub mu0_scale: f64,
    pub grid_polar: usize,
    pub grid_azimuth: usize,
    pub fiber_points: usize,
    pub stall_window: usize,
}

const KEYS: [&str; 26] = [
    "experiment",
    "space",
    "T",
    "steps",
    "n_paths",
    "n_bridges",
    "K",
    "m",
    "eta",
    "seed",
    "metric",
    "target",
    "output_dir",
    "t_list",
    "n_data",
    "data_steps",
    "data_metric",
    "lattice_points",
    "proposal_scale",
    "bins",
    "n_points",
    "mu0_scale",
    "grid_polar",
    "grid_azimuth",
    "fiber_points",
    "stall_window",
];

/// A raw value and the line it came from (0 for JSON and overrides).
type Raw = BTreeMap<String, (String, usize)>;

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    parse_config_with(text, &[])
}

/// Parses `text`, then applies `overrides` (as if appended to the file) before validating.
pub fn parse_config_with(text: &str, overrides: &[(&str, String)]) -> Result<ExperimentConfig, CliError> {
    let mut raw = if text.trim_start().starts_with('{') { read_json(text)? } else { read_lines(text)? };
    for (k, v) in overrides {
        check_key(k, 0)?;
        if *k == "experiment" {
            if let Some((prev, line)) = raw.get("experiment") {
                if prev != v {
                    return Err(CliError::config(
                        *line,
                        "experiment",
                        format!("config says '{prev}' but '{v}' was requested"),
                    ));
                }
            }
        }
        raw.insert((*k).to_string(), (v.clone(), 0));
    }
    build(raw)
}

fn check_key(key: &str, line: usize) -> Result<(), CliError> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(CliError::config(line, key, "unknown key".into()))
    }
}

fn read_lines(text: &str) -> Result<Raw, CliError> {
    let mut raw = Raw::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::config(line_no, line, "expected key = value".into()));
        };
        let (k, v) = (k.trim(), v.trim());
        check_key(k, line_no)?;
        if raw.insert(k.to_string(), (unquote(v).to_string(), line_no)).is_some() {
            return Err(CliError::config(line_no, k, "duplicate key".into()));
        }
    }
    Ok(raw)
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

fn read_json(text: &str) -> Result<Raw, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::config(e.line(), "<json>", e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| CliError::config(0, "<json>", "expected an object".into()))?;
    let mut raw = Raw::new();
    for (k, v) in obj {
        check_key(k, 0)?;
        let s = match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Array(items) => {
                let parts: Option<Vec<String>> = items.iter().map(|x| x.as_f64().map(fmt_f64)).collect();
                parts.ok_or_else(|| CliError::config(0, k, "arrays must hold numbers".into()))?.join(",")
            }
            _ => return Err(CliError::config(0, k, "expected a string, number or array of numbers".into())),
        };
        raw.insert(k.clone(), (s, 0));
    }
    Ok(raw)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn reals(s: &str) -> Option<Vec<f64>> {
    let s = s.trim().trim_start_matches('[').trim_end_matches(']');
    if s.trim().is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse::<f64>().ok().filter(|v| v.is_finite())).collect()
}

struct Reader {
    raw: Raw,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.raw.remove(key)
    }

    fn positive_real(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some((s, line)) => match s.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
                Ok(_) => Err(CliError::config(line, key, format!("must be positive, got {s}"))),
                Err(_) => Err(CliError::config(line, key, format!("not a number: '{s}'"))),
            },
        }
    }

    fn positive_int(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some((s, line)) => match s.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                Ok(_) => Err(CliError::config(line, key, "must be positive".into())),
                Err(_) => Err(CliError::config(line, key, format!("not a positive integer: '{s}'"))),
            },
        }
    }

    fn metric(&mut self, key: &str, d: usize, default: MetricLit) -> Result<MetricLit, CliError> {
        let Some((s, line)) = self.take(key) else { return Ok(default) };
        if s == "identity" {
            return Ok(MetricLit::Identity);
        }
        let n = d * (d + 1) / 2;
        let malformed = || CliError::config(line, key, format!("malformed metric '{s}'"));
        if let Some(body) = s.strip_prefix("diag:") {
            let diag = reals(body).ok_or_else(malformed)?;
            if diag.len() != d {
                return Err(CliError::config(line, key, format!("expected {d} diagonal entries")));
            }
            let mut upper = Vec::with_capacity(n);
            for i in 0..d {
                for j in i..d {
                    upper.push(if i == j { diag[i] } else { 0.0 });
                }
            }
            return Ok(MetricLit::Upper(upper));
        }
        let v = reals(&s).ok_or_else(malformed)?;
        if v.len() != n {
            return Err(CliError::config(
                line,
                key,
                format!("expected 'identity' or {n} upper-triangle entries, got {}", v.len()),
            ));
        }
        Ok(MetricLit::Upper(v))
    }
}

fn default_target(space: Space, experiment: Experiment) -> PointLit {
    match space {
        Space::So3 => PointLit::Exp(vec![0.0, 0.0, 1.0]),
        Space::Gl3 => PointLit::Exp(vec![0.3, 0.1, 0.0, -0.1, 0.2, 0.0, 0.0, 0.0, -0.2]),
        Space::Abelian(d) => {
            let v =
                if matches!(experiment, Experiment::Kpoint | Experiment::Mh | Experiment::Fermi) { 2.0 } else { 1.0 };
            PointLit::Ambient(vec![v; d])
        }
        Space::S2 => PointLit::Ambient(vec![1f64.sin(), 0.0, 1f64.cos()]),
        Space::Spd3 => PointLit::Ambient(vec![2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5]),
    }
}

fn target_len_ok(space: Space, lit: &PointLit) -> bool {
    match (space, lit) {
        (Space::So3 | Space::Gl3 | Space::Abelian(_), PointLit::Exp(v)) => v.len() == space.group_dim(),
        (Space::So3 | Space::Gl3, PointLit::Ambient(v)) => v.len() == 9,
        (Space::Abelian(d), PointLit::Ambient(v)) => v.len() == d,
        (Space::S2, PointLit::Ambient(v)) => v.len() == 3,
        (Space::Spd3, PointLit::Ambient(v)) => v.len() == 9,
        _ => false,
    }
}

fn build(raw: Raw) -> Result<ExperimentConfig, CliError> {
    let mut r = Reader { raw };
    let (name, line) = r.take("experiment").ok_or_else(|| CliError::config(0, "experiment", "missing".into()))?;
    let experiment = Experiment::parse(&name)
        .ok_or_else(|| CliError::config(line, "experiment", format!("unknown experiment '{name}'")))?;
    use Experiment as E;

    let default_space = match experiment {
        E::Bm | E::Bridge | E::MetricMle => Space::So3,
        E::Fermi | E::S2Kernel | E::S2Aniso => Space::S2,
        E::Kpoint | E::Mh => Space::Abelian(1),
        E::SpdMean => Space::Spd3,
    };
    let space = match r.take("space") {
        None => default_space,
        Some((s, line)) => {
            let sp = Space::parse(&s).ok_or_else(|| CliError::config(line, "space", format!("unknown space '{s}'")))?;
            if !experiment.allowed_spaces().contains(&sp.family()) {
                return Err(CliError::config(line, "space", format!("{experiment} does not run on {sp}")));
            }
            if matches!(experiment, E::Kpoint | E::Mh | E::Fermi) && matches!(sp, Space::Abelian(d) if d != 1) {
                return Err(CliError::config(line, "space", format!("{experiment} needs the circle, abelian:1")));
            }
            sp
        }
    };
    let d = space.group_dim();

    let (t, steps, k, m, eta) = match experiment {
        E::MetricMle => (0.02, 20, 200, 4, 0.2),
        E::SpdMean => (0.125, 20, 100, 3, 0.75),
        E::S2Kernel => (0.5, 50, 100, 4, 0.2),
        E::S2Aniso => (1.0, 100, 100, 4, 0.2),
        E::Kpoint => (4.0, 100, 100, 4, 0.2),
        E::Mh => (4.0, 50, 10_000, 4, 0.2),
        _ => (1.0, 100, 100, 4, 0.2),
    };
    let aniso = MetricLit::Upper(vec![0.2, 0.0, 0.0, 0.2, 0.0, 0.8]);
    let default_metric = if experiment == E::S2Aniso { aniso.clone() } else { MetricLit::Identity };
    let default_data_metric = if experiment == E::MetricMle && d == 3 { aniso } else { MetricLit::Identity };

    let seed = match r.take("seed") {
        None => return Err(CliError::config(0, "seed", "required (there is no clock-based default)".into())),
        Some((s, line)) => s
            .parse::<u64>()
            .map_err(|_| CliError::config(line, "seed", format!("not a 64-bit unsigned integer: '{s}'")))?,
    };

    let target = match r.take("target") {
        None => default_target(space, experiment),
        Some((s, line)) => {
            let (exp, body) = match s.strip_prefix("exp:") {
                Some(b) => (true, b),
                None => (false, s.as_str()),
            };
            let v = reals(body).ok_or_else(|| CliError::config(line, "target", format!("malformed point '{s}'")))?;
            let lit = if exp { PointLit::Exp(v) } else { PointLit::Ambient(v) };
            if !target_len_ok(space, &lit) {
                return Err(CliError::config(line, "target", format!("wrong number of entries for {space}")));
            }
            lit
        }
    };

    let t_list = match r.take("t_list") {
        None => vec![0.5, 1.0, 1.5, 2.0],
        Some((s, line)) => match reals(&s) {
            Some(v) if !v.is_empty() && v.iter().all(|x| *x > 0.0) => v,
            _ => return Err(CliError::config(line, "t_list", format!("expected positive reals, got '{s}'"))),
        },
    };

    let cfg = ExperimentConfig {
        experiment,
        space,
        t: r.positive_real("T", t)?,
        steps: r.positive_int("steps", steps)?,
        n_paths: r.positive_int("n_paths", if experiment == E::Kpoint { 10_000 } else { 10 })?,
        n_bridges: r.positive_int(
            "n_bridges",
            match experiment {
                E::S2Kernel => 384,
                E::S2Aniso => 3,
                _ => 100,
            },
        )?,
        k: r.positive_int("K", k)?,
        m: r.positive_int("m", m)?,
        eta: r.positive_real("eta", eta)?,
        seed,
        metric: r.metric("metric", d, default_metric)?,
        target,
        output_dir: r.take("output_dir").map(|(s, _)| PathBuf::from(s)).unwrap_or_else(|| PathBuf::from("out")),
        t_list,
        n_data: r.positive_int("n_data", if experiment == E::SpdMean { 64 } else { 128 })?,
        data_steps: r.positive_int("data_steps", 50)?,
        data_metric: r.metric("data_metric", d, default_data_metric)?,
        lattice_points: r.positive_int("lattice_points", 5)?,
        proposal_scale: r.positive_real("proposal_scale", 0.3)?,
        bins: match r.take("bins") {
            None => 0,
            Some((s, line)) => {
                s.parse().map_err(|_| CliError::config(line, "bins", format!("not an integer: '{s}'")))?
            }
        },
        n_points: r.positive_int("n_points", 16)?,
        mu0_scale: r.positive_real("mu0_scale", 1.5)?,
        grid_polar: r.positive_int("grid_polar", 8)?,
        grid_azimuth: r.positive_int("grid_azimuth", 8)?,
        fiber_points: r.positive_int("fiber_points", 8)?,
        stall_window: r.positive_int("stall_window", 200)?,
    };
    debug_assert!(r.raw.is_empty(), "every known key is consumed");
    Ok(cfg)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

fn metric_str(m: &MetricLit) -> String {
    match m {
        MetricLit::Identity => "identity".into(),
        MetricLit::Upper(v) => join(v),
    }
}

impl ExperimentConfig {
    /// Every key with its effective value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let target = match &self.target {
            PointLit::Exp(v) => format!("exp:{}", join(v)),
            PointLit::Ambient(v) => join(v),
        };
        vec![
            ("experiment", self.experiment.to_string()),
            ("space", self.space.to_string()),
            ("T", fmt_f64(self.t)),
            ("steps", self.steps.to_string()),
            ("n_paths", self.n_paths.to_string()),
            ("n_bridges", self.n_bridges.to_string()),
            ("K", self.k.to_string()),
            ("m", self.m.to_string()),
            ("eta", fmt_f64(self.eta)),
            ("seed", self.seed.to_string()),
            ("metric", metric_str(&self.metric)),
            ("target", target),
            ("output_dir", self.output_dir.display().to_string()),
            ("t_list", join(&self.t_list)),
            ("n_data", self.n_data.to_string()),
            ("data_steps", self.data_steps.to_string()),
            ("data_metric", metric_str(&self.data_metric)),
            ("lattice_points", self.lattice_points.to_string()),
            ("proposal_scale", fmt_f64(self.proposal_scale)),
            ("bins", self.bins.to_string()),
            ("n_points", self.n_points.to_string()),
            ("mu0_scale", fmt_f64(self.mu0_scale)),
            ("grid_polar", self.grid_polar.to_string()),
            ("grid_azimuth", self.grid_azimuth.to_string()),
            ("fiber_points", self.fiber_points.to_string()),
            ("stall_window", self.stall_window.to_string()),
        ]
    }

    /// `key = value` text that `parse_config` reads back to `self`.
    pub fn render(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.entries().into_iter().map(|(k, v)| (k.to_string(), serde_json::Value::String(v))).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_bm_config_gets_defaults() {
        let c = parse_config("experiment = bm\nspace = so3\nT = 1\nsteps = 100\nn_paths = 10\nseed = 42\n").unwrap();
        assert_eq!(c.experiment, Experiment::Bm);
        assert_eq!(c.space, Space::So3);
        assert_eq!((c.steps, c.n_paths, c.seed), (100, 10, 42));
        assert_eq!(c.metric, MetricLit::Identity);
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_experiment_names_the_key() {
        let err = parse_config("seed = 1\nexperiment = frobnicate\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("experiment") && msg.contains("frobnicate"), "{msg}");
        assert!(matches!(err, CliError::Config { line: 2, .. }));
    }

    #[test]
    fn rejections() {
        let bad = [
            "experiment = bm\nseed = 1\ncolour = red\n",
            "experiment = bm\nT = 1\n",
            "experiment = bm\nseed = 1\nT = -1\n",
            "experiment = bm\nseed = 1\nsteps = 0\n",
            "experiment = bm\nseed = 1\nmetric = 1,2\n",
            "experiment = bm\nseed = 1\ntarget = 1,x,3\n",
            "experiment = spd-mean\nseed = 1\nspace = so3\n",
            "experiment = bm\nseed = -4\n",
        ];
        for text in bad {
            assert!(parse_config(text).is_err(), "{text}");
        }
    }

    #[test]
    fn json_and_lines_agree() {
        let a = parse_config("experiment = mh\nseed = 9\nspace = s2\ntarget = 0,0.6,0.8\n").unwrap();
        let b = parse_config(r#"{"experiment": "mh", "seed": 9, "space": "s2", "target": [0, 0.6, 0.8]}"#).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn render_round_trips() {
        for e in Experiment::ALL {
            let c = parse_config(&format!("experiment = {e}\nseed = 18446744073709551615\nT = 0.1\n")).unwrap();
            assert_eq!(parse_config(&c.render()).unwrap(), c);
        }
        let c =
            parse_config("experiment = metric-mle\nseed = 3\nmetric = diag:0.3,1e-7,2.5\neta = 0.123456789\n").unwrap();
        assert_eq!(parse_config(&c.render()).unwrap(), c);
    }

    #[test]
    fn overrides_win_but_experiment_must_agree() {
        let c = parse_config_with("experiment = bm\n", &[("seed", "5".into())]).unwrap();
        assert_eq!(c.seed, 5);
        assert!(parse_config_with("experiment = bm\nseed = 1\n", &[("experiment", "mh".into())]).is_err());
    }
}
