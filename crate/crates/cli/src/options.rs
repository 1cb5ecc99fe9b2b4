//! Option resolution: command-line flags override the config file, which
//! overrides built-in defaults. The output directory falls back to
//! `ECON_OUT_DIR`, then `runs`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

pub const OUT_ENV: &str = "ECON_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Synthetic,
    #[value(name = "example-2-2")]
    #[serde(rename = "example-2-2")]
    Example22,
    FairRoc,
    FairDp,
    NeymanPearson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Method {
    #[value(name = "3s-econ-d")]
    #[serde(rename = "3s-econ-d")]
    EconD,
    #[value(name = "3s-econ-s")]
    #[serde(rename = "3s-econ-s")]
    EconS,
    #[value(name = "ssg")]
    #[serde(rename = "ssg")]
    Ssg,
    #[value(name = "ssg-s")]
    #[serde(rename = "ssg-s")]
    SsgS,
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.to_possible_value().unwrap().get_name())
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.to_possible_value().unwrap().get_name())
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// `key = value` file; keys are the long flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub problem: Option<ProblemKind>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Constant step, or the leading constant of the decaying step.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for the train/held-out split and model pretraining.
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Data file: libsvm or CSV for the fairness problems, IDX images for
    /// the multi-class problem.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Schema for CSV datasets.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// 1-based libsvm feature marking the protected group.
    #[arg(long)]
    pub group_feature: Option<usize>,
    /// IDX label file for the multi-class problem.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Number of classes for the multi-class problem.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub max_dp_g: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<u64>,
    /// Stop when the stationarity measure falls below this; 0 disables.
    #[arg(long)]
    pub svio_stop: Option<f64>,
    #[arg(long)]
    pub svio_every: Option<u64>,
    #[arg(long)]
    pub record_every: Option<u64>,
    /// Use the step size and batch schedule from the convergence analysis.
    #[arg(long)]
    pub theoretical: bool,
    /// Target accuracy for the theoretical schedule.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Write 0 in the wall-clock column so traces are byte-reproducible.
    #[arg(long)]
    pub no_wall_time: bool,
    /// Constraint-value noise of the synthetic problem.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub sigma_f: Option<f64>,
    #[arg(long)]
    pub sigma_g: Option<f64>,
    /// Synthetic population size; 0 for an infinite stream.
    #[arg(long)]
    pub population: Option<usize>,
}

/// Fully resolved run parameters, echoed in the run summary.
#[derive(Clone, Debug, Serialize)]
pub struct Effective {
    pub problem: ProblemKind,
    pub method: Method,
    pub beta: f64,
    pub nu: f64,
    pub alpha: f64,
    pub seed: u64,
    pub data_seed: u64,
    pub out: PathBuf,
    pub dataset: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub group_feature: Option<usize>,
    pub labels: Option<PathBuf>,
    pub classes: usize,
    pub max_dp_g: f64,
    pub max_iters: Option<u64>,
    pub svio_stop: Option<f64>,
    pub svio_every: u64,
    pub record_every: u64,
    pub theoretical: bool,
    pub eps: f64,
    pub wall_time: bool,
    pub sigma: f64,
    pub sigma_f: f64,
    pub sigma_g: f64,
    pub population: usize,
}

fn read_config(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), i + 1))?;
        let key = k.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            bail!("{}:{}: unknown key {key:?}", path.display(), i + 1);
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

const KNOWN_KEYS: &[&str] = &[
    "problem", "method", "beta", "nu", "alpha", "seed", "data-seed", "out", "dataset", "schema",
    "group-feature", "labels", "classes", "max-dp-g", "max-iters", "svio-stop", "svio-every",
    "record-every", "theoretical", "eps", "no-wall-time", "sigma", "sigma-f", "sigma-g", "population",
];

struct Layer<'a> {
    file: &'a HashMap<String, String>,
    base: Option<&'a Path>,
}

impl Layer<'_> {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|e| anyhow!("config key {key}: {e}")),
        }
    }

    fn enum_get<T: ValueEnum>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(s) => T::from_str(s, true).map(Some).map_err(|e| anyhow!("config key {key}: {e}")),
        }
    }

    /// Relative paths in the config file are taken from the file's directory.
    fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| {
            self.file.get(key).map(|s| {
                let p = PathBuf::from(s);
                match self.base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p,
                }
            })
        })
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        Ok(self.get::<bool>(None, key)?.unwrap_or(false))
    }
}

impl Effective {
    pub fn resolve(a: &RunArgs) -> Result<Self> {
        let file = match &a.config {
            Some(p) => read_config(p)?,
            None => HashMap::new(),
        };
        let l = Layer { file: &file, base: a.config.as_deref().and_then(Path::parent) };
        let problem = l
            .enum_get(a.problem, "problem")?
            .ok_or_else(|| anyhow!("--problem is required (flag or config file)"))?;
        let method = l.enum_get(a.method, "method")?.unwrap_or(Method::EconD);
        let stochastic = matches!(method, Method::EconS | Method::SsgS);
        let default_budget = match problem {
            ProblemKind::FairRoc => 200_000.0,
            ProblemKind::FairDp => 720_000.0,
            _ => 1_000.0,
        };
        let default_svio = if stochastic { 5e-3 } else { 1e-3 };
        let svio_stop = l.get(a.svio_stop, "svio-stop")?.unwrap_or(default_svio);
        let out = l
            .path(a.out.clone(), "out")
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));
        let eff = Effective {
            problem,
            method,
            beta: l.get(a.beta, "beta")?.unwrap_or(10.0),
            nu: l.get(a.nu, "nu")?.unwrap_or(1e-5),
            alpha: l.get(a.alpha, "alpha")?.unwrap_or(1e-2),
            seed: l.get(a.seed, "seed")?.unwrap_or(0),
            data_seed: l.get(a.data_seed, "data-seed")?.unwrap_or(0),
            out,
            dataset: l.path(a.dataset.clone(), "dataset"),
            schema: l.path(a.schema.clone(), "schema"),
            group_feature: l.get(a.group_feature, "group-feature")?,
            labels: l.path(a.labels.clone(), "labels"),
            classes: l.get(a.classes, "classes")?.unwrap_or(10),
            max_dp_g: l.get(a.max_dp_g, "max-dp-g")?.unwrap_or(default_budget),
            max_iters: l.get(a.max_iters, "max-iters")?,
            svio_stop: if svio_stop > 0.0 { Some(svio_stop) } else { None },
            svio_every: l.get(a.svio_every, "svio-every")?.unwrap_or(0),
            record_every: l.get(a.record_every, "record-every")?.unwrap_or(0),
            theoretical: l.flag(a.theoretical, "theoretical")?,
            eps: l.get(a.eps, "eps")?.unwrap_or(0.1),
            wall_time: !l.flag(a.no_wall_time, "no-wall-time")?,
            sigma: l.get(a.sigma, "sigma")?.unwrap_or(0.0),
            sigma_f: l.get(a.sigma_f, "sigma-f")?.unwrap_or(0.0),
            sigma_g: l.get(a.sigma_g, "sigma-g")?.unwrap_or(0.0),
            population: l.get(a.population, "population")?.unwrap_or(1000),
        };
        eff.validate()?;
        Ok(eff)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("nu", self.nu), ("alpha", self.alpha), ("eps", self.eps)] {
            if !(v > 0.0) || !v.is_finite() {
                bail!("{name} must be positive, got {v}");
            }
        }
        if !(self.max_dp_g > 0.0) {
            bail!("max-dp-g must be positive");
        }
        for (name, v) in [("sigma", self.sigma), ("sigma-f", self.sigma_f), ("sigma-g", self.sigma_g)] {
            if !(v >= 0.0) || !v.is_finite() {
                bail!("{name} must be nonnegative, got {v}");
            }
        }
        Ok(())
    }

    pub fn has_noise(&self) -> bool {
        self.sigma > 0.0 || self.sigma_f > 0.0 || self.sigma_g > 0.0
    }
}
