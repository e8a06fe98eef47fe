//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment. Unknown or repeated keys are
//! errors. Every value is parsed and range-checked when read, so a config
//! that loads is valid; command-line overrides go through [`RunConfig::set`].

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::clustering::{ClusterParams, TrialSpec};
use crate::error::{PottsError, Result};
use crate::graph::WeightKind;
use crate::imaging::SegmentParams;
use crate::region::{ForceKind, DEFAULT_DELTA};
use crate::solver::{
    Algorithm, Initialization, PdhgOrdering, SolverConfig, StepSchedule, TvFlavor,
};

/// Every key a config file may contain.
pub const KEYS: &[&str] = &[
    "algorithm",
    "pdhg_beta",
    "pdhg_gamma",
    "theta",
    "step_schedule",
    "pdhg_ordering",
    "admm_beta",
    "admm_c",
    "epsilon",
    "max_iter",
    "init",
    "s",
    "m",
    "weight",
    "rbf_epsilon",
    "alpha",
    "alpha_linear",
    "force",
    "delta",
    "self_loop",
    "n_seeds",
    "n_trials",
    "rng_seed",
    "stratified",
    "k",
    "beta_img",
    "gamma_img",
    "sigma_img",
    "gradient_scale",
    "prob_sigma",
    "squared_distance",
    "data",
    "labels",
    "image",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub algorithm: Option<Algorithm>,
    pub pdhg_beta: Option<f64>,
    pub pdhg_gamma: Option<f64>,
    pub theta: Option<f64>,
    pub step_schedule: Option<StepSchedule>,
    pub pdhg_ordering: Option<PdhgOrdering>,
    pub admm_beta: Option<f64>,
    pub admm_c: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iter: Option<usize>,
    pub init: Option<Initialization>,
    pub s: Option<usize>,
    pub m: Option<usize>,
    pub weight: Option<String>,
    pub rbf_epsilon: Option<f64>,
    /// TV weight for the log force (and the linear force unless
    /// `alpha_linear` is set).
    pub alpha: Option<f64>,
    pub alpha_linear: Option<f64>,
    pub force: Option<ForceKind>,
    pub delta: Option<f64>,
    pub self_loop: Option<f64>,
    pub n_seeds: Option<usize>,
    pub n_trials: Option<usize>,
    pub rng_seed: Option<u64>,
    pub stratified: Option<bool>,
    pub k: Option<usize>,
    pub beta_img: Option<f64>,
    pub gamma_img: Option<f64>,
    pub sigma_img: Option<f64>,
    pub gradient_scale: Option<f64>,
    pub prob_sigma: Option<f64>,
    pub squared_distance: Option<bool>,
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub image: Option<PathBuf>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("invalid value {value:?} for `{key}`"))
}

fn positive(key: &str, value: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{key}` must be positive, got {value}"))
    }
}

fn nonnegative(key: &str, value: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse(key, value)?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{key}` must be nonnegative, got {value}"))
    }
}

fn at_least(key: &str, value: &str, min: usize) -> std::result::Result<usize, String> {
    let v: usize = parse(key, value)?;
    if v >= min {
        Ok(v)
    } else {
        Err(format!("`{key}` must be at least {min}, got {value}"))
    }
}

fn enum_value<T>(key: &str, value: &str, options: &[(&str, T)]) -> std::result::Result<T, String>
where
    T: Copy,
{
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            format!(
                "invalid value {value:?} for `{key}` (expected one of {})",
                names.join(", ")
            )
        })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PottsError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| PottsError::Parse {
                source_name: source_name.to_string(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) && KEYS.contains(&key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            config.set(key, value).map_err(|e| match e {
                PottsError::Config(m) => err(m),
                other => other,
            })?;
        }
        Ok(config)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.try_set(key, value).map_err(PottsError::Config)
    }

    fn try_set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "algorithm" => {
                self.algorithm = Some(parse(key, value).map_err(|_| {
                    format!("invalid value {value:?} for `algorithm` (expected pdhg or admm)")
                })?)
            }
            "pdhg_beta" => self.pdhg_beta = Some(positive(key, value)?),
            "pdhg_gamma" => self.pdhg_gamma = Some(positive(key, value)?),
            "theta" => {
                self.theta = Some(parse::<f64>(key, value).and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(format!("`theta` must be finite, got {value}"))
                    }
                })?)
            }
            "step_schedule" => {
                self.step_schedule = Some(enum_value(
                    key,
                    value,
                    &[
                        ("constant", StepSchedule::Constant),
                        ("growing", StepSchedule::Growing),
                    ],
                )?)
            }
            "pdhg_ordering" => {
                self.pdhg_ordering = Some(enum_value(
                    key,
                    value,
                    &[
                        ("standard", PdhgOrdering::Standard),
                        ("literal", PdhgOrdering::Literal),
                    ],
                )?)
            }
            "admm_beta" => self.admm_beta = Some(positive(key, value)?),
            "admm_c" => self.admm_c = Some(positive(key, value)?),
            "epsilon" => self.epsilon = Some(positive(key, value)?),
            "max_iter" => self.max_iter = Some(at_least(key, value, 1)?),
            "init" => {
                self.init = Some(enum_value(
                    key,
                    value,
                    &[
                        ("argmin", Initialization::ArgminOneHot),
                        ("uniform", Initialization::Uniform),
                    ],
                )?)
            }
            "s" => self.s = Some(at_least(key, value, 1)?),
            "m" => {
                let m = at_least(key, value, 1)?;
                if m > 2 {
                    return Err(format!("`m` must be 1 or 2, got {value}"));
                }
                self.m = Some(m)
            }
            "weight" => {
                enum_value(key, value, &[("zmp", ()), ("rbf", ()), ("cosine", ())])?;
                self.weight = Some(value.to_string())
            }
            "rbf_epsilon" => self.rbf_epsilon = Some(positive(key, value)?),
            "alpha" => self.alpha = Some(nonnegative(key, value)?),
            "alpha_linear" => self.alpha_linear = Some(nonnegative(key, value)?),
            "force" => {
                self.force = Some(ForceKind::from_str(value).map_err(|_| {
                    format!("invalid value {value:?} for `force` (expected log, linear or l2)")
                })?)
            }
            "delta" => self.delta = Some(nonnegative(key, value)?),
            "self_loop" => self.self_loop = Some(nonnegative(key, value)?),
            "n_seeds" => self.n_seeds = Some(at_least(key, value, 1)?),
            "n_trials" => self.n_trials = Some(at_least(key, value, 1)?),
            "rng_seed" => self.rng_seed = Some(parse(key, value)?),
            "stratified" => self.stratified = Some(parse(key, value)?),
            "k" => self.k = Some(at_least(key, value, 2)?),
            "beta_img" => self.beta_img = Some(positive(key, value)?),
            "gamma_img" => self.gamma_img = Some(nonnegative(key, value)?),
            "sigma_img" => self.sigma_img = Some(nonnegative(key, value)?),
            "gradient_scale" => self.gradient_scale = Some(positive(key, value)?),
            "prob_sigma" => self.prob_sigma = Some(positive(key, value)?),
            "squared_distance" => self.squared_distance = Some(parse(key, value)?),
            "data" => self.data = Some(PathBuf::from(value)),
            "labels" => self.labels = Some(PathBuf::from(value)),
            "image" => self.image = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn require<T: Copy>(value: Option<T>, key: &str) -> Result<T> {
        value.ok_or_else(|| PottsError::Config(format!("missing required key `{key}`")))
    }

    /// Solver settings for `algorithm` (or the configured one). Unset keys
    /// take the library defaults; `default_epsilon` applies when `epsilon`
    /// is unset.
    pub fn solver_config(
        &self,
        algorithm: Option<Algorithm>,
        flavor: TvFlavor,
        default_epsilon: f64,
    ) -> SolverConfig {
        let algorithm = algorithm.or(self.algorithm).unwrap_or(Algorithm::Pdhg);
        let mut c = match algorithm {
            Algorithm::Pdhg => {
                let mut c = SolverConfig::pdhg(flavor);
                c.beta = self.pdhg_beta.unwrap_or(c.beta);
                c.gamma = self.pdhg_gamma.unwrap_or(c.gamma);
                c.step_schedule = self.step_schedule.unwrap_or(c.step_schedule);
                c
            }
            Algorithm::Admm => {
                let mut c = SolverConfig::admm(flavor);
                c.beta = self.admm_beta.unwrap_or(c.beta);
                c.c = self.admm_c.unwrap_or(c.c);
                c
            }
        };
        c.theta = self.theta.unwrap_or(c.theta);
        c.pdhg_ordering = self.pdhg_ordering.unwrap_or(c.pdhg_ordering);
        c.init = self.init.unwrap_or(c.init);
        c.epsilon = self.epsilon.unwrap_or(default_epsilon);
        c.max_iter = self.max_iter.unwrap_or(c.max_iter);
        c
    }

    pub fn force_or(&self, default: ForceKind) -> ForceKind {
        self.force.unwrap_or(default)
    }

    /// Clustering parameters; `alpha` is required.
    pub fn cluster_params(&self) -> Result<ClusterParams> {
        let force = self.force_or(ForceKind::Log);
        let alpha = Self::require(self.alpha, "alpha")?;
        let alpha = match force {
            ForceKind::Linear => self.alpha_linear.unwrap_or(alpha),
            _ => alpha,
        };
        let weight = match self.weight.as_deref().unwrap_or("zmp") {
            "rbf" => WeightKind::Rbf {
                epsilon: Self::require(self.rbf_epsilon, "rbf_epsilon")?,
            },
            "cosine" => WeightKind::Cosine,
            _ => WeightKind::Zmp,
        };
        let params = ClusterParams {
            s: self.s.unwrap_or(10),
            weight,
            m: self.m.unwrap_or(2),
            alpha,
            force,
            delta: self.delta.unwrap_or(DEFAULT_DELTA),
            self_loop: self.self_loop.unwrap_or(1.0),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn trial_spec(&self) -> TrialSpec {
        TrialSpec {
            n_seeds: self.n_seeds.unwrap_or(50),
            n_trials: self.n_trials.unwrap_or(10),
            base_seed: self.rng_seed.unwrap_or(0),
            stratified: self.stratified.unwrap_or(false),
        }
    }

    pub fn segment_params(&self) -> SegmentParams {
        let d = SegmentParams::default();
        SegmentParams {
            beta: self.beta_img.unwrap_or(d.beta),
            gamma: self.gamma_img.unwrap_or(d.gamma),
            edge_sigma: self.sigma_img.unwrap_or(d.edge_sigma),
            gradient_scale: self.gradient_scale.unwrap_or(d.gradient_scale),
            prob_sigma: self.prob_sigma.unwrap_or(d.prob_sigma),
            squared_distance: self.squared_distance.unwrap_or(d.squared_distance),
            delta: self.delta.unwrap_or(d.delta),
            rng_seed: self.rng_seed.unwrap_or(d.rng_seed),
        }
    }
}

/// Shipped presets by name.
pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "three-circles" => Some(include_str!("../presets/three-circles.conf")),
        "coil" => Some(include_str!("../presets/coil.conf")),
        "mnist" => Some(include_str!("../presets/mnist.conf")),
        _ => None,
    }
}
