//! Flat `key = value` experiment configs.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment (also allowed after a value)
//! key = value
//! list_key = v1, v2, v3
//! ```
//!
//! Keys are case-sensitive, each may appear once, and unknown keys are
//! rejected. Command-line `--set key=value` overrides are applied on top of
//! the file with the same grammar.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use semidiscrete::{EmTruncationPolicy, IntegralMode, Scheme, SchemeKind, TruncationPolicy};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Trajectories,
    Stability,
    Convergence,
    Decomposition,
    IntegralBound,
    Positivity,
    Moments,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Trajectories => "trajectories",
            Experiment::Stability => "stability",
            Experiment::Convergence => "convergence",
            Experiment::Decomposition => "decomposition",
            Experiment::IntegralBound => "integral-bound",
            Experiment::Positivity => "positivity",
            Experiment::Moments => "moments",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "trajectories" | "simulate" => Experiment::Trajectories,
            "stability" => Experiment::Stability,
            "convergence" => Experiment::Convergence,
            "decomposition" => Experiment::Decomposition,
            "integral-bound" | "integral_bound" => Experiment::IntegralBound,
            "positivity" => Experiment::Positivity,
            "moments" => Experiment::Moments,
            other => return Err(format!("unknown experiment `{other}`")),
        })
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "name",
    "schemes",
    "x0",
    "deltas",
    "T",
    "n_paths",
    "seed",
    "threshold",
    "c_bar",
    "gamma",
    "epsilon",
    "h_hat",
    "tem_c_bar",
    "tem_q",
    "integral_mode",
    "reference_delta",
    "c_values",
    "r_values",
    "n_samples",
    "n_substeps",
    "p",
    "draws",
    "fail_on_divergence",
    "plot",
    "out",
];

/// Raw key/value pairs, unvalidated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = split_entry(line).ok_or_else(|| CliError::Parse {
                line: Some(i + 1),
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            if raw.entries.contains_key(key) {
                return Err(CliError::Parse {
                    line: Some(i + 1),
                    message: format!("duplicate key `{key}`"),
                });
            }
            raw.entries.insert(key.to_string(), value.to_string());
        }
        Ok(raw)
    }

    /// Applies a `key=value` override, replacing any existing value.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = split_entry(assignment).ok_or_else(|| CliError::Parse {
            line: None,
            message: format!("override must look like key=value, got `{assignment}`"),
        })?;
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

fn split_entry(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() || k.contains(char::is_whitespace) {
        return None;
    }
    Some((k, v))
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub name: String,
    pub schemes: Vec<SchemeKind>,
    pub x0: f64,
    pub deltas: Vec<f64>,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub threshold: f64,
    pub policy: TruncationPolicy,
    pub em_policy: EmTruncationPolicy,
    pub integral_mode: IntegralMode,
    pub reference_delta: f64,
    pub c_values: Vec<f64>,
    pub r_values: Vec<f64>,
    pub n_samples: usize,
    pub n_substeps: usize,
    pub p: Vec<u32>,
    pub draws: usize,
    pub fail_on_divergence: bool,
    pub plot: bool,
    pub out: Option<PathBuf>,
}

fn invalid(key: &'static str, reason: impl Into<String>) -> CliError {
    CliError::Validation {
        key: key.to_string(),
        reason: reason.into(),
    }
}

struct Reader<'a> {
    raw: &'a RawConfig,
}

impl Reader<'_> {
    fn scalar<T: FromStr>(&self, key: &'static str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| invalid(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &'static str, default: Vec<T>) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw.get(key) else {
            return Ok(default);
        };
        let items: Vec<T> = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| invalid(key, format!("cannot parse `{s}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        if items.is_empty() {
            return Err(invalid(key, "list must not be empty"));
        }
        Ok(items)
    }
}

fn require(ok: bool, key: &'static str, reason: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(invalid(key, reason))
    }
}

impl ExperimentConfig {
    /// Validates `raw` for `experiment`. A config naming a different
    /// experiment is rejected.
    pub fn from_raw(raw: &RawConfig, experiment: Experiment) -> Result<Self, CliError> {
        if let Some(key) = raw
            .entries
            .keys()
            .find(|k| !KNOWN_KEYS.contains(&k.as_str()))
        {
            return Err(CliError::Validation {
                key: key.clone(),
                reason: "unknown key".to_string(),
            });
        }
        let r = Reader { raw };
        if let Some(named) = raw.get("experiment") {
            let named: Experiment = named
                .parse()
                .map_err(|e: String| invalid("experiment", e))?;
            if named != experiment {
                return Err(invalid(
                    "experiment",
                    format!(
                        "config is for `{}`, not `{}`",
                        named.name(),
                        experiment.name()
                    ),
                ));
            }
        }

        let defaults = Defaults::for_experiment(experiment);
        let cfg = ExperimentConfig {
            experiment,
            name: r.scalar("name", experiment.name().to_string())?,
            schemes: r.list("schemes", defaults.schemes)?,
            x0: r.scalar("x0", defaults.x0)?,
            deltas: r.list("deltas", defaults.deltas)?,
            horizon: r.scalar("T", defaults.horizon)?,
            n_paths: r.scalar("n_paths", defaults.n_paths)?,
            seed: r.scalar("seed", 42)?,
            threshold: r.scalar("threshold", 1e-3)?,
            policy: {
                let ex = TruncationPolicy::example();
                TruncationPolicy::new(
                    r.scalar("c_bar", ex.c_bar())?,
                    r.scalar("gamma", ex.gamma())?,
                    r.scalar("epsilon", ex.epsilon())?,
                    r.scalar("h_hat", ex.h_hat())?,
                )
                .map_err(|e| core_invalid(e, &[], "c_bar"))?
            },
            em_policy: {
                let ex = EmTruncationPolicy::example();
                EmTruncationPolicy::new(
                    r.scalar("tem_c_bar", ex.c_bar())?,
                    r.scalar("tem_q", ex.q())?,
                )
                .map_err(|e| core_invalid(e, &[("c_bar", "tem_c_bar"), ("q", "tem_q")], "tem_q"))?
            },
            integral_mode: r.scalar("integral_mode", IntegralMode::LowerEndpoint)?,
            reference_delta: r.scalar("reference_delta", 2f64.powi(-13))?,
            c_values: r.list("c_values", vec![0.0, 0.5, 1.0])?,
            r_values: r.list("r_values", vec![0.1, 0.25, 0.4])?,
            n_samples: r.scalar("n_samples", 10_000)?,
            n_substeps: r.scalar("n_substeps", 256)?,
            p: r.list("p", vec![2])?,
            draws: r.scalar("draws", 1000)?,
            fail_on_divergence: r.scalar("fail_on_divergence", false)?,
            plot: r.scalar("plot", true)?,
            out: raw.get("out").map(PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        use Experiment::*;
        require(
            !self.name.is_empty()
                && self
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)),
            "name",
            "must be a non-empty file stem of letters, digits, `-`, `_` or `.`",
        )?;
        require(self.x0.is_finite(), "x0", "must be finite")?;
        require(
            self.deltas.iter().all(|d| *d > 0.0 && *d <= 1.0),
            "deltas",
            "every step size must lie in (0, 1]",
        )?;
        require(
            self.horizon.is_finite() && self.horizon > 0.0,
            "T",
            "must be positive and finite",
        )?;
        require(
            self.threshold.is_finite() && self.threshold > 0.0,
            "threshold",
            "must be positive",
        )?;
        match self.experiment {
            Convergence => {
                require(
                    self.n_paths >= 1000,
                    "n_paths",
                    "convergence fits need at least 1000 paths",
                )?;
                require(
                    self.deltas.len() >= 2,
                    "deltas",
                    "a fit needs at least two step sizes",
                )?;
                require(
                    self.deltas.windows(2).all(|w| w[0] > w[1]),
                    "deltas",
                    "must be strictly decreasing",
                )?;
                require(
                    self.reference_delta > 0.0
                        && self.deltas.iter().all(|d| self.reference_delta < *d),
                    "reference_delta",
                    "must be positive and finer than every step size",
                )?;
                require(
                    self.integral_mode == IntegralMode::LowerEndpoint
                        || !self.schemes.iter().any(|k| k.is_langevin()),
                    "integral_mode",
                    "convergence studies of Langevin-type schemes need the lower-endpoint integral",
                )?;
            }
            Decomposition => require(
                self.schemes
                    .iter()
                    .all(|k| matches!(k, SchemeKind::Tsd | SchemeKind::ExpTsd)),
                "schemes",
                "decomposition supports TSD and expTSD only",
            )?,
            Positivity => {
                require(self.x0 > 0.0, "x0", "must be positive")?;
            }
            Moments => require(
                self.p.iter().all(|p| (2..=9).contains(p)),
                "p",
                "every moment order must be an integer in 2..=9",
            )?,
            IntegralBound => {
                require(
                    self.c_values.iter().all(|c| c.is_finite() && *c >= 0.0),
                    "c_values",
                    "must be nonnegative",
                )?;
                require(
                    self.r_values.iter().all(|r| *r > 0.0 && *r < 0.5),
                    "r_values",
                    "every exponent must lie in (0, 1/2)",
                )?;
                require(
                    self.n_samples >= 2,
                    "n_samples",
                    "need at least two samples",
                )?;
                require(self.n_substeps >= 64, "n_substeps", "must be at least 64")?;
            }
            Trajectories | Stability => {}
        }
        if self.experiment == Decomposition {
            require(
                self.draws != 1,
                "draws",
                "must be 0 (skip sampling) or at least 2",
            )?;
        }
        Ok(())
    }

    pub fn scheme(&self, kind: SchemeKind) -> Scheme {
        Scheme::new(
            kind,
            Some(self.policy),
            Some(self.em_policy),
            self.integral_mode,
        )
        .expect("both policies supplied")
    }
}

/// Maps a core parameter error onto the config key that set it.
fn core_invalid(
    e: semidiscrete::Error,
    renames: &[(&str, &'static str)],
    fallback: &'static str,
) -> CliError {
    match e {
        semidiscrete::Error::InvalidParameter { name, reason } => {
            let key = renames
                .iter()
                .find(|(from, _)| *from == name)
                .map(|(_, to)| *to)
                .or_else(|| KNOWN_KEYS.iter().copied().find(|k| *k == name))
                .unwrap_or(fallback);
            invalid(key, reason)
        }
        other => invalid(fallback, other.to_string()),
    }
}

struct Defaults {
    schemes: Vec<SchemeKind>,
    x0: f64,
    deltas: Vec<f64>,
    horizon: f64,
    n_paths: usize,
}

impl Defaults {
    fn for_experiment(e: Experiment) -> Self {
        use SchemeKind::*;
        let sd = vec![Tsd, ExpTsd, Lsd];
        match e {
            Experiment::Trajectories => Self {
                schemes: vec![Tsd, ExpTsd, Lsd, Tem],
                x0: 10.0,
                deltas: vec![0.09],
                horizon: 8.0,
                n_paths: 1,
            },
            Experiment::Stability => Self {
                schemes: sd,
                x0: 10.0,
                deltas: vec![0.25, 0.5],
                horizon: 50.0,
                n_paths: 1000,
            },
            Experiment::Convergence => Self {
                schemes: sd,
                x0: 1.0,
                deltas: (4..=9).map(|k| 2f64.powi(-k)).collect(),
                horizon: 1.0,
                n_paths: 4000,
            },
            Experiment::Decomposition => Self {
                schemes: vec![Tsd, ExpTsd],
                x0: 1.0,
                deltas: vec![0.01, 0.25, 0.5, 1.0],
                horizon: 1.0,
                n_paths: 1,
            },
            Experiment::IntegralBound => Self {
                schemes: vec![],
                x0: 1.0,
                deltas: vec![0.01, 0.1],
                horizon: 1.0,
                n_paths: 1,
            },
            Experiment::Positivity => Self {
                schemes: vec![ExpTsd, Lsd, Tem],
                x0: 10.0,
                deltas: vec![0.25],
                horizon: 10.0,
                n_paths: 1000,
            },
            Experiment::Moments => Self {
                schemes: vec![Lsd],
                x0: 1.0,
                deltas: vec![0.1, 0.01],
                horizon: 1.0,
                n_paths: 1000,
            },
        }
    }
}
