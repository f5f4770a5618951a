//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! workers = 2
//!
//! [budget]
//! resource_units = 1269
//!
//! [hyperband]
//! max_resource = 27
//! eta = 3
//!
//! [evaluator]
//! benchmark = "hartmann6"
//! noise_std = 0.01
//! fidelity_bias = 0.5
//! ```
//!
//! Subprocess evaluators set `command` and `timeout_secs` instead of
//! `benchmark` and describe their search space with `[[space]]` tables.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::acquisition::SamplerParams;
use crate::benchmarks::{Benchmark, BenchmarkKind, BenchmarkSpec};
use crate::ensemble::{EnsembleParams, Weighting};
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::harness::{Objective, SubprocessObjective};
use crate::scheduler::{Budget, ClockMode, HBParams, OptimizerSettings};
use crate::space::{ConfigurationSpace, ParameterSpec};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "default_theta")]
    pub theta: u32,
    #[serde(default = "default_k_full")]
    pub k_full_threshold: usize,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub clock: ClockMode,
    #[serde(default)]
    pub history: Option<PathBuf>,
    #[serde(default)]
    pub eval_timeout_secs: Option<f64>,
    pub budget: BudgetSection,
    pub hyperband: HyperbandSection,
    #[serde(default)]
    pub sampler: SamplerParams,
    #[serde(default)]
    pub forest: ForestParams,
    pub evaluator: EvaluatorSection,
    #[serde(default)]
    pub space: Vec<ParameterSpec>,
}

fn one() -> usize {
    1
}

fn default_theta() -> u32 {
    EnsembleParams::default().theta
}

fn default_k_full() -> usize {
    EnsembleParams::default().k_full_threshold
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub wall_clock_secs: Option<f64>,
    pub resource_units: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperbandSection {
    pub max_resource: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_eta() -> f64 {
    3.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorSection {
    pub benchmark: Option<String>,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub fidelity_bias: f64,
    pub command: Option<String>,
    pub timeout_secs: Option<f64>,
}

/// What produces losses; stored in the history so a run can be resumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EvaluatorSpec {
    Benchmark {
        benchmark: BenchmarkKind,
        noise_std: f64,
        fidelity_bias: f64,
    },
    Command {
        command: String,
        timeout_secs: f64,
    },
}

impl EvaluatorSpec {
    /// Instantiates the evaluator. Benchmark noise is keyed by the run seed.
    pub fn build(&self, settings: &OptimizerSettings) -> Result<Arc<dyn Objective>> {
        Ok(match self {
            EvaluatorSpec::Benchmark {
                benchmark,
                noise_std,
                fidelity_bias,
            } => Arc::new(Benchmark::new(BenchmarkSpec {
                kind: *benchmark,
                noise_std: *noise_std,
                fidelity_bias: *fidelity_bias,
                max_resource: settings.hyperband.max_resource,
                seed: settings.seed,
            })?),
            EvaluatorSpec::Command { command, timeout_secs } => Arc::new(SubprocessObjective::new(
                command.clone(),
                Duration::from_secs_f64(*timeout_secs),
            )?),
        })
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub history: Option<PathBuf>,
    pub budget: Option<Budget>,
    pub clock: Option<ClockMode>,
}

/// A validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub space: ConfigurationSpace,
    pub evaluator: EvaluatorSpec,
    pub optimizer: OptimizerSettings,
    pub history: Option<PathBuf>,
}

/// 1-based line of the first `key = ...` assignment in `source`.
fn locate(source: &str, key: &str) -> Option<usize> {
    source.lines().position(|line| {
        line.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

fn config_error(source: &str, err: Error) -> Error {
    match err {
        Error::InvalidParameter { field, reason } => {
            let key = field.rsplit('.').next().unwrap_or(&field);
            Error::Config {
                line: locate(source, key),
                message: format!("invalid `{field}`: {reason}"),
            }
        }
        other => other,
    }
}

impl RunConfigFile {
    pub fn parse(source: &str) -> Result<Self> {
        toml::from_str(source).map_err(|e| Error::Config {
            line: e.span().map(|s| line_of_offset(source, s.start)),
            message: e.message().to_owned(),
        })
    }

    fn evaluator_spec(&self) -> Result<EvaluatorSpec> {
        let ev = &self.evaluator;
        match (&ev.benchmark, &ev.command) {
            (Some(name), None) => {
                let benchmark = BenchmarkKind::from_name(name).ok_or_else(|| {
                    let known: Vec<&str> = BenchmarkKind::ALL.iter().map(|k| k.name()).collect();
                    Error::invalid("benchmark", format!("unknown benchmark `{name}` (known: {})", known.join(", ")))
                })?;
                if ev.timeout_secs.is_some() {
                    return Err(Error::invalid("timeout_secs", "only applies to command evaluators"));
                }
                if !self.space.is_empty() {
                    return Err(Error::invalid("space", "benchmarks define their own search space"));
                }
                if !(ev.noise_std >= 0.0 && ev.noise_std.is_finite()) {
                    return Err(Error::invalid("noise_std", "must be finite and non-negative"));
                }
                if !ev.fidelity_bias.is_finite() {
                    return Err(Error::invalid("fidelity_bias", "must be finite"));
                }
                Ok(EvaluatorSpec::Benchmark {
                    benchmark,
                    noise_std: ev.noise_std,
                    fidelity_bias: ev.fidelity_bias,
                })
            }
            (None, Some(command)) => {
                let timeout_secs = ev
                    .timeout_secs
                    .ok_or_else(|| Error::invalid("command", "command evaluators need `timeout_secs`"))?;
                if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
                    return Err(Error::invalid("timeout_secs", "must be positive"));
                }
                if self.space.is_empty() {
                    return Err(Error::invalid("command", "command evaluators need a [[space]] definition"));
                }
                Ok(EvaluatorSpec::Command {
                    command: command.clone(),
                    timeout_secs,
                })
            }
            (Some(_), Some(_)) => Err(Error::invalid("command", "set either `benchmark` or `command`, not both")),
            (None, None) => Err(Error::Config {
                line: None,
                message: "[evaluator] needs `benchmark` or `command`".into(),
            }),
        }
    }

    fn budget(&self) -> Result<Budget> {
        match (self.budget.wall_clock_secs, self.budget.resource_units) {
            (Some(s), None) => Ok(Budget::WallClockSecs(s)),
            (None, Some(u)) => Ok(Budget::ResourceUnits(u)),
            _ => Err(Error::invalid(
                "budget",
                "set exactly one of `wall_clock_secs` or `resource_units`",
            )),
        }
    }

    fn settings(&self, overrides: &Overrides) -> Result<RunSettings> {
        let evaluator = self.evaluator_spec()?;
        let budget = match overrides.budget {
            Some(b) => b,
            None => self.budget()?,
        };
        let optimizer = OptimizerSettings {
            hyperband: HBParams::new(self.hyperband.max_resource, self.hyperband.eta, budget),
            sampler: self.sampler.clone(),
            forest: self.forest.clone(),
            ensemble: EnsembleParams {
                theta: self.theta,
                k_full_threshold: self.k_full_threshold,
                weighting: self.weighting,
            },
            seed: overrides.seed.unwrap_or(self.seed),
            workers: overrides.workers.unwrap_or(self.workers),
            eval_timeout_secs: self.eval_timeout_secs,
            clock: overrides.clock.unwrap_or(self.clock),
        };
        optimizer.validate()?;
        let space = match &evaluator {
            EvaluatorSpec::Benchmark { benchmark, .. } => benchmark.space(),
            EvaluatorSpec::Command { .. } => ConfigurationSpace::new(self.space.clone())?,
        };
        Ok(RunSettings {
            space,
            evaluator,
            optimizer,
            history: overrides.history.clone().or_else(|| self.history.clone()),
        })
    }

    /// Validates the file and applies overrides. Errors point at the
    /// offending line where one can be found.
    pub fn resolve(&self, source: &str, overrides: &Overrides) -> Result<RunSettings> {
        self.settings(overrides).map_err(|e| config_error(source, e))
    }
}

/// Reads, parses and validates a config file.
pub fn load(path: &Path, overrides: &Overrides) -> Result<RunSettings> {
    let source = std::fs::read_to_string(path)?;
    RunConfigFile::parse(&source)?.resolve(&source, overrides)
}

pub fn load_str(source: &str, overrides: &Overrides) -> Result<RunSettings> {
    RunConfigFile::parse(source)?.resolve(source, overrides)
}
