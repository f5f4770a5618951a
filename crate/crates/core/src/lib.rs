//! Hyperband with a multi-fidelity ensemble surrogate.
//!
//! Configurations for each Hyperband bracket are proposed by maximizing
//! expected improvement under an ensemble of random-forest surrogates, one
//! per resource level, fused as a weighted product of Gaussian experts.

pub mod acquisition;
pub mod benchmarks;
pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod export;
pub mod forest;
pub mod harness;
pub mod history;
pub mod scheduler;
pub mod space;
pub mod stats;

pub use acquisition::SamplerParams;
pub use benchmarks::{Benchmark, BenchmarkKind, BenchmarkSpec};
pub use ensemble::{EnsembleParams, EnsembleSurrogate, Weighting};
pub use error::{Error, Result};
pub use forest::{ForestParams, ForestSurrogate, Prediction};
pub use harness::{EvaluationRequest, Failure, Objective, SubprocessObjective};
pub use scheduler::{Budget, ClockMode, HBParams, MfesHb, OptimizerSettings, RunSummary};
pub use space::{Configuration, ConfigurationSpace, ParameterSpec, Value};
