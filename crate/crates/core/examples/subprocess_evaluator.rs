//! Drive an external evaluator program over the JSON stdin/stdout protocol.
//! Run from the crate directory so the script path resolves.

use std::sync::Arc;
use std::time::Duration;

use mfes_hb::{
    Budget, ClockMode, ConfigurationSpace, HBParams, MfesHb, OptimizerSettings, ParameterSpec, SubprocessObjective,
};

fn main() -> mfes_hb::Result<()> {
    let script = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/evaluators/quadratic.py");
    let objective = SubprocessObjective::new(format!("python3 {script}"), Duration::from_secs(10))?;

    let space = ConfigurationSpace::new(vec![
        ParameterSpec::log_continuous("lr", 1e-5, 1.0)?,
        ParameterSpec::integer("layers", 1, 6)?,
        ParameterSpec::categorical("optimizer", ["sgd", "adam", "rmsprop"])?,
    ])?;
    let mut settings = OptimizerSettings::new(HBParams::new(9.0, 3.0, Budget::ResourceUnits(60.0)));
    settings.clock = ClockMode::Simulated;
    settings.sampler.n_candidates = 500;
    settings.workers = 4;

    let mut opt = MfesHb::new(space, settings, Arc::new(objective))?;
    let summary = opt.run()?;
    println!("{} evaluations", summary.evaluations);
    if let Some((config, loss, resource)) = summary.best {
        println!("best {loss:.4} at resource {resource}: {config}");
    }
    Ok(())
}
