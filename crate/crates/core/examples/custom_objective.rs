//! Plug a closure in as the objective over a mixed space. The resource is
//! treated as a number of training epochs.

use std::sync::Arc;

use mfes_hb::{
    Budget, ClockMode, ConfigurationSpace, EvaluationRequest, Failure, HBParams, MfesHb, Objective,
    OptimizerSettings, ParameterSpec,
};

fn main() -> mfes_hb::Result<()> {
    let space = ConfigurationSpace::new(vec![
        ParameterSpec::log_continuous("lr", 1e-5, 1e-1)?,
        ParameterSpec::integer("depth", 1, 8)?,
        ParameterSpec::categorical("activation", ["relu", "tanh", "gelu"])?,
    ])?;

    let objective = |req: &EvaluationRequest| -> Result<f64, Failure> {
        let c = &req.config;
        let lr = c.get("lr").and_then(|v| v.as_f64()).ok_or_else(|| Failure::new("missing lr"))?;
        let depth = c.get("depth").and_then(|v| v.as_f64()).ok_or_else(|| Failure::new("missing depth"))?;
        let act = c.get("activation").and_then(|v| v.as_str()).unwrap_or("relu");
        if lr > 0.05 && depth > 6.0 {
            return Err(Failure::new("diverged"));
        }
        let base = (lr.log10() + 3.0).powi(2) + 0.05 * (depth - 4.0).powi(2);
        let act_penalty = if act == "gelu" { 0.0 } else { 0.2 };
        Ok(base + act_penalty + 1.0 / req.resource)
    };
    let objective: Arc<dyn Objective> = Arc::new(objective);

    let mut settings = OptimizerSettings::new(HBParams::new(27.0, 3.0, Budget::ResourceUnits(423.0)));
    settings.clock = ClockMode::Simulated;
    settings.sampler.n_candidates = 500;
    settings.workers = 2;

    let mut opt = MfesHb::new(space, settings, objective)?;
    let summary = opt.run()?;
    if let Some((config, loss, resource)) = summary.best {
        println!("best {loss:.4} at resource {resource}: {config}");
    }
    for (g, n) in opt.store().groups().iter().zip(opt.store().counts()) {
        println!("resource {:>3}: {n} measurements", g.resource());
    }
    Ok(())
}
