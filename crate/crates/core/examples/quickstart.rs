//! Optimize the Branin function with a short resource budget.

use std::sync::Arc;

use mfes_hb::{Benchmark, BenchmarkKind, BenchmarkSpec, Budget, ClockMode, HBParams, MfesHb, OptimizerSettings};

fn main() -> mfes_hb::Result<()> {
    let mut spec = BenchmarkSpec::new(BenchmarkKind::Branin, 27.0);
    spec.noise_std = 0.01;
    spec.fidelity_bias = 0.5;
    let bench = Benchmark::new(spec)?;

    let mut settings = OptimizerSettings::new(HBParams::new(27.0, 3.0, Budget::ResourceUnits(2.0 * 423.0)));
    settings.seed = 7;
    settings.clock = ClockMode::Simulated;
    settings.sampler.n_candidates = 1000;

    let mut opt = MfesHb::new(bench.space().clone(), settings, Arc::new(bench))?;
    let summary = opt.run()?;
    println!(
        "{} evaluations over {} brackets, {} resource units",
        summary.evaluations, summary.brackets_started, summary.resource_used
    );
    if let Some((config, loss, resource)) = summary.best {
        println!("best loss {loss:.4} at resource {resource}: {config}");
        println!("known optimum {:.4}", BenchmarkKind::Branin.optimum());
    }
    Ok(())
}
