//! Compare the ranking-loss weighting against its ablations and plain
//! Hyperband on Hartmann-6 with a few seeds. Pass a seed count as the
//! first argument; the default is 5.

use std::sync::Arc;

use mfes_hb::history::RunRecord;
use mfes_hb::stats::median;
use mfes_hb::{
    Benchmark, BenchmarkKind, BenchmarkSpec, Budget, ClockMode, Configuration, HBParams, MfesHb, OptimizerSettings,
    Weighting,
};

fn final_regret(seed: u64, rho: f64, weighting: Weighting) -> mfes_hb::Result<f64> {
    let kind = BenchmarkKind::Hartmann6;
    let mut spec = BenchmarkSpec::new(kind, 27.0);
    spec.noise_std = 0.01;
    spec.fidelity_bias = 0.5;
    spec.seed = seed;
    let bench = Benchmark::new(spec)?;
    let mut s = OptimizerSettings::new(HBParams::new(27.0, 3.0, Budget::ResourceUnits(3.0 * 423.0)));
    s.seed = seed;
    s.clock = ClockMode::Simulated;
    s.sampler.rho = rho;
    s.ensemble.weighting = weighting;
    let mut opt = MfesHb::new(bench.space().clone(), s, Arc::new(bench))?;
    opt.run()?;
    let mut best = (f64::INFINITY, f64::INFINITY);
    for r in opt.records() {
        if let RunRecord::Measurement {
            config,
            resource,
            loss: Some(y),
            ..
        } = r
        {
            if *resource == 27.0 && *y < best.0 {
                best = (*y, kind.true_loss(&Configuration::new(config.clone()))? - kind.optimum());
            }
        }
    }
    Ok(best.1)
}

fn main() -> mfes_hb::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5);
    let modes = [
        ("ranking-loss weights", 0.2, Weighting::RankingLoss),
        ("equal weights", 0.2, Weighting::Uniform),
        ("single best", 0.2, Weighting::SingleBest),
        ("top fidelity only", 0.2, Weighting::TopFidelityOnly),
        ("plain hyperband", 1.0, Weighting::RankingLoss),
    ];
    println!("median simple regret over {seeds} seeds");
    for (name, rho, weighting) in modes {
        let regrets = (0..seeds)
            .map(|s| final_regret(s, rho, weighting))
            .collect::<mfes_hb::Result<Vec<f64>>>()?;
        println!("{name:<22} {:.4}", median(&regrets));
    }
    Ok(())
}
