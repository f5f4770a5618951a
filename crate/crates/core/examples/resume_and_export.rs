//! Write a history file, cut it short as if the process had been killed,
//! resume the run and export the incumbent and weight tables.

use std::sync::Arc;

use mfes_hb::export::{export, Format};
use mfes_hb::history::{read_history, HistoryWriter};
use mfes_hb::{Benchmark, BenchmarkKind, BenchmarkSpec, Budget, ClockMode, HBParams, MfesHb, OptimizerSettings};

fn bench() -> mfes_hb::Result<Benchmark> {
    let mut spec = BenchmarkSpec::new(BenchmarkKind::Hartmann3, 27.0);
    spec.noise_std = 0.01;
    spec.fidelity_bias = 0.5;
    Benchmark::new(spec)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("mfes-resume-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("run.jsonl");

    let b = bench()?;
    let mut settings = OptimizerSettings::new(HBParams::new(27.0, 3.0, Budget::ResourceUnits(423.0)));
    settings.clock = ClockMode::Simulated;
    settings.sampler.n_candidates = 500;
    let writer = HistoryWriter::create(&path, true)?;
    let mut opt = MfesHb::new(b.space().clone(), settings, Arc::new(b))?.with_history(writer);
    let full = opt.run()?;
    println!("uninterrupted: {} evaluations", full.evaluations);

    // keep the first 60% of the lines
    let text = std::fs::read_to_string(&path)?;
    let lines: Vec<&str> = text.lines().collect();
    std::fs::write(&path, lines[..lines.len() * 3 / 5].join("\n") + "\n")?;

    let records = read_history(&path)?;
    let mut opt = MfesHb::resume(Arc::new(bench()?), &records)?.with_history(HistoryWriter::append(&path)?);
    println!("resuming after {} evaluations", opt.store().total());
    let resumed = opt.run()?;
    println!("resumed: {} evaluations", resumed.evaluations);

    let paths = export(&read_history(&path)?, &dir.join("run"), Format::Csv)?;
    println!("{}", std::fs::read_to_string(&paths.weights)?);
    println!("tables written to {}", dir.display());
    Ok(())
}
