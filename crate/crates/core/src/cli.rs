//! The `mfes` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::benchmarks::BenchmarkKind;
use crate::config::{self, EvaluatorSpec, Overrides};
use crate::error::Error;
use crate::export::{self, Format};
use crate::history::{read_history, HistoryWriter, RunRecord};
use crate::scheduler::{Budget, ClockMode, MfesHb, RunSummary};

/// Environment variable naming the default directory for run histories.
pub const HISTORY_DIR_ENV: &str = "MFES_HISTORY_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_EVALUATOR_SETUP: i32 = 3;
pub const EXIT_BAD_HISTORY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "mfes", version, about = "Multi-fidelity hyperparameter optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start a new run from a TOML config file.
    Run(RunArgs),
    /// Continue an interrupted run from its history file.
    Resume {
        history: PathBuf,
    },
    /// Write incumbent and weight tables from a history file.
    Export {
        history: PathBuf,
        #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
        format: ExportFormat,
        /// Output path prefix; defaults to the history path without its extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in benchmarks.
    BenchList,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, conflicts_with = "budget_units")]
    pub budget_secs: Option<f64>,
    #[arg(long)]
    pub budget_units: Option<f64>,
    #[arg(long, value_enum)]
    pub clock: Option<ClockArg>,
    /// Replace an existing history file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClockArg {
    Wall,
    Simulated,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidParameter { .. } => EXIT_INVALID_CONFIG,
        Error::EvaluatorSetup(_) => EXIT_EVALUATOR_SETUP,
        Error::CorruptHistory { .. } | Error::MissingRunMeta => EXIT_BAD_HISTORY,
        _ => EXIT_FAILURE,
    }
}

fn fail(context: &str, err: Error) -> i32 {
    eprintln!("error: {context}: {err}");
    exit_code(&err)
}

fn default_history(config: &Path, seed: u64) -> PathBuf {
    let dir = std::env::var_os(HISTORY_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    let stem = config.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    dir.join(format!("{stem}-seed{seed}.jsonl"))
}

fn print_summary(summary: &RunSummary) {
    match &summary.best {
        Some((config, loss, resource)) => {
            println!("best loss {loss} at resource {resource}");
            println!("best configuration {config}");
        }
        None => println!("no successful evaluation"),
    }
    println!(
        "{} evaluations, {} resource units, {:.3}s",
        summary.evaluations, summary.resource_used, summary.elapsed
    );
}

fn run(args: RunArgs) -> i32 {
    let overrides = Overrides {
        seed: args.seed,
        workers: args.workers,
        history: args.history.clone(),
        budget: args
            .budget_secs
            .map(Budget::WallClockSecs)
            .or(args.budget_units.map(Budget::ResourceUnits)),
        clock: args.clock.map(|c| match c {
            ClockArg::Wall => ClockMode::Wall,
            ClockArg::Simulated => ClockMode::Simulated,
        }),
    };
    let settings = match config::load(&args.config, &overrides) {
        Ok(s) => s,
        Err(Error::Io(e)) => return fail(&args.config.display().to_string(), Error::Io(e)),
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return EXIT_INVALID_CONFIG;
        }
    };
    let objective = match settings.evaluator.build(&settings.optimizer) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: evaluator: {e}");
            return EXIT_EVALUATOR_SETUP;
        }
    };
    let history = settings
        .history
        .clone()
        .unwrap_or_else(|| default_history(&args.config, settings.optimizer.seed));
    let writer = match HistoryWriter::create(&history, args.force) {
        Ok(w) => w,
        Err(e) => return fail(&history.display().to_string(), e),
    };
    let evaluator_meta = match serde_json::to_value(&settings.evaluator) {
        Ok(v) => v,
        Err(e) => return fail("evaluator", e.into()),
    };
    let optimizer = match MfesHb::new(settings.space.clone(), settings.optimizer.clone(), objective) {
        Ok(o) => o,
        Err(e) => return fail("settings", e),
    };
    let mut optimizer = optimizer.with_history(writer).with_evaluator_meta(evaluator_meta);
    println!("history: {}", history.display());
    match optimizer.run() {
        Ok(summary) => {
            print_summary(&summary);
            EXIT_OK
        }
        Err(e) => fail("run", e),
    }
}

fn resume(path: &Path) -> i32 {
    let records = match read_history(path) {
        Ok(r) => r,
        Err(e) => return fail(&path.display().to_string(), e),
    };
    let Some(RunRecord::RunMeta { settings, evaluator, .. }) = records.first() else {
        return fail(&path.display().to_string(), Error::MissingRunMeta);
    };
    let spec: EvaluatorSpec = match serde_json::from_value(evaluator.clone()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: history does not describe a resumable evaluator: {e}");
            return EXIT_EVALUATOR_SETUP;
        }
    };
    let optimizer_settings = match serde_json::from_value(settings.clone()) {
        Ok(s) => s,
        Err(e) => return fail("run_meta settings", Error::CorruptHistory { line: 1, reason: e.to_string() }),
    };
    let objective = match spec.build(&optimizer_settings) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: evaluator: {e}");
            return EXIT_EVALUATOR_SETUP;
        }
    };
    let optimizer = match MfesHb::resume(objective, &records) {
        Ok(o) => o,
        Err(e) => return fail("resume", e),
    };
    if optimizer.budget_exhausted() {
        println!("run already complete");
        if let Some((config, loss, resource)) = optimizer.best() {
            println!("best loss {loss} at resource {resource}");
            println!("best configuration {config}");
        }
        return EXIT_OK;
    }
    let writer = match HistoryWriter::append(path) {
        Ok(w) => w,
        Err(e) => return fail(&path.display().to_string(), e),
    };
    let mut optimizer = optimizer.with_history(writer);
    match optimizer.run() {
        Ok(summary) => {
            print_summary(&summary);
            EXIT_OK
        }
        Err(e) => fail("run", e),
    }
}

fn export_cmd(path: &Path, format: ExportFormat, out: Option<PathBuf>) -> i32 {
    let records = match read_history(path) {
        Ok(r) => r,
        Err(e) => return fail(&path.display().to_string(), e),
    };
    let prefix = out.unwrap_or_else(|| path.with_extension(""));
    let format = match format {
        ExportFormat::Csv => Format::Csv,
        ExportFormat::Jsonl => Format::Jsonl,
    };
    match export::export(&records, &prefix, format) {
        Ok(paths) => {
            println!("{}", paths.incumbent.display());
            println!("{}", paths.weights.display());
            EXIT_OK
        }
        Err(e) => fail("export", e),
    }
}

fn bench_list() -> i32 {
    for k in BenchmarkKind::ALL {
        println!("{:<14} optimum {:<12} {}", k.name(), k.optimum(), k.description());
    }
    EXIT_OK
}

/// Parses arguments and runs a subcommand, returning the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run(args) => run(args),
        Command::Resume { history } => resume(&history),
        Command::Export { history, format, out } => export_cmd(&history, format, out),
        Command::BenchList => bench_list(),
    }
}
