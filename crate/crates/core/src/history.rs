//! Append-only JSON-lines run history.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ConfigurationSpace, Value};

/// One line of a run history. `t` is seconds since the run started
/// (or cumulative resource units under the simulated clock).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunRecord {
    RunMeta {
        t: f64,
        version: String,
        seed: u64,
        space: ConfigurationSpace,
        /// Optimizer settings as written by the driver.
        settings: serde_json::Value,
        /// Evaluator description; `null` when the objective was supplied
        /// programmatically.
        evaluator: serde_json::Value,
    },
    BracketStart {
        t: f64,
        bracket: u64,
        s: u32,
        n1: usize,
        r1: f64,
    },
    Measurement {
        t: f64,
        bracket: u64,
        rung: usize,
        request_id: String,
        config_id: u64,
        config: BTreeMap<String, Value>,
        resource: f64,
        /// `null` for failed evaluations.
        loss: Option<f64>,
        duration: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        failure: Option<String>,
    },
    EnsembleBuild {
        t: f64,
        bracket: u64,
        resources: Vec<f64>,
        weights: Vec<f64>,
        /// Order-preserving fraction per base, `null` where not computed.
        fractions: Vec<Option<f64>>,
        safeguard: bool,
    },
}

impl RunRecord {
    pub fn t(&self) -> f64 {
        match self {
            RunRecord::RunMeta { t, .. }
            | RunRecord::BracketStart { t, .. }
            | RunRecord::Measurement { t, .. }
            | RunRecord::EnsembleBuild { t, .. } => *t,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunRecord::RunMeta { .. } => "run_meta",
            RunRecord::BracketStart { .. } => "bracket_start",
            RunRecord::Measurement { .. } => "measurement",
            RunRecord::EnsembleBuild { .. } => "ensemble_build",
        }
    }
}

/// Writes records one per line, flushing after each.
#[derive(Debug)]
pub struct HistoryWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl HistoryWriter {
    /// Starts a new history. Fails if a non-empty file is already there
    /// unless `overwrite` is set.
    pub fn create(path: impl AsRef<Path>, overwrite: bool) -> Result<Self> {
        let path = path.as_ref();
        if !overwrite && path.metadata().map(|m| m.len() > 0).unwrap_or(false) {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} already exists", path.display()),
            )));
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = File::create(path)?;
        Ok(Self {
            path: path.to_owned(),
            out: BufWriter::new(file),
        })
    }

    /// Continues an existing history. A truncated final line is cut off
    /// first so new records start on a fresh line.
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let keep = if text.is_empty() || text.ends_with('\n') {
            text.len()
        } else {
            text.rfind('\n').map(|i| i + 1).unwrap_or(0)
        };
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(keep as u64)?;
        let mut file = OpenOptions::new().append(true).open(path)?;
        file.flush()?;
        Ok(Self {
            path: path.to_owned(),
            out: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, record: &RunRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Parses a history. A malformed final line is treated as an interrupted
/// write and dropped with a warning; a malformed earlier line is an error.
pub fn parse_history(text: &str) -> Result<Vec<RunRecord>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let mut records = Vec::with_capacity(lines.len());
    for (pos, (idx, line)) in lines.iter().enumerate() {
        match serde_json::from_str::<RunRecord>(line) {
            Ok(r) => records.push(r),
            Err(e) if pos + 1 == lines.len() => {
                log::warn!("ignoring truncated final history line {}: {e}", idx + 1);
            }
            Err(e) => {
                return Err(Error::CorruptHistory {
                    line: idx + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    match records.first() {
        Some(RunRecord::RunMeta { .. }) => Ok(records),
        _ => Err(Error::MissingRunMeta),
    }
}

pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    parse_history(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParameterSpec;

    fn meta() -> RunRecord {
        RunRecord::RunMeta {
            t: 0.0,
            version: "0".into(),
            seed: 1,
            space: ConfigurationSpace::new(vec![ParameterSpec::continuous("x", 0.0, 1.0).unwrap()]).unwrap(),
            settings: serde_json::json!({}),
            evaluator: serde_json::Value::Null,
        }
    }

    fn measurement(loss: Option<f64>) -> RunRecord {
        let mut config = BTreeMap::new();
        config.insert("x".to_owned(), Value::Float(0.1 + 0.2));
        RunRecord::Measurement {
            t: 1.5,
            bracket: 0,
            rung: 0,
            request_id: "b0-r0-0".into(),
            config_id: 42,
            config,
            resource: 1.0,
            loss,
            duration: 0.25,
            failure: loss.is_none().then(|| "exit status 1".to_owned()),
        }
    }

    #[test]
    fn records_round_trip_bit_exact() {
        for r in [meta(), measurement(Some(0.1 + 0.7)), measurement(None)] {
            let line = serde_json::to_string(&r).unwrap();
            assert_eq!(serde_json::from_str::<RunRecord>(&line).unwrap(), r);
        }
        let line = serde_json::to_string(&measurement(None)).unwrap();
        assert!(line.contains(r#""kind":"measurement""#) && line.contains(r#""loss":null"#));
    }

    #[test]
    fn truncated_tail_is_dropped() {
        let mut text = String::new();
        for r in [meta(), measurement(Some(1.0))] {
            text.push_str(&serde_json::to_string(&r).unwrap());
            text.push('\n');
        }
        text.push_str(r#"{"kind":"measurement","t":2."#);
        assert_eq!(parse_history(&text).unwrap().len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_reported() {
        let m = serde_json::to_string(&meta()).unwrap();
        let text = format!("{m}\nnot json\n{m}\n");
        assert!(matches!(parse_history(&text), Err(Error::CorruptHistory { line: 2, .. })));
    }

    #[test]
    fn missing_meta() {
        assert!(matches!(parse_history(""), Err(Error::MissingRunMeta)));
        let m = serde_json::to_string(&measurement(Some(1.0))).unwrap();
        assert!(matches!(parse_history(&format!("{m}\n")), Err(Error::MissingRunMeta)));
    }

    #[test]
    fn writer_create_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("h.jsonl");
        let mut w = HistoryWriter::create(&path, false).unwrap();
        w.write(&meta()).unwrap();
        drop(w);
        assert!(HistoryWriter::create(&path, false).is_err());
        // simulate a crash mid-write
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"kind":"meas"#).unwrap();
        drop(f);
        let mut w = HistoryWriter::append(&path).unwrap();
        w.write(&measurement(Some(2.0))).unwrap();
        drop(w);
        let records = read_history(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1], measurement(Some(2.0)));
    }
}
