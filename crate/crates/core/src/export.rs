//! Tabular views of a run history for plotting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::history::RunRecord;
use crate::scheduler::OptimizerSettings;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncumbentRow {
    pub t: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightRow {
    pub t: f64,
    pub bracket: u64,
    pub safeguard: bool,
    pub resources: Vec<f64>,
    pub weights: Vec<f64>,
    pub fractions: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

fn max_resource(records: &[RunRecord]) -> Result<f64> {
    match records.first() {
        Some(RunRecord::RunMeta { settings, .. }) => {
            let s: OptimizerSettings = serde_json::from_value(settings.clone())?;
            Ok(s.hyperband.max_resource)
        }
        _ => Err(Error::MissingRunMeta),
    }
}

/// Running minimum of successful full-resource losses, one row per such
/// measurement.
pub fn incumbent_trace(records: &[RunRecord]) -> Result<Vec<IncumbentRow>> {
    let top = max_resource(records)?;
    let mut best = f64::INFINITY;
    let mut rows = Vec::new();
    for r in records {
        if let RunRecord::Measurement {
            t,
            resource,
            loss: Some(y),
            ..
        } = r
        {
            if (resource - top).abs() <= 1e-9 * top {
                best = best.min(*y);
                rows.push(IncumbentRow { t: *t, loss: best });
            }
        }
    }
    Ok(rows)
}

pub fn weight_rows(records: &[RunRecord]) -> Vec<WeightRow> {
    records
        .iter()
        .filter_map(|r| match r {
            RunRecord::EnsembleBuild {
                t,
                bracket,
                resources,
                weights,
                fractions,
                safeguard,
            } => Some(WeightRow {
                t: *t,
                bracket: *bracket,
                safeguard: *safeguard,
                resources: resources.clone(),
                weights: weights.clone(),
                fractions: fractions.clone(),
            }),
            _ => None,
        })
        .collect()
}

fn write_incumbent_csv(rows: &[IncumbentRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "best_loss"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.t.to_string(), r.loss.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_weights_csv(rows: &[WeightRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let levels = rows.first().map_or(&[][..], |r| &r.resources[..]);
    let mut header = vec!["t".to_owned(), "bracket".to_owned(), "safeguard".to_owned()];
    header.extend(levels.iter().map(|r| format!("w@{r}")));
    header.extend(levels.iter().map(|r| format!("p@{r}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.t.to_string(), r.bracket.to_string(), r.safeguard.to_string()];
        rec.extend(r.weights.iter().map(f64::to_string));
        rec.extend(r.fractions.iter().map(|p| p.map(|p| p.to_string()).unwrap_or_default()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_jsonl<T: Serialize>(rows: &[T], mut out: impl Write) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Paths written by [`export`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportPaths {
    pub incumbent: PathBuf,
    pub weights: PathBuf,
}

/// Writes `<prefix>.incumbent.<ext>` and `<prefix>.weights.<ext>`.
pub fn export(records: &[RunRecord], prefix: &Path, format: Format) -> Result<ExportPaths> {
    let incumbent = incumbent_trace(records)?;
    let weights = weight_rows(records);
    if incumbent.is_empty() {
        log::warn!("history has no successful full-resource measurements; incumbent table is empty");
    }
    let with_suffix = |suffix: &str| {
        let mut name = prefix.as_os_str().to_owned();
        name.push(format!(".{suffix}.{}", format.extension()));
        PathBuf::from(name)
    };
    let paths = ExportPaths {
        incumbent: with_suffix("incumbent"),
        weights: with_suffix("weights"),
    };
    let inc_out = BufWriter::new(File::create(&paths.incumbent)?);
    let w_out = BufWriter::new(File::create(&paths.weights)?);
    match format {
        Format::Csv => {
            write_incumbent_csv(&incumbent, inc_out)?;
            write_weights_csv(&weights, w_out)?;
        }
        Format::Jsonl => {
            write_jsonl(&incumbent, inc_out)?;
            write_jsonl(&weights, w_out)?;
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{Budget, HBParams};
    use crate::space::{ConfigurationSpace, ParameterSpec, Value};
    use std::collections::BTreeMap;

    fn meta() -> RunRecord {
        let settings = OptimizerSettings::new(HBParams::new(9.0, 3.0, Budget::ResourceUnits(10.0)));
        RunRecord::RunMeta {
            t: 0.0,
            version: "0".into(),
            seed: 0,
            space: ConfigurationSpace::new(vec![ParameterSpec::continuous("x", 0.0, 1.0).unwrap()]).unwrap(),
            settings: serde_json::to_value(settings).unwrap(),
            evaluator: serde_json::Value::Null,
        }
    }

    fn m(t: f64, resource: f64, loss: Option<f64>) -> RunRecord {
        let mut config = BTreeMap::new();
        config.insert("x".to_owned(), Value::Float(t));
        RunRecord::Measurement {
            t,
            bracket: 0,
            rung: 0,
            request_id: format!("r{t}"),
            config_id: 0,
            config,
            resource,
            loss,
            duration: 0.0,
            failure: None,
        }
    }

    fn build(t: f64) -> RunRecord {
        RunRecord::EnsembleBuild {
            t,
            bracket: 0,
            resources: vec![1.0, 3.0, 9.0],
            weights: vec![0.5, 0.5, 0.0],
            fractions: vec![Some(1.0), Some(1.0), None],
            safeguard: false,
        }
    }

    #[test]
    fn running_minimum_over_top_level() {
        let records = vec![
            meta(),
            m(1.0, 9.0, Some(0.5)),
            m(2.0, 1.0, Some(0.1)),
            m(3.0, 9.0, Some(0.3)),
            m(4.0, 9.0, None),
            m(5.0, 9.0, Some(0.4)),
        ];
        let losses: Vec<f64> = incumbent_trace(&records).unwrap().iter().map(|r| r.loss).collect();
        assert_eq!(losses, vec![0.5, 0.3, 0.3]);
    }

    #[test]
    fn export_writes_both_tables() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![meta(), m(1.0, 1.0, Some(0.2)), build(1.0), build(2.0), build(3.0)];
        for format in [Format::Csv, Format::Jsonl] {
            let paths = export(&records, &dir.path().join("run"), format).unwrap();
            let inc = std::fs::read_to_string(&paths.incumbent).unwrap();
            let w = std::fs::read_to_string(&paths.weights).unwrap();
            let header = usize::from(format == Format::Csv);
            assert_eq!(inc.lines().count(), header);
            assert_eq!(w.lines().count(), 3 + header);
        }
        let csv = std::fs::read_to_string(dir.path().join("run.weights.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "t,bracket,safeguard,w@1,w@3,w@9,p@1,p@3,p@9");
    }
}
