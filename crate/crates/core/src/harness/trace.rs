//! Versioned CSV files written by runs.
//!
//! Every file starts with a `# <name> v<version>` line, followed by a
//! header row. Optional values are written as empty fields.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agent::{PpoStats, TraceRow};
use crate::error::{Error, Result};

pub const TRACE_VERSION: u32 = 1;

/// Columns of `trace.csv`: one row per environment step.
pub const TRACE_COLUMNS: [&str; 11] = [
    "step",
    "episode",
    "t",
    "reward",
    "cameras",
    "coverage",
    "pm_loss",
    "l1",
    "pm_version",
    "lit_pixels",
    "light_intensity",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub episode: u64,
    pub t: usize,
    pub reward: f64,
    pub cameras: usize,
    pub coverage: f64,
    pub pm_loss: Option<f64>,
    pub l1: Option<f64>,
    pub pm_version: Option<u64>,
    pub lit_pixels: Option<usize>,
    pub light_intensity: Option<f64>,
}

impl From<&TraceRow> for TraceRecord {
    fn from(r: &TraceRow) -> Self {
        TraceRecord {
            step: r.step,
            episode: r.episode,
            t: r.t,
            reward: r.reward,
            cameras: r.info.cameras,
            coverage: r.info.coverage,
            pm_loss: r.info.pm_loss,
            l1: r.info.l1,
            pm_version: r.info.pm_version,
            lit_pixels: r.info.lit_pixels,
            light_intensity: r.info.light_intensity,
        }
    }
}

/// Columns of `updates.csv`: one row per PPO update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update: usize,
    pub surrogate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl UpdateRecord {
    pub fn new(update: usize, s: &PpoStats) -> Self {
        UpdateRecord {
            update,
            surrogate: s.surrogate,
            policy_loss: s.policy_loss,
            value_loss: s.value_loss,
            entropy: s.entropy,
            approx_kl: s.approx_kl,
            clip_fraction: s.clip_fraction,
        }
    }
}

/// Writes `rows` under a `# name vN` line.
pub fn write_csv<T: Serialize>(path: &Path, name: &str, version: u32, rows: &[T]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "# {name} v{version}")?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_csv`], checking name and version.
pub fn read_csv<T: DeserializeOwned>(path: &Path, name: &str, version: u32) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let expected = format!("# {name} v{version}");
    if first.trim_end() != expected {
        return Err(Error::Config(format!(
            "{}: expected schema line `{expected}`, found `{}`",
            path.display(),
            first.trim_end()
        )));
    }
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let records: Vec<TraceRecord> = rows.iter().map(TraceRecord::from).collect();
    write_csv(path, "trace", TRACE_VERSION, &records)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    read_csv(path, "trace", TRACE_VERSION)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::StepInfo;

    #[test]
    fn trace_round_trips_with_optional_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let rows = vec![
            TraceRow { step: 0, episode: 0, t: 0, reward: -1.0, info: StepInfo::default() },
            TraceRow {
                step: 1,
                episode: 0,
                t: 1,
                reward: 0.1 + 0.2,
                info: StepInfo {
                    cameras: 2,
                    coverage: 1.0,
                    pm_loss: Some(3.25),
                    l1: Some(1.0 / 3.0),
                    pm_version: Some(7),
                    lit_pixels: Some(40),
                    light_intensity: Some(0.75),
                },
            },
        ];
        write_trace(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# trace v1"));
        assert_eq!(lines.next().unwrap(), TRACE_COLUMNS.join(","));
        let back = read_trace(&path).unwrap();
        let expected: Vec<TraceRecord> = rows.iter().map(TraceRecord::from).collect();
        assert_eq!(back, expected);
    }

    #[test]
    fn wrong_schema_line_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        std::fs::write(&path, "# trace v0\nstep\n").unwrap();
        assert!(read_trace(&path).is_err());
        assert!(matches!(read_trace(&dir.path().join("nope.csv")), Err(Error::MissingFile(_))));
    }
}
