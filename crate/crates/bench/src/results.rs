//! Suite result files: JSON lines tagged by `kind`.
//!
//! A run writes one `header` (device identity and environment), one
//! `measurement` per timed test, one `memory_probe` and, when a profile
//! was available, one `score`. A `record` line carries a whole
//! [`DeviceRecord`] on its own. Ingest accepts both shapes.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use inferbench_core::aggregate::DeviceRecord;
use inferbench_core::runner::{Environment, Measurement, MemoryProbeResult, SuiteResult};
use inferbench_core::scoring::ScoreReport;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RESULTS_FORMAT: &str = "infer-bench-results/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub device_name: String,
    pub soc_name: String,
    pub ram_gb: f64,
    pub environment: Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Line {
    Header(Header),
    Measurement(Measurement),
    MemoryProbe(MemoryProbeResult),
    Score(ScoreReport),
    Record(DeviceRecord),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{source_name}:{line}: {message}")]
    Line { source_name: String, line: usize, message: String },
}

impl IngestError {
    fn at(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Self::Line { source_name: source_name.to_string(), line, message: message.into() }
    }
}

/// Writes the line stream of one suite.
pub fn write_suite(
    out: &mut impl Write,
    header: &Header,
    suite: &SuiteResult,
    score: Option<&ScoreReport>,
) -> io::Result<()> {
    let mut line = |l: Line| -> io::Result<()> {
        serde_json::to_writer(&mut *out, &l)?;
        out.write_all(b"\n")
    };
    line(Line::Header(header.clone()))?;
    for m in &suite.measurements {
        line(Line::Measurement(m.clone()))?;
    }
    line(Line::MemoryProbe(suite.memory.clone()))?;
    if let Some(s) = score {
        line(Line::Score(s.clone()))?;
    }
    Ok(())
}

pub fn write_records(out: &mut impl Write, records: &[DeviceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, &Line::Record(r.clone()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

struct Pending {
    line: usize,
    header: Header,
    measurements: Vec<Measurement>,
    memory: Option<MemoryProbeResult>,
    score: Option<ScoreReport>,
}

impl Pending {
    fn finish(self, source_name: &str) -> Result<DeviceRecord, IngestError> {
        let memory =
            self.memory.ok_or_else(|| IngestError::at(source_name, self.line, "suite has no `memory_probe` line"))?;
        let record = DeviceRecord {
            device_name: self.header.device_name,
            soc_name: self.header.soc_name,
            ram_gb: self.header.ram_gb,
            suite: SuiteResult { environment: self.header.environment, measurements: self.measurements, memory },
            score: self.score,
        };
        record.validate().map_err(|e| IngestError::at(source_name, self.line, e.to_string()))?;
        Ok(record)
    }
}

/// Parses result lines from any reader. `source_name` prefixes errors.
pub fn ingest_reader(reader: impl BufRead, source_name: &str) -> Result<Vec<DeviceRecord>, IngestError> {
    let mut records = Vec::new();
    let mut pending: Option<Pending> = None;
    for (i, text) in reader.lines().enumerate() {
        let n = i + 1;
        let text = text.map_err(|e| IngestError::at(source_name, n, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(&text).map_err(|e| IngestError::at(source_name, n, e.to_string()))?;
        match line {
            Line::Record(r) => {
                r.validate().map_err(|e| IngestError::at(source_name, n, e.to_string()))?;
                records.push(r);
            }
            Line::Header(h) => {
                if h.format != RESULTS_FORMAT {
                    return Err(IngestError::at(source_name, n, format!("unsupported format `{}`", h.format)));
                }
                if let Some(p) = pending.take() {
                    records.push(p.finish(source_name)?);
                }
                pending = Some(Pending { line: n, header: h, measurements: Vec::new(), memory: None, score: None });
            }
            other => {
                let p = pending.as_mut().ok_or_else(|| IngestError::at(source_name, n, "line before any `header`"))?;
                match other {
                    Line::Measurement(m) => p.measurements.push(m),
                    Line::MemoryProbe(m) => p.memory = Some(m),
                    Line::Score(s) => p.score = Some(s),
                    Line::Header(_) | Line::Record(_) => unreachable!(),
                }
            }
        }
    }
    if let Some(p) = pending {
        records.push(p.finish(source_name)?);
    }
    Ok(records)
}

pub fn ingest(path: &Path) -> Result<Vec<DeviceRecord>, IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    ingest_reader(io::BufReader::new(file), &path.display().to_string())
}

/// Ingests every `.jsonl` file under the given paths (directories are read
/// one level deep, in name order).
pub fn ingest_paths(paths: &[PathBuf]) -> Result<Vec<DeviceRecord>, IngestError> {
    let mut records = Vec::new();
    for path in paths {
        if path.is_dir() {
            let entries = fs::read_dir(path).map_err(|source| IngestError::Io { path: path.clone(), source })?;
            let mut files = Vec::new();
            for entry in entries {
                let entry = entry.map_err(|source| IngestError::Io { path: path.clone(), source })?;
                let p = entry.path();
                if p.extension().is_some_and(|e| e == "jsonl") && p.is_file() {
                    files.push(p);
                }
            }
            files.sort();
            for f in files {
                records.extend(ingest(&f)?);
            }
        } else {
            records.extend(ingest(path)?);
        }
    }
    Ok(records)
}
