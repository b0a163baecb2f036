//! Ranking tables as markdown, CSV or JSON.
//!
//! Columns follow [`RankingRow`]: group, the eight test averages in ms,
//! memory units, AI score, sample count. Failed tests leave an empty cell.

use std::fmt::Write as _;
use std::str::FromStr;

use inferbench_core::aggregate::RankingRow;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Markdown => "md",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "md" | "markdown" => Ok(Format::Markdown),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected markdown, csv or json)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn columns() -> Vec<String> {
    let mut c = vec!["group".to_string()];
    c.extend((1..=8).map(|i| format!("test{i}_ms")));
    c.extend(["memory_units", "ai_score", "samples"].map(String::from));
    c
}

fn cells(row: &RankingRow) -> Vec<String> {
    let mut c = vec![row.group.clone()];
    c.extend(row.test_ms.iter().map(|t| t.map(|v| format!("{v:.3}")).unwrap_or_default()));
    c.push(format!("{:.2}", row.memory_units));
    c.push(format!("{:.2}", row.ai_score));
    c.push(row.samples.to_string());
    c
}

/// RFC 4180: CRLF line ends, fields quoted only when needed.
pub fn to_csv(rows: &[RankingRow]) -> Result<String, ExportError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(columns())?;
    for r in rows {
        w.write_record(cells(r))?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("fields are UTF-8"))
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

pub fn to_markdown(rows: &[RankingRow]) -> String {
    let cols = columns();
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", cols.join(" | "));
    let align: Vec<&str> = cols.iter().enumerate().map(|(i, _)| if i == 0 { "---" } else { "---:" }).collect();
    let _ = writeln!(out, "| {} |", align.join(" | "));
    for r in rows {
        let c: Vec<String> = cells(r).iter().map(|s| if s.is_empty() { "-".into() } else { md_cell(s) }).collect();
        let _ = writeln!(out, "| {} |", c.join(" | "));
    }
    out
}

pub fn to_json(rows: &[RankingRow]) -> Result<String, ExportError> {
    Ok(serde_json::to_string_pretty(rows)? + "\n")
}

pub fn rows_from_json(text: &str) -> Result<Vec<RankingRow>, ExportError> {
    Ok(serde_json::from_str(text)?)
}

pub fn render(rows: &[RankingRow], format: Format) -> Result<String, ExportError> {
    match format {
        Format::Markdown => Ok(to_markdown(rows)),
        Format::Csv => to_csv(rows),
        Format::Json => to_json(rows),
    }
}
