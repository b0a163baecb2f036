//! Leaderboard aggregation.
//!
//! Records are grouped by device or SoC. Each metric (the eight test
//! averages and the memory units) is filtered with [`remove_outliers`] on
//! its own and then averaged; the AI score is recomputed from those means.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runner::SuiteResult;
use crate::scoring::{fsum, score_metrics, ReferenceProfile, ScoreError, ScoreReport, TIMED_TESTS};

/// Modified z-score above which a sample is an outlier.
pub const Z_THRESHOLD: f64 = 3.5;

/// Largest share of a group's samples one filter pass may drop.
pub const MAX_DROP_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub device_name: String,
    pub soc_name: String,
    pub ram_gb: f64,
    pub suite: SuiteResult,
    pub score: Option<ScoreReport>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("`{0}` must not be empty")]
    Empty(&'static str),
    #[error("`ram_gb` must be a non-negative number")]
    Ram,
}

impl DeviceRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.device_name.trim().is_empty() {
            return Err(RecordError::Empty("device_name"));
        }
        if self.soc_name.trim().is_empty() {
            return Err(RecordError::Empty("soc_name"));
        }
        if !(self.ram_gb.is_finite() && self.ram_gb >= 0.0) {
            return Err(RecordError::Ram);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Device,
    Soc,
}

impl GroupBy {
    pub fn key(self, r: &DeviceRecord) -> &str {
        match self {
            GroupBy::Device => &r.device_name,
            GroupBy::Soc => &r.soc_name,
        }
    }
}

impl fmt::Display for GroupBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupBy::Device => "device",
            GroupBy::Soc => "soc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub group: String,
    /// Aggregated averages of tests 1 to 8, ms; `None` when no sample passed.
    pub test_ms: Vec<Option<f64>>,
    pub memory_units: f64,
    pub ai_score: f64,
    pub samples: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One modified z-score pass: drops samples with `0.6745 |x - med| / MAD`
/// above the threshold, largest deviation first, at most
/// `max(1, floor(0.3 n))` of them. Nothing is dropped when MAD is 0 or
/// fewer than three samples remain.
fn filter_once(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    if n < 3 {
        return samples.to_vec();
    }
    let med = median(&sorted(samples));
    let dev: Vec<f64> = samples.iter().map(|x| libm::fabs(x - med)).collect();
    let mad = median(&sorted(&dev));
    if !(mad > 0.0) {
        return samples.to_vec();
    }
    let mut outliers: Vec<usize> = (0..n).filter(|&i| 0.6745 * dev[i] / mad > Z_THRESHOLD).collect();
    outliers.sort_by(|&a, &b| dev[b].total_cmp(&dev[a]).then(samples[b].total_cmp(&samples[a])));
    let cap = ((n as f64 * MAX_DROP_FRACTION) as usize).max(1);
    outliers.truncate(cap);
    (0..n).filter(|i| !outliers.contains(i)).map(|i| samples[i]).collect()
}

/// Removes outliers, keeping the survivors in input order.
///
/// A pass whose survivors would lose further samples on a second pass is
/// rejected and the input is returned unchanged, which keeps the filter
/// idempotent.
pub fn remove_outliers(samples: &[f64]) -> Vec<f64> {
    let kept = filter_once(samples);
    if kept.len() == samples.len() || filter_once(&kept).len() == kept.len() {
        kept
    } else {
        samples.to_vec()
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| fsum(values.iter().copied()) / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankError {
    #[error("record {index}: {source}")]
    Record { index: usize, source: RecordError },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Groups, filters and scores records; rows are sorted by descending score,
/// ties by group key.
pub fn rank(
    records: &[DeviceRecord],
    group_by: GroupBy,
    profile: &ReferenceProfile,
) -> Result<Vec<RankingRow>, RankError> {
    let mut groups: BTreeMap<&str, Vec<&DeviceRecord>> = BTreeMap::new();
    for (index, r) in records.iter().enumerate() {
        r.validate().map_err(|source| RankError::Record { index, source })?;
        groups.entry(group_by.key(r)).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (key, members) in groups {
        let test_ms: Vec<Option<f64>> = (1..=TIMED_TESTS as u8)
            .map(|id| {
                let samples: Vec<f64> = members
                    .iter()
                    .filter_map(|r| r.suite.measurement(id))
                    .filter(|m| m.passed && m.avg_ms > 0.0)
                    .map(|m| m.avg_ms)
                    .collect();
                mean(&remove_outliers(&samples))
            })
            .collect();
        let units: Vec<f64> = members.iter().map(|r| f64::from(r.suite.memory.max_resolution_units)).collect();
        let memory_units = mean(&remove_outliers(&units)).unwrap_or(0.0);
        let ai_score = score_metrics(&test_ms, memory_units, profile)?.total;
        rows.push(RankingRow { group: key.to_string(), test_ms, memory_units, ai_score, samples: members.len() });
    }
    rows.sort_by(|a, b| match b.ai_score.total_cmp(&a.ai_score) {
        Ordering::Equal => a.group.cmp(&b.group),
        o => o,
    });
    Ok(rows)
}
