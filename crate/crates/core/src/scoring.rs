//! Per-test points and the aggregate AI score.
//!
//! A passed timed test scores `w[i] * t_ref[i] / avg_ms`; a failed one
//! scores 0. The memory probe scores `w[9] * units / l_ref`. The total is
//! the exactly rounded sum of the nine contributions.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runner::{Measurement, MemoryProbeResult, SuiteResult};

pub const TIMED_TESTS: usize = 8;
pub const ALL_TESTS: usize = 9;

/// Total a calibrating machine scores against its own profile by default.
pub const DEFAULT_TOTAL: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("test {test_id}: average runtime {avg_ms} ms is not positive")]
    NonPositiveAverage { test_id: u8, avg_ms: f64 },
    #[error("test id {0} is outside 1..=8")]
    TestId(u8),
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("cannot calibrate: test {0} did not pass")]
    Failed(u8),
    #[error("cannot calibrate: test {0} is missing")]
    Missing(u8),
    #[error("target total {0} is not positive")]
    Target(f64),
}

/// Stored runtimes and weights of a calibration machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProfile {
    pub name: String,
    /// Reference average runtimes of tests 1 to 8, ms.
    pub t_ref: Vec<f64>,
    /// Reference memory probe result, 100 px units.
    pub l_ref: f64,
    /// Weights of tests 1 to 9.
    pub weights: Vec<f64>,
}

impl ReferenceProfile {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let bad = |m: String| Err(ScoreError::Profile(m));
        if self.t_ref.len() != TIMED_TESTS {
            return bad(format!("t_ref needs {TIMED_TESTS} entries, got {}", self.t_ref.len()));
        }
        if self.weights.len() != ALL_TESTS {
            return bad(format!("weights needs {ALL_TESTS} entries, got {}", self.weights.len()));
        }
        if let Some(i) = self.t_ref.iter().position(|&t| !(t.is_finite() && t > 0.0)) {
            return bad(format!("t_ref[{}] must be positive", i + 1));
        }
        if !(self.l_ref.is_finite() && self.l_ref >= 1.0) {
            return bad("l_ref must be at least 1".to_string());
        }
        if let Some(i) = self.weights.iter().position(|&w| !(w.is_finite() && w >= 0.0)) {
            return bad(format!("weights[{}] must be non-negative", i + 1));
        }
        if !self.weights.iter().any(|&w| w > 0.0) {
            return bad("at least one weight must be positive".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub profile: String,
    /// Points of tests 1 to 9.
    pub per_test_points: Vec<f64>,
    pub total: f64,
    /// Tests that scored 0 because they failed or are missing.
    pub failed: Vec<u8>,
}

/// Exactly rounded sum (Shewchuk's partials).
pub fn fsum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if libm::fabs(x) < libm::fabs(y) {
                core::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let Some(mut hi) = partials.pop() else { return 0.0 };
    while let Some(y) = partials.pop() {
        let x = hi;
        hi = x + y;
        let lo = y - (hi - x);
        if lo != 0.0 {
            // Round-half-even correction across the remaining partials.
            if let Some(&next) = partials.last() {
                if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
                    let y = lo * 2.0;
                    let x = hi + y;
                    if y == x - hi {
                        hi = x;
                    }
                }
            }
            break;
        }
    }
    hi
}

fn check_id(test_id: u8) -> Result<usize, ScoreError> {
    match test_id {
        1..=8 => Ok(usize::from(test_id) - 1),
        _ => Err(ScoreError::TestId(test_id)),
    }
}

/// Points for one timed test given its average, or `None` when it failed.
pub fn score_runtime(test_id: u8, avg_ms: Option<f64>, profile: &ReferenceProfile) -> Result<f64, ScoreError> {
    let i = check_id(test_id)?;
    match avg_ms {
        None => Ok(0.0),
        Some(avg) if !(avg > 0.0) => Err(ScoreError::NonPositiveAverage { test_id, avg_ms: avg }),
        Some(avg) => Ok(profile.weights[i] * (profile.t_ref[i] / avg)),
    }
}

pub fn score_test(m: &Measurement, profile: &ReferenceProfile) -> Result<f64, ScoreError> {
    profile.validate()?;
    score_runtime(m.test_id, m.passed.then_some(m.avg_ms), profile)
}

pub fn score_memory_units(units: f64, profile: &ReferenceProfile) -> f64 {
    profile.weights[TIMED_TESTS] * (units / profile.l_ref)
}

pub fn score_memory(r: &MemoryProbeResult, profile: &ReferenceProfile) -> Result<f64, ScoreError> {
    profile.validate()?;
    Ok(score_memory_units(f64::from(r.max_resolution_units), profile))
}

/// Scores raw metrics: averages of tests 1 to 8 (`None` for failed) and
/// memory units.
pub fn score_metrics(
    avg_ms: &[Option<f64>],
    memory_units: f64,
    profile: &ReferenceProfile,
) -> Result<ScoreReport, ScoreError> {
    profile.validate()?;
    let mut points = Vec::with_capacity(ALL_TESTS);
    let mut failed = Vec::new();
    for test_id in 1..=TIMED_TESTS as u8 {
        let avg = avg_ms.get(usize::from(test_id) - 1).copied().flatten();
        if avg.is_none() {
            failed.push(test_id);
        }
        points.push(score_runtime(test_id, avg, profile)?);
    }
    if memory_units <= 0.0 {
        failed.push(ALL_TESTS as u8);
    }
    points.push(score_memory_units(memory_units.max(0.0), profile));
    Ok(ScoreReport {
        profile: profile.name.clone(),
        total: fsum(points.iter().copied()),
        per_test_points: points,
        failed,
    })
}

/// Averages of tests 1 to 8 as scored: `None` for failed or missing tests.
pub fn suite_averages(suite: &SuiteResult) -> Vec<Option<f64>> {
    (1..=TIMED_TESTS as u8).map(|id| suite.measurement(id).filter(|m| m.passed).map(|m| m.avg_ms)).collect()
}

pub fn aggregate_score(suite: &SuiteResult, profile: &ReferenceProfile) -> Result<ScoreReport, ScoreError> {
    score_metrics(&suite_averages(suite), f64::from(suite.memory.max_resolution_units), profile)
}

/// Profile under which `suite` scores exactly `total_target`: its own
/// runtimes as references and equal weights. The last weight absorbs the
/// rounding of `total_target / 9` so the fixed point is exact.
pub fn calibrate_profile(suite: &SuiteResult, total_target: f64, name: &str) -> Result<ReferenceProfile, ScoreError> {
    if !(total_target.is_finite() && total_target > 0.0) {
        return Err(ScoreError::Target(total_target));
    }
    let mut t_ref = Vec::with_capacity(TIMED_TESTS);
    for id in 1..=TIMED_TESTS as u8 {
        let m = suite.measurement(id).ok_or(ScoreError::Missing(id))?;
        if !m.passed || !(m.avg_ms > 0.0) {
            return Err(ScoreError::Failed(id));
        }
        t_ref.push(m.avg_ms);
    }
    if suite.memory.max_resolution_units == 0 {
        return Err(ScoreError::Failed(ALL_TESTS as u8));
    }
    let share = total_target / ALL_TESTS as f64;
    let mut weights = alloc::vec![share; TIMED_TESTS];
    weights.push(total_target - fsum(weights.iter().copied()));
    let profile = ReferenceProfile {
        name: name.to_string(),
        t_ref,
        l_ref: f64::from(suite.memory.max_resolution_units),
        weights,
    };
    profile.validate()?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn profile(w: f64) -> ReferenceProfile {
        ReferenceProfile { name: "p".into(), t_ref: vec![100.0; 8], l_ref: 4.0, weights: vec![w; 9] }
    }

    #[test]
    fn fsum_is_exact() {
        assert_eq!(fsum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(fsum([0.1; 10]), 1.0);
        assert_eq!(fsum([]), 0.0);
    }

    #[test]
    fn runtime_points() {
        let p = profile(100.0);
        assert_eq!(score_runtime(1, Some(100.0), &p).unwrap(), 100.0);
        assert_eq!(score_runtime(1, Some(50.0), &p).unwrap(), 200.0);
        assert_eq!(score_runtime(1, None, &p).unwrap(), 0.0);
        assert!(matches!(score_runtime(1, Some(0.0), &p), Err(ScoreError::NonPositiveAverage { .. })));
        assert!(matches!(score_runtime(9, Some(1.0), &p), Err(ScoreError::TestId(9))));
    }

    #[test]
    fn memory_points() {
        let p = profile(100.0);
        assert_eq!(score_memory_units(4.0, &p), 100.0);
        assert_eq!(score_memory_units(0.0, &p), 0.0);
        assert_eq!(score_memory_units(6.0, &p), 150.0);
    }

    #[test]
    fn profile_validation() {
        let mut p = profile(1.0);
        p.l_ref = 0.5;
        assert!(p.validate().is_err());
        let mut p = profile(0.0);
        assert!(p.validate().is_err());
        p.weights[3] = 1.0;
        assert!(p.validate().is_ok());
    }
}
