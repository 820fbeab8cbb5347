//! Debugging-tool score records and the closed-form benchmark/filter formulas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("total count must be at least 1")]
    ZeroTotal,
    #[error("tallies ({counted}) exceed the total count ({total})")]
    CountsExceedTotal { counted: u64, total: u64 },
    #[error("gamma must lie in (0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("score {value} is out of range for {kind}")]
    OutOfRange { kind: ScoreKind, value: f64 },
    #[error("missing threshold for {0}")]
    MissingThreshold(ScoreKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Appearance,
    FrontendFunctionality,
    BackendFunctionality,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 3] =
        [ScoreKind::Appearance, ScoreKind::FrontendFunctionality, ScoreKind::BackendFunctionality];

    /// Inclusive value range a record of this kind may take.
    pub fn range(self) -> (f64, f64) {
        match self {
            ScoreKind::Appearance | ScoreKind::FrontendFunctionality => (1.0, 5.0),
            ScoreKind::BackendFunctionality => (-1.0, 1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Appearance => "appearance",
            ScoreKind::FrontendFunctionality => "frontend_functionality",
            ScoreKind::BackendFunctionality => "backend_functionality",
        }
    }
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One quality signal derived from a debugging-tool call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub kind: ScoreKind,
    pub value: f64,
    /// Ordinal of the originating tool call within its trajectory.
    pub step_index: usize,
}

impl ScoreRecord {
    pub fn new(kind: ScoreKind, value: f64, step_index: usize) -> Result<Self, MetricError> {
        let (lo, hi) = kind.range();
        let valid = value.is_finite()
            && value >= lo
            && value <= hi
            && (kind != ScoreKind::BackendFunctionality || value.fract() == 0.0);
        if !valid {
            return Err(MetricError::OutOfRange { kind, value });
        }
        Ok(Self { kind, value, step_index })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub gamma: f64,
    pub thresholds: BTreeMap<ScoreKind, f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            thresholds: BTreeMap::from([
                (ScoreKind::Appearance, 3.0),
                (ScoreKind::FrontendFunctionality, 3.0),
                (ScoreKind::BackendFunctionality, 0.0),
            ]),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        check_gamma(self.gamma)?;
        for kind in ScoreKind::ALL {
            if !self.thresholds.contains_key(&kind) {
                return Err(MetricError::MissingThreshold(kind));
            }
        }
        Ok(())
    }

    pub fn threshold(&self, kind: ScoreKind) -> Result<f64, MetricError> {
        self.thresholds.get(&kind).copied().ok_or(MetricError::MissingThreshold(kind))
    }
}

fn check_gamma(gamma: f64) -> Result<(), MetricError> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidGamma(gamma))
    }
}

/// Frontend accuracy in percent: PARTIAL verdicts count half.
pub fn accuracy_frontend(n_yes: u64, n_partial: u64, n_total: u64) -> Result<f64, MetricError> {
    if n_total == 0 {
        return Err(MetricError::ZeroTotal);
    }
    let counted = n_yes + n_partial;
    if counted > n_total {
        return Err(MetricError::CountsExceedTotal { counted, total: n_total });
    }
    Ok((n_yes as f64 + 0.5 * n_partial as f64) / n_total as f64 * 100.0)
}

/// YES/NO accuracy in percent.
pub fn accuracy_binary(n_yes: u64, n_total: u64) -> Result<f64, MetricError> {
    if n_total == 0 {
        return Err(MetricError::ZeroTotal);
    }
    if n_yes > n_total {
        return Err(MetricError::CountsExceedTotal { counted: n_yes, total: n_total });
    }
    Ok(n_yes as f64 / n_total as f64 * 100.0)
}

/// Decayed, threshold-shifted sum over scores in step order; the last score
/// carries weight 1 and each earlier one is discounted by another factor of
/// `gamma`.
pub fn aggregate_score(scores: &[f64], gamma: f64, s_thresh: f64) -> Result<f64, MetricError> {
    check_gamma(gamma)?;
    Ok(scores.iter().fold(0.0, |acc, &s| acc * gamma + (s - s_thresh)))
}

/// Maps one backend debugging exchange to a score in {-1, 0, 1}.
///
/// A body that is empty after trimming whitespace counts as empty; a JSON
/// `null` payload does not.
pub fn backend_call_score(status: u16, body: &str) -> i8 {
    match status {
        200 if body.trim().is_empty() => 0,
        200 => 1,
        _ => -1,
    }
}

/// Per-kind aggregates over a trajectory's records, ordered by step index.
/// Kinds without records aggregate to zero.
pub fn score_aggregates(records: &[ScoreRecord], cfg: &FilterConfig) -> Result<BTreeMap<ScoreKind, f64>, MetricError> {
    let mut out = BTreeMap::new();
    for kind in ScoreKind::ALL {
        let mut of_kind: Vec<&ScoreRecord> = records.iter().filter(|r| r.kind == kind).collect();
        of_kind.sort_by_key(|r| r.step_index);
        let values: Vec<f64> = of_kind.iter().map(|r| r.value).collect();
        out.insert(kind, aggregate_score(&values, cfg.gamma, cfg.threshold(kind)?)?);
    }
    Ok(out)
}

/// A trajectory is kept only when every score kind aggregates strictly above
/// zero. An invalid config keeps nothing.
pub fn keep_trajectory(records: &[ScoreRecord], cfg: &FilterConfig) -> bool {
    match score_aggregates(records, cfg) {
        Ok(aggregates) => aggregates.values().all(|&v| v > 0.0),
        Err(_) => false,
    }
}

/// Rounds a percentage to one decimal place for reporting.
pub fn round1(value: f64) -> f64 {
    (value * 10.0).round() / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(kind: ScoreKind, value: f64, step: usize) -> ScoreRecord {
        ScoreRecord::new(kind, value, step).unwrap()
    }

    #[test]
    fn frontend_accuracy_examples() {
        assert_eq!(accuracy_frontend(0, 0, 10).unwrap(), 0.0);
        assert_eq!(accuracy_frontend(4, 0, 4).unwrap(), 100.0);
        assert_eq!(accuracy_frontend(2, 1, 4).unwrap(), 62.5);
        assert_eq!(accuracy_frontend(0, 0, 0), Err(MetricError::ZeroTotal));
        assert!(matches!(accuracy_frontend(3, 2, 4), Err(MetricError::CountsExceedTotal { .. })));
    }

    #[test]
    fn binary_accuracy_examples() {
        assert_eq!(accuracy_binary(0, 7).unwrap(), 0.0);
        assert_eq!(accuracy_binary(7, 7).unwrap(), 100.0);
        assert_eq!(accuracy_binary(3, 8).unwrap(), 37.5);
        assert_eq!(accuracy_binary(1, 0), Err(MetricError::ZeroTotal));
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_score(&[], 0.9, 3.0).unwrap(), 0.0);
        assert_eq!(aggregate_score(&[3.0], 0.9, 3.0).unwrap(), 0.0);
        assert!((aggregate_score(&[4.0, 5.0], 0.9, 3.0).unwrap() - 2.9).abs() < 1e-12);
        assert_eq!(aggregate_score(&[1.0], 0.0, 0.0), Err(MetricError::InvalidGamma(0.0)));
        assert_eq!(aggregate_score(&[1.0], 1.5, 0.0), Err(MetricError::InvalidGamma(1.5)));
    }

    #[test]
    fn backend_score_mapping() {
        assert_eq!(backend_call_score(200, r#"{"ok":true}"#), 1);
        assert_eq!(backend_call_score(200, ""), 0);
        assert_eq!(backend_call_score(200, " \n\t"), 0);
        assert_eq!(backend_call_score(200, "null"), 1);
        assert_eq!(backend_call_score(404, "not found"), -1);
        assert_eq!(backend_call_score(201, "{}"), -1);
    }

    #[test]
    fn keep_trajectory_examples() {
        let cfg = FilterConfig::default();
        let good = [
            rec(ScoreKind::Appearance, 4.0, 1),
            rec(ScoreKind::FrontendFunctionality, 4.0, 1),
            rec(ScoreKind::BackendFunctionality, 1.0, 0),
        ];
        assert!(keep_trajectory(&good, &cfg));

        let at_threshold = [
            rec(ScoreKind::Appearance, 3.0, 1),
            rec(ScoreKind::FrontendFunctionality, 5.0, 1),
            rec(ScoreKind::BackendFunctionality, 1.0, 0),
        ];
        assert!(!keep_trajectory(&at_threshold, &cfg));

        let no_backend = [rec(ScoreKind::Appearance, 5.0, 1), rec(ScoreKind::FrontendFunctionality, 5.0, 1)];
        assert!(!keep_trajectory(&no_backend, &cfg));
    }

    #[test]
    fn aggregates_follow_step_order_not_insertion_order() {
        let cfg = FilterConfig::default();
        let records = [rec(ScoreKind::BackendFunctionality, 1.0, 5), rec(ScoreKind::BackendFunctionality, -1.0, 2)];
        let agg = score_aggregates(&records, &cfg).unwrap();
        assert!((agg[&ScoreKind::BackendFunctionality] - (-0.9 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn record_ranges_are_enforced() {
        assert!(ScoreRecord::new(ScoreKind::Appearance, 0.0, 0).is_err());
        assert!(ScoreRecord::new(ScoreKind::Appearance, 5.0, 0).is_ok());
        assert!(ScoreRecord::new(ScoreKind::BackendFunctionality, 0.5, 0).is_err());
        assert!(ScoreRecord::new(ScoreKind::BackendFunctionality, -1.0, 0).is_ok());
    }

    #[test]
    fn filter_config_requires_all_thresholds() {
        let mut cfg = FilterConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.thresholds.remove(&ScoreKind::Appearance);
        assert_eq!(cfg.validate(), Err(MetricError::MissingThreshold(ScoreKind::Appearance)));
        assert!(!keep_trajectory(&[], &cfg));
    }

    #[test]
    fn rounding_to_one_decimal() {
        assert_eq!(round1(62.5), 62.5);
        assert_eq!(round1(64.6666), 64.7);
    }
}
