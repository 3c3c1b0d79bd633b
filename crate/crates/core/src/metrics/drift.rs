//! Silent-trial drift between a reference and a candidate evaluation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EvalReport, MetricsError};
use crate::tags::IssueTag;

pub const DEFAULT_DRIFT_TOLERANCE: f64 = 0.02;

/// Slack on the tolerance comparison, so a drop of exactly the tolerance
/// (up to rounding) does not flag.
const COMPARE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub reference: f64,
    pub candidate: f64,
    /// `candidate - reference`
    pub change: f64,
    pub abs: f64,
}

impl Delta {
    fn new(reference: f64, candidate: f64) -> Self {
        let change = candidate - reference;
        Delta {
            reference,
            candidate,
            change,
            abs: change.abs(),
        }
    }

    pub fn dropped_by_more_than(&self, tolerance: f64) -> bool {
        -self.change > tolerance + COMPARE_EPS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagFrequencyDelta {
    /// Share of conversations carrying the tag.
    pub true_share: Delta,
    pub predicted_share: Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub reference: EvalReport,
    pub candidate: EvalReport,
    pub tolerance: f64,
    pub precision: Delta,
    pub recall: Delta,
    pub f1: Delta,
    pub accuracy_19: Delta,
    pub exact_accuracy: Delta,
    pub tag_frequencies: BTreeMap<IssueTag, TagFrequencyDelta>,
    /// Any sample-averaged precision, recall or F1 dropped by more than `tolerance`.
    pub flag: bool,
}

pub fn drift_report(
    reference: &EvalReport,
    candidate: &EvalReport,
    tolerance: f64,
) -> Result<DriftReport, MetricsError> {
    if reference.policy != candidate.policy || reference.thresholds != candidate.thresholds {
        return Err(MetricsError::PolicyMismatch {
            reference: reference.policy.to_string(),
            candidate: candidate.policy.to_string(),
        });
    }
    let precision = Delta::new(reference.sample.precision, candidate.sample.precision);
    let recall = Delta::new(reference.sample.recall, candidate.sample.recall);
    let f1 = Delta::new(reference.sample.f1, candidate.sample.f1);
    let share =
        |counts: &BTreeMap<IssueTag, usize>, n: usize, tag| counts.get(&tag).copied().unwrap_or(0) as f64 / n as f64;
    let tag_frequencies = IssueTag::ALL
        .iter()
        .map(|&tag| {
            let d = TagFrequencyDelta {
                true_share: Delta::new(
                    share(&reference.true_tag_counts, reference.conversations, tag),
                    share(&candidate.true_tag_counts, candidate.conversations, tag),
                ),
                predicted_share: Delta::new(
                    share(&reference.predicted_tag_counts, reference.conversations, tag),
                    share(&candidate.predicted_tag_counts, candidate.conversations, tag),
                ),
            };
            (tag, d)
        })
        .collect();
    let flag = [precision, recall, f1]
        .iter()
        .any(|d| d.dropped_by_more_than(tolerance));
    Ok(DriftReport {
        reference: reference.clone(),
        candidate: candidate.clone(),
        tolerance,
        precision,
        recall,
        f1,
        accuracy_19: Delta::new(reference.accuracy_19, candidate.accuracy_19),
        exact_accuracy: Delta::new(reference.exact_accuracy, candidate.exact_accuracy),
        tag_frequencies,
        flag,
    })
}
