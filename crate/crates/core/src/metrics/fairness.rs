//! Subgroup performance across demographic categories.

use serde::{Deserialize, Serialize};

use super::stats::{one_sample_t_test, TTest};
use super::{accuracy_19, sample_averaged, set_prf, MetricsError, SampleMetrics};
use crate::corpus::demographics::{DemographicCategory, DemographicSurvey};
use crate::decision::PolicyProvenance;
use crate::tags::TagSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub value: String,
    pub count: usize,
    pub metrics: SampleMetrics,
    pub accuracy: f64,
    /// Per-conversation F1 in this subgroup against the overall F1.
    pub t_test: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: DemographicCategory,
    pub subgroups: Vec<SubgroupRow>,
    /// Sample standard deviation (n - 1) of the subgroup F1 values.
    pub f1_std: f64,
    /// Subgroup F1 values against the overall F1; `None` when they do not vary.
    pub t_test: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub policy: PolicyProvenance,
    pub overall: SampleMetrics,
    pub overall_accuracy: f64,
    pub categories: Vec<CategoryReport>,
    /// Categories left out for having fewer than two populated subgroups.
    pub skipped: Vec<DemographicCategory>,
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Subgroups appear in vocabulary order; empty subgroups are omitted.
pub fn fairness_report(
    preds: &[TagSet],
    truths: &[TagSet],
    demographics: &[Option<DemographicSurvey>],
    policy: PolicyProvenance,
) -> Result<SubgroupReport, MetricsError> {
    if demographics.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            left: preds.len(),
            right: demographics.len(),
        });
    }
    let overall = sample_averaged(preds, truths)?;
    let overall_accuracy = accuracy_19(preds, truths)?;
    let mut categories = Vec::new();
    let mut skipped = Vec::new();
    for category in DemographicCategory::ALL {
        let mut subgroups = Vec::new();
        for value in category.vocabulary() {
            let idx: Vec<usize> = (0..preds.len())
                .filter(|&i| demographics[i].as_ref().and_then(|d| d.get(category)) == Some(*value))
                .collect();
            if idx.is_empty() {
                continue;
            }
            let p: Vec<TagSet> = idx.iter().map(|&i| preds[i]).collect();
            let t: Vec<TagSet> = idx.iter().map(|&i| truths[i]).collect();
            let f1s: Vec<f64> = p.iter().zip(&t).map(|(a, b)| set_prf(*a, *b).2).collect();
            subgroups.push(SubgroupRow {
                value: value.to_string(),
                count: idx.len(),
                metrics: sample_averaged(&p, &t)?,
                accuracy: accuracy_19(&p, &t)?,
                t_test: one_sample_t_test(&f1s, overall.f1).ok(),
            });
        }
        if subgroups.len() < 2 {
            log::warn!("skipping {category}: {} populated subgroup(s)", subgroups.len());
            skipped.push(category);
            continue;
        }
        let f1s: Vec<f64> = subgroups.iter().map(|s| s.metrics.f1).collect();
        categories.push(CategoryReport {
            category,
            f1_std: std_dev(&f1s),
            t_test: one_sample_t_test(&f1s, overall.f1).ok(),
            subgroups,
        });
    }
    if categories.is_empty() {
        return Err(MetricsError::NoSubgroups);
    }
    Ok(SubgroupReport {
        policy,
        overall,
        overall_accuracy,
        categories,
        skipped,
    })
}
