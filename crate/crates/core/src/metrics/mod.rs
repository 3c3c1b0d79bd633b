//! Evaluation metrics.
//!
//! Sample-averaged P/R/F1 use these conventions for a prediction `P` and
//! truth `T`: precision is 1 when both are empty and 0 when only `P` is;
//! recall is 1 when `T` is empty; F1 is 0 when precision and recall are
//! both 0. Aggregate F1 is the mean of per-sample F1.
//!
//! Per-label values whose denominator is zero are `None`.

pub mod drift;
pub mod fairness;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decision::{PolicyProvenance, ThresholdPolicy};
use crate::hash::{hex_fingerprint, Fnv64};
use crate::scorer::ScoreVector;
use crate::tags::{IssueTag, TagSet, TAG_COUNT};

pub use drift::{drift_report, DriftReport, DEFAULT_DRIFT_TOLERANCE};
pub use fairness::{fairness_report, SubgroupReport};
pub use stats::{one_sample_t_test, unpaired_t_test, TTest};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} predictions vs {right} truths")]
    LengthMismatch { left: usize, right: usize },
    #[error("no samples")]
    Empty,
    #[error("zero sample variance")]
    ZeroVariance,
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("policy mismatch: reference {reference}, candidate {candidate}")]
    PolicyMismatch { reference: String, candidate: String },
    #[error("no demographic category has two populated subgroups")]
    NoSubgroups,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of one predicted set against one truth set.
pub fn set_prf(pred: TagSet, truth: TagSet) -> (f64, f64, f64) {
    let hit = pred.intersection(truth).len() as f64;
    let precision = match (pred.is_empty(), truth.is_empty()) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        _ => hit / pred.len() as f64,
    };
    let recall = if truth.is_empty() {
        1.0
    } else {
        hit / truth.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

fn check(preds: &[TagSet], truths: &[TagSet]) -> Result<(), MetricsError> {
    if preds.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn sample_averaged(preds: &[TagSet], truths: &[TagSet]) -> Result<SampleMetrics, MetricsError> {
    check(preds, truths)?;
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for (pred, truth) in preds.iter().zip(truths) {
        let (a, b, c) = set_prf(*pred, *truth);
        p += a;
        r += b;
        f += c;
    }
    let n = preds.len() as f64;
    Ok(SampleMetrics {
        precision: p / n,
        recall: r / n,
        f1: f / n,
    })
}

/// Mean fraction of the 19 binary tag decisions that are correct.
pub fn accuracy_19(preds: &[TagSet], truths: &[TagSet]) -> Result<f64, MetricsError> {
    check(preds, truths)?;
    let correct: usize = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| TAG_COUNT - p.difference(*t).union(t.difference(*p)).len())
        .sum();
    Ok(correct as f64 / (TAG_COUNT * preds.len()) as f64)
}

/// Fraction of samples predicted exactly.
pub fn exact_accuracy(preds: &[TagSet], truths: &[TagSet]) -> Result<f64, MetricsError> {
    check(preds, truths)?;
    let exact = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(exact as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelPrf {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Precision/recall/F1 of one tag from its TP/FP/FN counts over all samples.
pub fn per_label_prf(preds: &[TagSet], truths: &[TagSet], tag: IssueTag) -> Result<LabelPrf, MetricsError> {
    if preds.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, t) in preds.iter().zip(truths) {
        match (p.contains(tag), t.contains(tag)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(LabelPrf { precision, recall, f1 })
}

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. `None` without both classes.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum over positives of (negatives strictly below) + 0.5 (negatives tied).
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let pos = group.iter().filter(|&&k| labels[k]).count();
        let neg = group.len() - pos;
        wins += pos as f64 * neg_below as f64 + 0.5 * (pos * neg) as f64;
        neg_below += neg;
        i = j;
    }
    Ok(Some(wins / (n_pos as f64 * n_neg as f64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub tag: IssueTag,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auc_roc: Option<f64>,
    pub support: usize,
    pub predicted: usize,
}

/// One conversation's scores alongside its true tags.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItem {
    pub id: String,
    pub scores: ScoreVector,
    pub truth: TagSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: PolicyProvenance,
    pub thresholds: Vec<f64>,
    pub dataset_fingerprint: String,
    pub conversations: usize,
    pub sample: SampleMetrics,
    pub accuracy_19: f64,
    pub exact_accuracy: f64,
    pub labels: Vec<LabelMetrics>,
    pub true_tag_counts: BTreeMap<IssueTag, usize>,
    pub predicted_tag_counts: BTreeMap<IssueTag, usize>,
}

/// Fingerprint of the ids and truths, in order.
pub fn dataset_fingerprint(items: &[ScoredItem]) -> String {
    let mut h = Fnv64::new();
    for item in items {
        h.write(item.id.as_bytes())
            .write(&[0])
            .write_u64(u64::from(item.truth.bits()));
    }
    hex_fingerprint(h.finish())
}

pub fn evaluate(items: &[ScoredItem], policy: &ThresholdPolicy) -> Result<EvalReport, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty);
    }
    let preds: Vec<TagSet> = items.iter().map(|i| policy.apply(&i.scores)).collect();
    let truths: Vec<TagSet> = items.iter().map(|i| i.truth).collect();
    let mut labels = Vec::with_capacity(TAG_COUNT);
    let mut true_tag_counts = BTreeMap::new();
    let mut predicted_tag_counts = BTreeMap::new();
    for tag in IssueTag::ALL {
        let prf = per_label_prf(&preds, &truths, tag)?;
        let scores: Vec<f64> = items.iter().map(|i| i.scores.get(tag)).collect();
        let flags: Vec<bool> = truths.iter().map(|t| t.contains(tag)).collect();
        let support = flags.iter().filter(|f| **f).count();
        let predicted = preds.iter().filter(|p| p.contains(tag)).count();
        labels.push(LabelMetrics {
            tag,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            auc_roc: auc_roc(&scores, &flags)?,
            support,
            predicted,
        });
        true_tag_counts.insert(tag, support);
        predicted_tag_counts.insert(tag, predicted);
    }
    Ok(EvalReport {
        policy: policy.provenance.clone(),
        thresholds: policy.per_tag().to_vec(),
        dataset_fingerprint: dataset_fingerprint(items),
        conversations: items.len(),
        sample: sample_averaged(&preds, &truths)?,
        accuracy_19: accuracy_19(&preds, &truths)?,
        exact_accuracy: exact_accuracy(&preds, &truths)?,
        labels,
        true_tag_counts,
        predicted_tag_counts,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// Per-tag bar values for each report: one row per (block, tag).
pub fn per_tag_tsv(blocks: &[(&str, &EvalReport)]) -> String {
    let mut out = String::from("block\ttag\tprecision\trecall\tf1\tauc_roc\tsupport\tpredicted\n");
    for (name, report) in blocks {
        for l in &report.labels {
            let _ = writeln!(
                out,
                "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                l.tag,
                cell(l.precision),
                cell(l.recall),
                cell(l.f1),
                cell(l.auc_roc),
                l.support,
                l.predicted
            );
        }
    }
    out
}

/// Sample-level summary, one row per block.
pub fn summary_tsv(blocks: &[(&str, &EvalReport)]) -> String {
    let mut out = String::from("block\tprecision\trecall\tf1\taccuracy_19\texact_accuracy\tconversations\n");
    for (name, r) in blocks {
        let _ = writeln!(
            out,
            "{name}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
            r.sample.precision, r.sample.recall, r.sample.f1, r.accuracy_19, r.exact_accuracy, r.conversations
        );
    }
    out
}
