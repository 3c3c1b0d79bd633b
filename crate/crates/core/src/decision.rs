//! Threshold policies: turning scores into predicted tag sets.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize};

use crate::hash::{hex_fingerprint, Fnv64};
use crate::metrics::{sample_averaged, MetricsError, SampleMetrics};
use crate::scorer::ScoreVector;
use crate::tags::{IssueTag, TagSet, TAG_COUNT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecisionError {
    #[error("threshold {value} for {tag} must lie strictly inside (0, 1)")]
    OutOfRange { tag: IssueTag, value: f64 },
    #[error("global threshold {0} must lie strictly inside (0, 1)")]
    GlobalOutOfRange(f64),
    #[error("no scored samples")]
    Empty,
    #[error("invalid sweep grid: lo {lo}, hi {hi}, step {step}")]
    BadGrid { lo: f64, hi: f64, step: f64 },
    #[error("every reference set is empty")]
    NoReferences,
    #[error("invalid policy file: {0}")]
    PolicyFile(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Where a policy came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyProvenance {
    Global {
        tau: f64,
    },
    /// The fixed refined per-class values.
    Updated,
    Calibrated {
        run_id: String,
    },
}

impl fmt::Display for PolicyProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyProvenance::Global { tau } => write!(f, "global({tau})"),
            PolicyProvenance::Updated => f.write_str("updated"),
            PolicyProvenance::Calibrated { run_id } => write!(f, "calibrated({run_id})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPolicy {
    per_tag: [f64; TAG_COUNT],
    pub provenance: PolicyProvenance,
}

impl ThresholdPolicy {
    pub fn new(per_tag: [f64; TAG_COUNT], provenance: PolicyProvenance) -> Result<Self, DecisionError> {
        for (tag, &value) in IssueTag::ALL.iter().zip(&per_tag) {
            if !(value > 0.0 && value < 1.0) {
                return Err(DecisionError::OutOfRange { tag: *tag, value });
            }
        }
        Ok(ThresholdPolicy { per_tag, provenance })
    }

    pub fn global(tau: f64) -> Result<Self, DecisionError> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(DecisionError::GlobalOutOfRange(tau));
        }
        Ok(ThresholdPolicy {
            per_tag: [tau; TAG_COUNT],
            provenance: PolicyProvenance::Global { tau },
        })
    }

    pub fn get(&self, tag: IssueTag) -> f64 {
        self.per_tag[tag.index()]
    }

    pub fn per_tag(&self) -> &[f64; TAG_COUNT] {
        &self.per_tag
    }

    /// Tags whose score reaches the threshold (inclusive).
    pub fn apply(&self, scores: &ScoreVector) -> TagSet {
        IssueTag::ALL
            .iter()
            .copied()
            .filter(|t| scores.get(*t) >= self.get(*t))
            .collect()
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Fnv64::new();
        for v in &self.per_tag {
            h.write_f64(*v);
        }
        hex_fingerprint(h.finish())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DecisionError> {
        serde_json::from_str(text).map_err(|e| DecisionError::PolicyFile(e.to_string()))
    }
}

/// Thresholds keyed by display name, written in canonical tag order.
struct Thresholds<'a>(&'a [f64; TAG_COUNT]);

impl Serialize for Thresholds<'_> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(TAG_COUNT))?;
        for tag in IssueTag::ALL {
            map.serialize_entry(tag.display_name(), &self.0[tag.index()])?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct PolicyOut<'a> {
    provenance: &'a PolicyProvenance,
    thresholds: Thresholds<'a>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyIn {
    provenance: PolicyProvenance,
    thresholds: BTreeMap<String, f64>,
}

impl Serialize for ThresholdPolicy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PolicyOut {
            provenance: &self.provenance,
            thresholds: Thresholds(&self.per_tag),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ThresholdPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = PolicyIn::deserialize(deserializer)?;
        let mut per_tag = [f64::NAN; TAG_COUNT];
        for (name, value) in raw.thresholds {
            let tag =
                IssueTag::from_display_name(&name).ok_or_else(|| D::Error::custom(format!("unknown tag {name:?}")))?;
            per_tag[tag.index()] = value;
        }
        if let Some(tag) = IssueTag::ALL.iter().find(|t| per_tag[t.index()].is_nan()) {
            return Err(D::Error::custom(format!("missing threshold for {tag}")));
        }
        ThresholdPolicy::new(per_tag, raw.provenance).map_err(D::Error::custom)
    }
}

pub fn apply_thresholds(scores: &ScoreVector, policy: &ThresholdPolicy) -> TagSet {
    policy.apply(scores)
}

/// A scored conversation's predicted tags under a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub conversation_id: String,
    pub tags: TagSet,
    pub scores: ScoreVector,
    pub policy: PolicyProvenance,
}

impl PredictionSet {
    pub fn new(conversation_id: impl Into<String>, scores: ScoreVector, policy: &ThresholdPolicy) -> Self {
        PredictionSet {
            conversation_id: conversation_id.into(),
            tags: policy.apply(&scores),
            scores,
            policy: policy.provenance.clone(),
        }
    }
}

/// 0.4 for the three most frequent tags, 0.3 for the next two, 0.2 elsewhere.
pub fn updated_threshold_default() -> ThresholdPolicy {
    let mut per_tag = [0.2; TAG_COUNT];
    for tag in [IssueTag::AnxietyStress, IssueTag::Depressed, IssueTag::Relationship] {
        per_tag[tag.index()] = 0.4;
    }
    for tag in [IssueTag::Suicide, IssueTag::Isolated] {
        per_tag[tag.index()] = 0.3;
    }
    ThresholdPolicy {
        per_tag,
        provenance: PolicyProvenance::Updated,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub metrics: SampleMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub best: f64,
    pub table: Vec<SweepRow>,
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Inclusive grid `lo, lo + step, ..., hi`, each point rounded to 1e-9.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, DecisionError> {
    if !(lo > 0.0 && hi < 1.0 && lo < hi && step > 0.0) {
        return Err(DecisionError::BadGrid { lo, hi, step });
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| round9(lo + k as f64 * step)).collect())
}

/// Global threshold maximizing sample-averaged F1; ties go to the lower one.
pub fn sweep_global(scored: &[(ScoreVector, TagSet)], lo: f64, hi: f64, step: f64) -> Result<Sweep, DecisionError> {
    if scored.is_empty() {
        return Err(DecisionError::Empty);
    }
    let truths: Vec<TagSet> = scored.iter().map(|(_, t)| *t).collect();
    let mut table = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for tau in threshold_grid(lo, hi, step)? {
        let policy = ThresholdPolicy::global(tau)?;
        let preds: Vec<TagSet> = scored.iter().map(|(s, _)| policy.apply(s)).collect();
        let metrics = sample_averaged(&preds, &truths)?;
        if best.is_none_or(|(_, f1)| metrics.f1 > f1) {
            best = Some((tau, metrics.f1));
        }
        table.push(SweepRow { tau, metrics });
    }
    Ok(Sweep {
        best: best.expect("grid is non-empty").0,
        table,
    })
}

pub const REFINE_LOWER: f64 = 0.2;
pub const REFINE_UPPER: f64 = 0.4;

/// Tags ordered by how often `base` predicts them, most frequent first;
/// ties keep canonical order.
pub fn predicted_frequency_ranking(scores: &[ScoreVector], base: &ThresholdPolicy) -> Vec<IssueTag> {
    let mut counts = [0usize; TAG_COUNT];
    for s in scores {
        for t in base.apply(s).iter() {
            counts[t.index()] += 1;
        }
    }
    let mut ranked = IssueTag::ALL.to_vec();
    ranked.sort_by_key(|t| std::cmp::Reverse(counts[t.index()]));
    ranked
}

/// Raise the three most predicted tags by 0.15 and the next two by 0.05,
/// lower the rest by 0.05, then clamp into `[0.2, 0.4]`.
pub fn refine_per_class(
    scored_reference: &[(ScoreVector, TagSet)],
    base: &ThresholdPolicy,
) -> Result<ThresholdPolicy, DecisionError> {
    if scored_reference.iter().all(|(_, r)| r.is_empty()) {
        return Err(DecisionError::NoReferences);
    }
    let scores: Vec<ScoreVector> = scored_reference.iter().map(|(s, _)| *s).collect();
    let ranking = predicted_frequency_ranking(&scores, base);
    let mut per_tag = *base.per_tag();
    for (rank, tag) in ranking.iter().enumerate() {
        let delta = match rank {
            0..=2 => 0.15,
            3..=4 => 0.05,
            _ => -0.05,
        };
        let v = &mut per_tag[tag.index()];
        *v = round9(*v + delta).clamp(REFINE_LOWER, REFINE_UPPER);
    }
    let mut h = Fnv64::new();
    for v in base.per_tag() {
        h.write_f64(*v);
    }
    for (s, r) in scored_reference {
        for v in s.values() {
            h.write_f64(*v);
        }
        h.write_u64(u64::from(r.bits()));
    }
    ThresholdPolicy::new(
        per_tag,
        PolicyProvenance::Calibrated {
            run_id: format!("refine-{}", hex_fingerprint(h.finish())),
        },
    )
}
