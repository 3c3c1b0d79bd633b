//! Multi-label confidence scoring.
//!
//! [`Scorer`] is the pluggable contract. The built-in implementation is a
//! one-vs-rest logistic model over hashed n-grams ([`LinearScorer`]),
//! combined into an [`EnsembleScorer`]. Scores produced elsewhere enter
//! through [`import_scores`].

pub mod ensemble;
pub mod features;
pub mod linear;
pub mod mlp;

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::corpus::{truncate_to_cap, Conversation};
use crate::tags::{IssueTag, TagSet, TAG_COUNT};
use crate::triage::priority_prefix;

pub use ensemble::{
    fuse_mean, oversample, oversample_indices, rare_tags, train_ensemble, EnsembleConfig, EnsembleScorer,
};
pub use features::{featurize, FeatureVector};
pub use linear::{train_linear, ClassWeights, LinearScorer, TrainConfig};
pub use mlp::HiddenLayerScorer;

#[derive(Debug, thiserror::Error)]
pub enum ScorerError {
    #[error("training split is empty")]
    EmptySplit,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("record {record}: {message}")]
    Import { record: usize, message: String },
    #[error("invalid model file: {0}")]
    Model(String),
    #[error("score {value} for {tag} outside [0, 1]")]
    OutOfRange { tag: IssueTag, value: f64 },
}

/// One confidence per tag, canonical order, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ScoreVector([f64; TAG_COUNT]);

impl ScoreVector {
    pub fn new(values: [f64; TAG_COUNT]) -> Result<Self, ScorerError> {
        for (tag, value) in IssueTag::ALL.iter().zip(values) {
            if !(0.0..=1.0).contains(&value) {
                return Err(ScorerError::OutOfRange { tag: *tag, value });
            }
        }
        Ok(ScoreVector(values))
    }

    /// Uniform vector; `value` is clamped into `[0, 1]`.
    pub fn splat(value: f64) -> Self {
        ScoreVector([value.clamp(0.0, 1.0); TAG_COUNT])
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, ScorerError> {
        let arr: [f64; TAG_COUNT] = values.try_into().map_err(|_| ScorerError::Import {
            record: 0,
            message: format!("expected {TAG_COUNT} scores, got {}", values.len()),
        })?;
        Self::new(arr)
    }

    pub fn get(&self, tag: IssueTag) -> f64 {
        self.0[tag.index()]
    }

    pub fn values(&self) -> &[f64; TAG_COUNT] {
        &self.0
    }

    /// Tags at or above `cutoff`.
    pub fn above(&self, cutoff: f64) -> TagSet {
        IssueTag::ALL
            .iter()
            .copied()
            .filter(|t| self.get(*t) >= cutoff)
            .collect()
    }
}

impl<'de> Deserialize<'de> for ScoreVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        ScoreVector::from_slice(&values).map_err(serde::de::Error::custom)
    }
}

/// Anything that turns a conversation into 19 confidences.
pub trait Scorer: Send + Sync {
    fn score(&self, conv: &Conversation) -> ScoreVector;

    /// Stable identifier of the model parameters.
    fn fingerprint(&self) -> String;

    /// Gradient access for attribution; `None` for opaque scorers.
    fn attributable(&self) -> Option<&dyn Attributable> {
        None
    }
}

/// A scorer differentiable in its hashed feature space.
pub trait Attributable: Send + Sync {
    fn dim(&self) -> usize;

    /// Value of the attributed output for `tag` at a sparse input, and its
    /// partial derivatives at the same indices.
    fn output_and_gradient(&self, indices: &[u32], values: &[f64], tag: IssueTag) -> (f64, Vec<f64>);

    /// Token cap applied before featurization.
    fn token_cap(&self) -> usize {
        crate::corpus::DEFAULT_TOKEN_CAP
    }
}

/// Model input text: the conversation capped at `cap` tokens, with the
/// priority sentence in front.
pub fn model_input(conv: &Conversation, cap: usize) -> String {
    priority_prefix(&truncate_to_cap(conv, cap))
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Deserialize)]
struct ScoreRecord {
    id: String,
    scores: Vec<f64>,
}

/// Read `{"id": .., "scores": [19 reals]}` lines. Record positions in
/// errors are 1-based line numbers. A repeated id replaces the earlier one.
pub fn import_scores<R: BufRead>(reader: R) -> Result<BTreeMap<String, ScoreVector>, ScorerError> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let record = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(&line).map_err(|e| ScorerError::Import {
            record,
            message: e.to_string(),
        })?;
        if rec.scores.len() != TAG_COUNT {
            return Err(ScorerError::Import {
                record,
                message: format!("expected {TAG_COUNT} scores, got {}", rec.scores.len()),
            });
        }
        let scores = ScoreVector::from_slice(&rec.scores).map_err(|e| ScorerError::Import {
            record,
            message: e.to_string(),
        })?;
        if out.insert(rec.id.clone(), scores).is_some() {
            log::warn!("record {record}: duplicate id {:?}, keeping the later scores", rec.id);
        }
    }
    Ok(out)
}

/// Write scores in the import format.
pub fn export_scores<'a, W, I>(mut writer: W, scores: I) -> std::io::Result<()>
where
    W: std::io::Write,
    I: IntoIterator<Item = (&'a str, &'a ScoreVector)>,
{
    for (id, s) in scores {
        let line = serde_json::json!({ "id": id, "scores": s.values() });
        writeln!(writer, "{line}")?;
    }
    Ok(())
}
