//! Mean-fused ensemble of linear scorers, some trained on rare-tag
//! oversampled data.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::{featurize_corpus, train_on, LinearRecord, LinearScorer, TrainConfig};
use super::{logistic, Attributable, ScoreVector, Scorer, ScorerError};
use crate::corpus::Conversation;
use crate::hash::{hex_fingerprint, Fnv64};
use crate::tags::{IssueTag, TagSet, TAG_COUNT};

const MODEL_FORMAT: &str = "tagtriage-ensemble";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub members: usize,
    /// The first this many members see oversampled data.
    pub oversampled_members: usize,
    /// Expected multiplicity of each conversation carrying a rare tag.
    pub oversample_factor: f64,
    pub train: TrainConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            members: 3,
            oversampled_members: 2,
            oversample_factor: 3.0,
            train: TrainConfig::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), ScorerError> {
        self.train.validate()?;
        if self.members == 0 {
            return Err(ScorerError::InvalidConfig("ensemble needs at least one member".into()));
        }
        if self.oversampled_members > self.members {
            return Err(ScorerError::InvalidConfig(
                "more oversampled members than members".into(),
            ));
        }
        if !(self.oversample_factor >= 1.0 && self.oversample_factor.is_finite()) {
            return Err(ScorerError::InvalidConfig("oversample_factor must be >= 1".into()));
        }
        Ok(())
    }
}

/// The quarter of tags (rounded up) with the fewest positives, minus any
/// tag tied with the most frequent tag left out. Ties in the ranking break
/// by canonical order.
pub fn rare_tags(corpus: &[Conversation]) -> TagSet {
    let mut counts = [0usize; TAG_COUNT];
    for c in corpus {
        for t in c.true_tags.iter() {
            counts[t.index()] += 1;
        }
    }
    let mut ranked = IssueTag::ALL.to_vec();
    ranked.sort_by_key(|t| counts[t.index()]);
    let k = TAG_COUNT.div_ceil(4);
    let boundary = counts[ranked[k].index()];
    ranked[..k]
        .iter()
        .copied()
        .filter(|t| counts[t.index()] < boundary)
        .collect()
}

/// Index multiset over `corpus`: conversations carrying a tag in `rare`
/// appear `floor(factor)` times plus one more with probability
/// `fract(factor)`; the rest appear once.
pub fn oversample_indices(corpus: &[Conversation], rare: TagSet, factor: f64, seed: u64) -> Vec<usize> {
    assert!(factor >= 1.0 && factor.is_finite(), "oversample factor must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let whole = factor.floor() as usize;
    let frac = factor - factor.floor();
    let mut out = Vec::with_capacity(corpus.len());
    for (i, c) in corpus.iter().enumerate() {
        let copies = if c.true_tags.is_disjoint(rare) {
            1
        } else {
            whole + usize::from(frac > 0.0 && rng.random::<f64>() < frac)
        };
        out.extend(std::iter::repeat_n(i, copies));
    }
    out
}

/// Materialized oversampled corpus.
pub fn oversample(corpus: &[Conversation], rare: TagSet, factor: f64, seed: u64) -> Vec<Conversation> {
    oversample_indices(corpus, rare, factor, seed)
        .into_iter()
        .map(|i| corpus[i].clone())
        .collect()
}

/// Elementwise mean of member scores.
pub fn fuse_mean(members: &[ScoreVector]) -> ScoreVector {
    assert!(!members.is_empty(), "cannot fuse zero score vectors");
    let mut acc = [0.0; TAG_COUNT];
    for m in members {
        for (a, v) in acc.iter_mut().zip(m.values()) {
            *a += v;
        }
    }
    let n = members.len() as f64;
    // clamp guards the last ulp of the division
    ScoreVector::new(acc.map(|a| (a / n).clamp(0.0, 1.0))).expect("clamped")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleScorer {
    pub members: Vec<LinearScorer>,
    pub rare: TagSet,
}

/// Train `cfg.members` linear scorers in parallel. Member `i` uses seed
/// `cfg.train.seed + i` for shuffling and oversampling.
pub fn train_ensemble(train: &[Conversation], cfg: &EnsembleConfig) -> Result<EnsembleScorer, ScorerError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ScorerError::EmptySplit);
    }
    let examples = featurize_corpus(train, cfg.train.dim, cfg.train.token_cap);
    let rare = rare_tags(train);
    let members = (0..cfg.members)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.train.seed.wrapping_add(i as u64);
            let pool = if i < cfg.oversampled_members {
                oversample_indices(train, rare, cfg.oversample_factor, seed)
            } else {
                (0..train.len()).collect()
            };
            let member_cfg = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            train_on(&examples, &pool, &member_cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EnsembleScorer { members, rare })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    rare: TagSet,
    members: Vec<LinearRecord>,
}

impl EnsembleScorer {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            rare: self.rare,
            members: self.members.iter().map(LinearScorer::to_record).collect(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScorerError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ScorerError::Model(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ScorerError::Model(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        if file.members.is_empty() {
            return Err(ScorerError::Model("model has no members".into()));
        }
        let members = file
            .members
            .into_iter()
            .map(LinearScorer::from_record)
            .collect::<Result<Vec<_>, _>>()?;
        let (dim, cap) = (members[0].dim, members[0].token_cap);
        if members.iter().any(|m| m.dim != dim || m.token_cap != cap) {
            return Err(ScorerError::Model("members disagree on dim or token cap".into()));
        }
        Ok(EnsembleScorer {
            members,
            rare: file.rare,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ScorerError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ScorerError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn member_scores(&self, conv: &Conversation) -> Vec<ScoreVector> {
        let x = self.members[0].features(conv);
        self.members
            .iter()
            .map(|m| ScoreVector::new(m.logits(&x).map(logistic)).expect("logistic output lies in [0, 1]"))
            .collect()
    }
}

impl Scorer for EnsembleScorer {
    fn score(&self, conv: &Conversation) -> ScoreVector {
        fuse_mean(&self.member_scores(conv))
    }

    fn fingerprint(&self) -> String {
        let mut h = Fnv64::new();
        h.write_u64(self.members.len() as u64);
        for m in &self.members {
            m.feed_fingerprint(&mut h);
        }
        hex_fingerprint(h.finish())
    }

    fn attributable(&self) -> Option<&dyn Attributable> {
        Some(self)
    }
}

/// Attributes the fused probability.
impl Attributable for EnsembleScorer {
    fn dim(&self) -> usize {
        self.members[0].dim
    }

    fn output_and_gradient(&self, indices: &[u32], values: &[f64], tag: IssueTag) -> (f64, Vec<f64>) {
        let n = self.members.len() as f64;
        let mut out = 0.0;
        let mut grad = vec![0.0; indices.len()];
        for m in &self.members {
            let p = logistic(m.sparse_logit(indices, values, tag));
            out += p / n;
            let scale = p * (1.0 - p) / n;
            let row = m.row(tag);
            for (g, &i) in grad.iter_mut().zip(indices) {
                *g += scale * row[i as usize];
            }
        }
        (out, grad)
    }

    fn token_cap(&self) -> usize {
        self.members[0].token_cap
    }
}
