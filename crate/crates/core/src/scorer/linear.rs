//! One-vs-rest logistic regression over hashed features, trained by SGD.

use std::collections::BTreeMap;

use base64::Engine;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{featurize, is_valid_dim, FeatureVector, MIN_DIM};
use super::{logistic, model_input, Attributable, ScoreVector, Scorer, ScorerError};
use crate::corpus::{Conversation, DEFAULT_TOKEN_CAP};
use crate::hash::{hex_fingerprint, Fnv64};
use crate::tags::{IssueTag, TagSet, TAG_COUNT};

/// How positive and negative examples of each tag are weighted in the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassWeights {
    Uniform,
    /// `n / (2 n_pos)` for positives, `n / (2 n_neg)` for negatives.
    #[default]
    Balanced,
    /// Explicit positive weight per tag; negatives weigh 1. Missing tags weigh 1.
    PerTag {
        positive: BTreeMap<IssueTag, f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub token_cap: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Per-epoch decay: epoch `e` uses `learning_rate / (1 + decay * e)`.
    pub decay: f64,
    pub class_weights: ClassWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 1 << 15,
            token_cap: DEFAULT_TOKEN_CAP,
            epochs: 10,
            learning_rate: 5.0,
            decay: 0.5,
            class_weights: ClassWeights::Balanced,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ScorerError> {
        if !is_valid_dim(self.dim) {
            return Err(ScorerError::InvalidConfig(format!(
                "dim {} must be a power of two >= {MIN_DIM}",
                self.dim
            )));
        }
        if self.epochs == 0 {
            return Err(ScorerError::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ScorerError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(ScorerError::InvalidConfig("decay must be non-negative".into()));
        }
        if let ClassWeights::PerTag { positive } = &self.class_weights {
            if positive.values().any(|w| !(*w > 0.0 && w.is_finite())) {
                return Err(ScorerError::InvalidConfig("class weights must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Weighted binary cross-entropy on a logit and its derivative in the logit.
pub fn bce_loss_and_gradient(z: f64, positive: bool, w_pos: f64, w_neg: f64) -> (f64, f64) {
    // log(1 + e^z) computed without overflow
    let softplus = |x: f64| {
        if x > 0.0 {
            x + (-x).exp().ln_1p()
        } else {
            x.exp().ln_1p()
        }
    };
    let p = logistic(z);
    if positive {
        (w_pos * softplus(-z), w_pos * (p - 1.0))
    } else {
        (w_neg * softplus(z), w_neg * p)
    }
}

/// A featurized training example.
#[derive(Debug, Clone)]
pub(crate) struct Example {
    pub x: FeatureVector,
    pub y: TagSet,
}

pub(crate) fn featurize_corpus(corpus: &[Conversation], dim: usize, cap: usize) -> Vec<Example> {
    corpus
        .par_iter()
        .map(|c| Example {
            x: featurize(&model_input(c, cap), dim),
            y: c.true_tags,
        })
        .collect()
}

fn resolve_weights(examples: &[Example], pool: &[usize], cw: &ClassWeights) -> [(f64, f64); TAG_COUNT] {
    let mut out = [(1.0, 1.0); TAG_COUNT];
    match cw {
        ClassWeights::Uniform => {}
        ClassWeights::Balanced => {
            let n = pool.len() as f64;
            for tag in IssueTag::ALL {
                let pos = pool.iter().filter(|&&i| examples[i].y.contains(tag)).count() as f64;
                let neg = n - pos;
                let w_pos = if pos > 0.0 { n / (2.0 * pos) } else { 1.0 };
                let w_neg = if neg > 0.0 { n / (2.0 * neg) } else { 1.0 };
                out[tag.index()] = (w_pos, w_neg);
            }
        }
        ClassWeights::PerTag { positive } => {
            for (tag, w) in positive {
                out[tag.index()].0 = *w;
            }
        }
    }
    out
}

/// SGD over `pool`, a multiset of indices into `examples`.
pub(crate) fn train_on(examples: &[Example], pool: &[usize], cfg: &TrainConfig) -> Result<LinearScorer, ScorerError> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(ScorerError::EmptySplit);
    }
    let dim = cfg.dim;
    for tag in IssueTag::ALL {
        if !pool.iter().any(|&i| examples[i].y.contains(tag)) {
            log::warn!("no training example carries {tag}; its row only learns the prior");
        }
    }
    let class_w = resolve_weights(examples, pool, &cfg.class_weights);
    let mut weights = vec![0.0; TAG_COUNT * dim];
    let mut bias = [0.0; TAG_COUNT];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = pool.to_vec();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.learning_rate / (1.0 + cfg.decay * epoch as f64);
        let mut total = 0.0;
        for &i in &order {
            let ex = &examples[i];
            for tag in IssueTag::ALL {
                let t = tag.index();
                let row = &mut weights[t * dim..(t + 1) * dim];
                let z = ex.x.dot(row) + bias[t];
                let (w_pos, w_neg) = class_w[t];
                let (loss, g) = bce_loss_and_gradient(z, ex.y.contains(tag), w_pos, w_neg);
                total += loss;
                let step = lr * g;
                for (j, v) in ex.x.iter() {
                    row[j] -= step * v;
                }
                bias[t] -= step;
            }
        }
        loss_history.push(total / (order.len() * TAG_COUNT) as f64);
    }
    Ok(LinearScorer {
        dim,
        token_cap: cfg.token_cap,
        weights,
        bias,
        loss_history,
        training: Some(cfg.clone()),
    })
}

/// Train a single linear scorer on `corpus`.
pub fn train_linear(corpus: &[Conversation], cfg: &TrainConfig) -> Result<LinearScorer, ScorerError> {
    cfg.validate()?;
    let examples = featurize_corpus(corpus, cfg.dim, cfg.token_cap);
    let pool: Vec<usize> = (0..examples.len()).collect();
    train_on(&examples, &pool, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    pub dim: usize,
    pub token_cap: usize,
    /// `TAG_COUNT x dim`, row-major by tag.
    pub weights: Vec<f64>,
    pub bias: [f64; TAG_COUNT],
    /// Mean weighted loss per epoch.
    pub loss_history: Vec<f64>,
    /// Settings that produced the weights; `None` when built by hand.
    pub training: Option<TrainConfig>,
}

impl LinearScorer {
    /// All-zero weights and biases: every score is 0.5.
    pub fn zeros(dim: usize, token_cap: usize) -> Self {
        assert!(is_valid_dim(dim), "invalid dim {dim}");
        LinearScorer {
            dim,
            token_cap,
            weights: vec![0.0; TAG_COUNT * dim],
            bias: [0.0; TAG_COUNT],
            loss_history: Vec::new(),
            training: None,
        }
    }

    pub fn row(&self, tag: IssueTag) -> &[f64] {
        let t = tag.index();
        &self.weights[t * self.dim..(t + 1) * self.dim]
    }

    pub fn logits(&self, x: &FeatureVector) -> [f64; TAG_COUNT] {
        let mut z = self.bias;
        for tag in IssueTag::ALL {
            z[tag.index()] += x.dot(self.row(tag));
        }
        z
    }

    pub fn features(&self, conv: &Conversation) -> FeatureVector {
        featurize(&model_input(conv, self.token_cap), self.dim)
    }

    pub(crate) fn sparse_logit(&self, indices: &[u32], values: &[f64], tag: IssueTag) -> f64 {
        let row = self.row(tag);
        self.bias[tag.index()]
            + indices
                .iter()
                .zip(values)
                .map(|(&i, v)| row[i as usize] * v)
                .sum::<f64>()
    }

    pub(crate) fn feed_fingerprint(&self, h: &mut Fnv64) {
        h.write_u64(self.dim as u64).write_u64(self.token_cap as u64);
        for w in self.bias.iter().chain(&self.weights) {
            h.write_f64(*w);
        }
    }

    pub(crate) fn to_record(&self) -> LinearRecord {
        let mut bytes = Vec::with_capacity(self.weights.len() * 8);
        for w in &self.weights {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        LinearRecord {
            dim: self.dim,
            token_cap: self.token_cap,
            bias: self.bias.to_vec(),
            weights: base64::engine::general_purpose::STANDARD.encode(bytes),
            loss_history: self.loss_history.clone(),
            training: self.training.clone(),
        }
    }

    pub(crate) fn from_record(rec: LinearRecord) -> Result<Self, ScorerError> {
        if !is_valid_dim(rec.dim) {
            return Err(ScorerError::Model(format!("bad dim {}", rec.dim)));
        }
        let bias: [f64; TAG_COUNT] = rec
            .bias
            .as_slice()
            .try_into()
            .map_err(|_| ScorerError::Model(format!("expected {TAG_COUNT} biases")))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(rec.weights.as_bytes())
            .map_err(|e| ScorerError::Model(e.to_string()))?;
        if bytes.len() != TAG_COUNT * rec.dim * 8 {
            return Err(ScorerError::Model(format!(
                "weights hold {} bytes, expected {}",
                bytes.len(),
                TAG_COUNT * rec.dim * 8
            )));
        }
        let weights = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(LinearScorer {
            dim: rec.dim,
            token_cap: rec.token_cap,
            weights,
            bias,
            loss_history: rec.loss_history,
            training: rec.training,
        })
    }
}

/// Serialized form: weights as base64 of little-endian f64.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct LinearRecord {
    pub dim: usize,
    pub token_cap: usize,
    pub bias: Vec<f64>,
    pub weights: String,
    #[serde(default)]
    pub loss_history: Vec<f64>,
    #[serde(default)]
    pub training: Option<TrainConfig>,
}

impl Scorer for LinearScorer {
    fn score(&self, conv: &Conversation) -> ScoreVector {
        let z = self.logits(&self.features(conv));
        ScoreVector::new(z.map(logistic)).expect("logistic output lies in [0, 1]")
    }

    fn fingerprint(&self) -> String {
        let mut h = Fnv64::new();
        self.feed_fingerprint(&mut h);
        hex_fingerprint(h.finish())
    }

    fn attributable(&self) -> Option<&dyn Attributable> {
        Some(self)
    }
}

/// Attributes the logit, so attributions sum to `logit(x) - bias`.
impl Attributable for LinearScorer {
    fn dim(&self) -> usize {
        self.dim
    }

    fn output_and_gradient(&self, indices: &[u32], values: &[f64], tag: IssueTag) -> (f64, Vec<f64>) {
        let row = self.row(tag);
        let grad = indices.iter().map(|&i| row[i as usize]).collect();
        (self.sparse_logit(indices, values, tag), grad)
    }

    fn token_cap(&self) -> usize {
        self.token_cap
    }
}
