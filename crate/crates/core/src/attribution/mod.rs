//! Token-level integrated gradients over the hashed feature space, and the
//! keyword, co-occurrence and embedding analyses built on top of it.

pub mod bigram;
pub mod keywords;
pub mod projection;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bigram::{bigram_graph, BigramEdge, BigramGraph, ABUSE_PHYSICAL_MIN_COUNT, SUICIDE_MIN_COUNT};
pub use keywords::{
    aggregate_keywords, extract_keywords, filter_keywords, percentile, HeuristicTagger, KeywordFilterConfig,
    KeywordTable, Pos, PosTagger, DEFAULT_KEYWORD_PERCENTILE,
};
pub use projection::{
    internal_embeddings, nearest_neighbors, parse_embeddings, pca_projection, EmbeddingProjection, EmbeddingSource,
    Embeddings, INTERNAL_EMBEDDING_RANK,
};

use crate::corpus::tokenize::{count_tokens, tokenize};
use crate::corpus::Conversation;
use crate::scorer::features::featurize_tokens;
use crate::scorer::{model_input, Scorer};
use crate::tags::IssueTag;
use crate::triage::priority_sentence;

pub const DEFAULT_IG_STEPS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum AttributionError {
    #[error("scorer exposes no gradients; imported score files cannot be attributed")]
    NotDifferentiable,
    #[error("integration needs at least one step")]
    NoSteps,
    #[error("need at least {need} embeddable keywords, got {got}")]
    TooFewKeywords { need: usize, got: usize },
    #[error("embedding file line {line}: {message}")]
    EmbeddingParse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    ZeroVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub conversation_id: String,
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
    pub target: IssueTag,
    pub steps: usize,
    pub baseline: Baseline,
    /// Leading tokens that come from the priority sentence rather than the conversation.
    pub prefix_len: usize,
    /// Attributed output at the input and at the baseline.
    pub output: f64,
    pub baseline_output: f64,
    /// `|sum(scores) - (output - baseline_output)|`
    pub residual: f64,
}

impl AttributionVector {
    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Conversation tokens with their scores, priority sentence excluded.
    pub fn content(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.tokens[self.prefix_len..]
            .iter()
            .map(String::as_str)
            .zip(self.scores[self.prefix_len..].iter().copied())
    }
}

/// Per-feature integrated gradients with a zero baseline, midpoint rule.
/// Returns the feature attributions and the outputs at input and baseline.
pub fn feature_attributions(
    model: &dyn crate::scorer::Attributable,
    indices: &[u32],
    values: &[f64],
    target: IssueTag,
    steps: usize,
) -> Result<(Vec<f64>, f64, f64), AttributionError> {
    if steps == 0 {
        return Err(AttributionError::NoSteps);
    }
    let mut grad_sum = vec![0.0; values.len()];
    let mut scaled = vec![0.0; values.len()];
    for k in 0..steps {
        let alpha = (k as f64 + 0.5) / steps as f64;
        for (s, v) in scaled.iter_mut().zip(values) {
            *s = alpha * v;
        }
        let (_, g) = model.output_and_gradient(indices, &scaled, target);
        for (acc, gi) in grad_sum.iter_mut().zip(g) {
            *acc += gi;
        }
    }
    let attr = values
        .iter()
        .zip(&grad_sum)
        .map(|(v, g)| v * g / steps as f64)
        .collect();
    let (output, _) = model.output_and_gradient(indices, values, target);
    let zeros = vec![0.0; values.len()];
    let (baseline_output, _) = model.output_and_gradient(indices, &zeros, target);
    Ok((attr, output, baseline_output))
}

/// Attribute `target` to the tokens of the scorer's input for `conv`.
pub fn integrated_gradients(
    scorer: &dyn Scorer,
    conv: &Conversation,
    target: IssueTag,
    steps: usize,
) -> Result<AttributionVector, AttributionError> {
    let model = scorer.attributable().ok_or(AttributionError::NotDifferentiable)?;
    let text = model_input(conv, model.token_cap());
    let tokens = tokenize(&text);
    let (x, provenance) = featurize_tokens(&tokens, model.dim());
    let (feature_attr, output, baseline_output) = feature_attributions(model, &x.indices, &x.weights, target, steps)?;

    let mut scores = vec![0.0; tokens.len()];
    for (attr, sources) in feature_attr.iter().zip(&provenance.sources) {
        let raw: f64 = sources.iter().map(|(_, share)| share).sum();
        for &(pos, share) in sources {
            scores[pos] += attr * share / raw;
        }
    }
    let residual = (scores.iter().sum::<f64>() - (output - baseline_output)).abs();
    let prefix_len = priority_sentence(conv.priority).map_or(0, |s| count_tokens(&s));
    Ok(AttributionVector {
        conversation_id: conv.id.clone(),
        tokens,
        scores,
        target,
        steps,
        baseline: Baseline::ZeroVector,
        prefix_len,
        output,
        baseline_output,
        residual,
    })
}
