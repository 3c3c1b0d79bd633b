//! Hashed unigram + bigram features.

use std::collections::BTreeMap;

use crate::corpus::tokenize;
use crate::hash::Fnv64;

/// Smallest hashing dimension accepted.
pub const MIN_DIM: usize = 1 << 10;

/// Sparse, L2-normalized feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub dim: usize,
    /// Strictly increasing.
    pub indices: Vec<u32>,
    /// Positive, unit L2 norm (when non-empty).
    pub weights: Vec<f64>,
}

impl FeatureVector {
    pub fn empty(dim: usize) -> Self {
        FeatureVector {
            dim,
            indices: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .map(|&i| i as usize)
            .zip(self.weights.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, w)| dense[i] * w).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, w) in self.iter() {
            out[i] = w;
        }
        out
    }
}

/// Which tokens fed each feature, with their raw-count share. Shares of a
/// feature sum to its raw count; a bigram occurrence gives 0.5 to each of
/// its two tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureProvenance {
    pub sources: Vec<Vec<(usize, f64)>>,
}

pub fn is_valid_dim(dim: usize) -> bool {
    dim >= MIN_DIM && dim.is_power_of_two()
}

pub fn unigram_index(token: &str, dim: usize) -> usize {
    let h = Fnv64::new().write(&[1]).write(token.as_bytes()).finish();
    (h as usize) & (dim - 1)
}

pub fn bigram_index(first: &str, second: &str, dim: usize) -> usize {
    let h = Fnv64::new()
        .write(&[2])
        .write(first.as_bytes())
        .write(&[0])
        .write(second.as_bytes())
        .finish();
    (h as usize) & (dim - 1)
}

/// Featurize `text`.
///
/// # Panics
///
/// When `dim` is not a power of two of at least [`MIN_DIM`].
pub fn featurize(text: &str, dim: usize) -> FeatureVector {
    featurize_tokens(&tokenize(text), dim).0
}

/// Featurize pre-tokenized input, also returning per-feature token provenance.
pub fn featurize_tokens(tokens: &[String], dim: usize) -> (FeatureVector, FeatureProvenance) {
    assert!(
        is_valid_dim(dim),
        "feature dimension {dim} must be a power of two >= {MIN_DIM}"
    );
    let mut counts: BTreeMap<usize, (f64, Vec<(usize, f64)>)> = BTreeMap::new();
    for (pos, tok) in tokens.iter().enumerate() {
        let e = counts.entry(unigram_index(tok, dim)).or_default();
        e.0 += 1.0;
        e.1.push((pos, 1.0));
    }
    for (pos, pair) in tokens.windows(2).enumerate() {
        let e = counts.entry(bigram_index(&pair[0], &pair[1], dim)).or_default();
        e.0 += 1.0;
        e.1.push((pos, 0.5));
        e.1.push((pos + 1, 0.5));
    }
    let norm = counts.values().map(|(c, _)| c * c).sum::<f64>().sqrt();
    let mut indices = Vec::with_capacity(counts.len());
    let mut weights = Vec::with_capacity(counts.len());
    let mut sources = Vec::with_capacity(counts.len());
    for (idx, (count, src)) in counts {
        indices.push(idx as u32);
        weights.push(count / norm);
        sources.push(src);
    }
    (FeatureVector { dim, indices, weights }, FeatureProvenance { sources })
}
