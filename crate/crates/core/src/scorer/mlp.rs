//! A one-hidden-layer tanh network over hashed features. Randomly
//! initialized; exists to exercise attribution on a non-linear scorer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::{featurize, is_valid_dim};
use super::{logistic, model_input, Attributable, ScoreVector, Scorer};
use crate::corpus::{Conversation, DEFAULT_TOKEN_CAP};
use crate::hash::{hex_fingerprint, Fnv64};
use crate::tags::{IssueTag, TAG_COUNT};

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayerScorer {
    pub dim: usize,
    pub hidden: usize,
    /// `hidden x dim`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `TAG_COUNT x hidden`
    pub w2: Vec<f64>,
    pub b2: [f64; TAG_COUNT],
}

impl HiddenLayerScorer {
    /// Weights uniform in `[-scale, scale]`.
    pub fn random(dim: usize, hidden: usize, scale: f64, seed: u64) -> Self {
        assert!(is_valid_dim(dim) && hidden > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-scale..=scale)).collect::<Vec<f64>>();
        let w1 = draw(hidden * dim);
        let b1 = draw(hidden);
        let w2 = draw(TAG_COUNT * hidden);
        let b2: [f64; TAG_COUNT] = draw(TAG_COUNT).try_into().expect("TAG_COUNT values");
        HiddenLayerScorer {
            dim,
            hidden,
            w1,
            b1,
            w2,
            b2,
        }
    }

    fn activations(&self, indices: &[u32], values: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.dim..(h + 1) * self.dim];
                let pre = self.b1[h]
                    + indices
                        .iter()
                        .zip(values)
                        .map(|(&i, v)| row[i as usize] * v)
                        .sum::<f64>();
                pre.tanh()
            })
            .collect()
    }

    fn logit(&self, act: &[f64], tag: IssueTag) -> f64 {
        let t = tag.index();
        self.b2[t]
            + self.w2[t * self.hidden..(t + 1) * self.hidden]
                .iter()
                .zip(act)
                .map(|(w, a)| w * a)
                .sum::<f64>()
    }
}

impl Scorer for HiddenLayerScorer {
    fn score(&self, conv: &Conversation) -> ScoreVector {
        let x = featurize(&model_input(conv, DEFAULT_TOKEN_CAP), self.dim);
        let act = self.activations(&x.indices, &x.weights);
        ScoreVector::new(IssueTag::ALL.map(|t| logistic(self.logit(&act, t)))).expect("logistic output lies in [0, 1]")
    }

    fn fingerprint(&self) -> String {
        let mut h = Fnv64::new();
        h.write_u64(self.dim as u64).write_u64(self.hidden as u64);
        for w in self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2) {
            h.write_f64(*w);
        }
        hex_fingerprint(h.finish())
    }

    fn attributable(&self) -> Option<&dyn Attributable> {
        Some(self)
    }
}

/// Attributes the probability.
impl Attributable for HiddenLayerScorer {
    fn dim(&self) -> usize {
        self.dim
    }

    fn output_and_gradient(&self, indices: &[u32], values: &[f64], tag: IssueTag) -> (f64, Vec<f64>) {
        let act = self.activations(indices, values);
        let p = logistic(self.logit(&act, tag));
        let t = tag.index();
        let mut grad = vec![0.0; indices.len()];
        for (h, a) in act.iter().enumerate() {
            let back = p * (1.0 - p) * self.w2[t * self.hidden + h] * (1.0 - a * a);
            let row = &self.w1[h * self.dim..(h + 1) * self.dim];
            for (g, &i) in grad.iter_mut().zip(indices) {
                *g += back * row[i as usize];
            }
        }
        (p, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_difference() {
        let net = HiddenLayerScorer::random(1 << 10, 6, 2.0, 3);
        let indices = [3u32, 17, 400, 1000];
        let values = [0.5, 0.3, 0.7, 0.4];
        for tag in [IssueTag::Suicide, IssueTag::Grief] {
            let (_, grad) = net.output_and_gradient(&indices, &values, tag);
            let h = 1e-6;
            for k in 0..indices.len() {
                let mut v = values;
                v[k] += h;
                let up = net.output_and_gradient(&indices, &v, tag).0;
                v[k] -= 2.0 * h;
                let down = net.output_and_gradient(&indices, &v, tag).0;
                assert!((grad[k] - (up - down) / (2.0 * h)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn seeded_construction() {
        let a = HiddenLayerScorer::random(1 << 10, 4, 1.0, 1);
        assert_eq!(a, HiddenLayerScorer::random(1 << 10, 4, 1.0, 1));
        assert_ne!(
            a.fingerprint(),
            HiddenLayerScorer::random(1 << 10, 4, 1.0, 2).fingerprint()
        );
    }
}
