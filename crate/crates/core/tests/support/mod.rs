//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance suite. Everything here works on
//! plain `bool` arrays and pair enumeration rather than the library's
//! bitsets and rank statistics.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use tagtriage_core::consensus::{Judgment, ReviewerAnnotation};
use tagtriage_core::{IssueTag, TagSet, TAG_COUNT};

pub type Bits = [bool; TAG_COUNT];

pub fn bits(set: TagSet) -> Bits {
    let mut b = [false; TAG_COUNT];
    for (i, t) in IssueTag::ALL.iter().enumerate() {
        b[i] = set.contains(*t);
    }
    b
}

pub fn random_set<R: Rng>(rng: &mut R, density: f64) -> TagSet {
    IssueTag::ALL
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < density)
        .collect()
}

/// Random (prediction, truth) pairs; truths are never empty.
pub fn random_instances<R: Rng>(rng: &mut R, n: usize) -> (Vec<TagSet>, Vec<TagSet>) {
    let mut preds = Vec::with_capacity(n);
    let mut truths = Vec::with_capacity(n);
    for _ in 0..n {
        let density = rng.random_range(0.0..0.4);
        preds.push(random_set(rng, density));
        let truth_density = rng.random_range(0.02..0.3);
        let mut t = random_set(rng, truth_density);
        if t.is_empty() {
            t.insert(IssueTag::ALL[rng.random_range(0..TAG_COUNT)]);
        }
        truths.push(t);
    }
    (preds, truths)
}

/// Per-sample precision, recall and F1 with the empty-set conventions spelled out.
pub fn oracle_prf(pred: &Bits, truth: &Bits) -> (f64, f64, f64) {
    let mut both = 0usize;
    let mut np = 0usize;
    let mut nt = 0usize;
    for i in 0..TAG_COUNT {
        if pred[i] {
            np += 1;
        }
        if truth[i] {
            nt += 1;
        }
        if pred[i] && truth[i] {
            both += 1;
        }
    }
    let precision = if np == 0 {
        if nt == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        both as f64 / np as f64
    };
    let recall = if nt == 0 { 1.0 } else { both as f64 / nt as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

pub fn oracle_sample(preds: &[TagSet], truths: &[TagSet]) -> (f64, f64, f64) {
    let n = preds.len() as f64;
    let mut acc = (0.0, 0.0, 0.0);
    for (p, t) in preds.iter().zip(truths) {
        let (a, b, c) = oracle_prf(&bits(*p), &bits(*t));
        acc.0 += a;
        acc.1 += b;
        acc.2 += c;
    }
    (acc.0 / n, acc.1 / n, acc.2 / n)
}

pub fn oracle_accuracy_19(preds: &[TagSet], truths: &[TagSet]) -> f64 {
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(truths) {
        let (p, t) = (bits(*p), bits(*t));
        let correct = (0..TAG_COUNT).filter(|&i| p[i] == t[i]).count();
        total += correct as f64 / TAG_COUNT as f64;
    }
    total / preds.len() as f64
}

pub fn oracle_exact(preds: &[TagSet], truths: &[TagSet]) -> f64 {
    let hits = preds.iter().zip(truths).filter(|(p, t)| bits(**p) == bits(**t)).count();
    hits as f64 / preds.len() as f64
}

pub fn oracle_label(preds: &[TagSet], truths: &[TagSet], tag: usize) -> (Option<f64>, Option<f64>, Option<f64>) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (p, t) in preds.iter().zip(truths) {
        let (p, t) = (bits(*p)[tag], bits(*t)[tag]);
        if p && t {
            tp += 1.0;
        } else if p {
            fp += 1.0;
        } else if t {
            fn_ += 1.0;
        }
    }
    let precision = if tp + fp > 0.0 { Some(tp / (tp + fp)) } else { None };
    let recall = if tp + fn_ > 0.0 { Some(tp / (tp + fn_)) } else { None };
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => Some(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 }),
        _ => None,
    };
    (precision, recall, f1)
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

/// Exhaustive pairwise AUC: correct orderings plus half the ties.
pub fn oracle_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        if !labels[i] {
            continue;
        }
        for j in 0..scores.len() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    if pairs == 0.0 {
        None
    } else {
        Some(wins / pairs)
    }
}

/// Scores drawn from a small grid so ties are common.
pub fn random_auc_case<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=200);
    let levels = rng.random_range(2..=30);
    let p = rng.random_range(0.05..0.95);
    let scores = (0..n)
        .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
        .collect();
    let labels = (0..n).map(|_| rng.random::<f64>() < p).collect();
    (scores, labels)
}

/// A strictly increasing map of `[0, 1]`, parameterized by `rng`.
pub fn random_monotone<R: Rng>(rng: &mut R) -> impl Fn(f64) -> f64 {
    let a = rng.random_range(0.1..5.0);
    let b = rng.random_range(-3.0..3.0);
    let c = rng.random_range(0.2..4.0);
    move |x: f64| a * x.powf(c) + b + (x * 3.0).tanh()
}

// ---------------------------------------------------------------------------
// consensus fixtures

pub fn set(tags: &[IssueTag]) -> TagSet {
    tags.iter().copied().collect()
}

pub fn blind(reviewer: &str, conv: &str, primary: &[IssueTag], secondary: &[IssueTag]) -> ReviewerAnnotation {
    ReviewerAnnotation {
        reviewer_id: reviewer.into(),
        conversation_id: conv.into(),
        judgment: Judgment::Blind {
            primary_tags: set(primary),
            secondary_tags: set(secondary),
        },
    }
}

pub fn open(
    reviewer: &str,
    conv: &str,
    agreed: &[IssueTag],
    disagreed: &[IssueTag],
    missing: &[IssueTag],
) -> ReviewerAnnotation {
    ReviewerAnnotation {
        reviewer_id: reviewer.into(),
        conversation_id: conv.into(),
        judgment: Judgment::Open {
            agreed_tags: set(agreed),
            disagreed_tags: set(disagreed),
            missing_tags: set(missing),
        },
    }
}

/// Five conversations, three blind reviewers each, and the candidate sets scored against them.
pub fn consensus_fixture() -> (BTreeMap<String, Vec<ReviewerAnnotation>>, BTreeMap<String, TagSet>) {
    use IssueTag::*;
    let mut b = BTreeMap::new();
    b.insert(
        "c1".to_string(),
        vec![
            blind("r1", "c1", &[Suicide], &[Isolated]),
            blind("r2", "c1", &[Suicide, Depressed], &[]),
            blind("r3", "c1", &[Suicide], &[Depressed]),
        ],
    );
    b.insert(
        "c2".to_string(),
        vec![
            blind("r1", "c2", &[AnxietyStress], &[]),
            blind("r2", "c2", &[Relationship], &[]),
            blind("r3", "c2", &[Grief], &[AnxietyStress]),
        ],
    );
    b.insert(
        "c3".to_string(),
        vec![
            blind("r1", "c3", &[Bully], &[]),
            blind("r2", "c3", &[Bully], &[]),
            blind("r3", "c3", &[Bully], &[]),
        ],
    );
    b.insert(
        "c4".to_string(),
        vec![
            blind("r1", "c4", &[Grief, Depressed], &[]),
            blind("r2", "c4", &[Grief], &[]),
            blind("r3", "c4", &[Depressed], &[Grief]),
        ],
    );
    b.insert(
        "c5".to_string(),
        vec![
            blind("r1", "c5", &[Testing], &[]),
            blind("r2", "c5", &[Testing], &[]),
            blind("r3", "c5", &[Prank], &[Testing]),
        ],
    );
    let mut cand = BTreeMap::new();
    cand.insert("c1".to_string(), set(&[Suicide, Isolated]));
    cand.insert("c2".to_string(), set(&[AnxietyStress]));
    cand.insert("c3".to_string(), TagSet::default());
    cand.insert("c4".to_string(), set(&[Grief, Depressed, Isolated]));
    cand.insert("c5".to_string(), set(&[Prank]));
    (b, cand)
}

pub struct ExpectedCriterion {
    pub name: &'static str,
    pub references: [&'static [IssueTag]; 5],
    pub skipped: &'static [&'static str],
    pub prf: (f64, f64, f64),
}

/// Hand enumeration of the fixture, criterion by criterion.
pub fn consensus_expected() -> Vec<ExpectedCriterion> {
    use IssueTag::*;
    vec![
        // c1 {S}: 1/2, 1, 2/3; c3 {B}: 0, 0, 0
        ExpectedCriterion {
            name: "FA1",
            references: [&[Suicide], &[], &[Bully], &[], &[]],
            skipped: &["c2", "c4", "c5"],
            prf: (1.0 / 4.0, 1.0 / 2.0, 1.0 / 3.0),
        },
        // c1 1/2,1,2/3; c3 0; c4 {G,D}: 2/3,1,4/5; c5 {T}: 0
        ExpectedCriterion {
            name: "PA1Maj",
            references: [&[Suicide], &[], &[Bully], &[Depressed, Grief], &[Testing]],
            skipped: &["c2"],
            prf: (7.0 / 24.0, 1.0 / 2.0, 11.0 / 30.0),
        },
        // c1 {S,D}: 1/2,1/2,1/2; c2 {A}: 1,1,1; c3 0; c4 2/3,1,4/5; c5 0
        ExpectedCriterion {
            name: "PA12Maj",
            references: [
                &[Depressed, Suicide],
                &[AnxietyStress],
                &[Bully],
                &[Depressed, Grief],
                &[Testing],
            ],
            skipped: &[],
            prf: (13.0 / 30.0, 1.0 / 2.0, 23.0 / 50.0),
        },
        // c1 {S,D}: 1/2,1/2,1/2; c2 {A,G,R}: 1,1/3,1/2; c3 0; c4 2/3,1,4/5; c5 {P,T}: 1,1/2,2/3
        ExpectedCriterion {
            name: "FA1AtLeast1",
            references: [
                &[Depressed, Suicide],
                &[AnxietyStress, Grief, Relationship],
                &[Bully],
                &[Depressed, Grief],
                &[Prank, Testing],
            ],
            skipped: &[],
            prf: (19.0 / 30.0, 7.0 / 15.0, 37.0 / 75.0),
        },
        // c1 {S,D,I}: 1,2/3,4/5; c2 1,1/3,1/2; c3 0; c4 2/3,1,4/5; c5 1,1/2,2/3
        ExpectedCriterion {
            name: "FA12AtLeast1",
            references: [
                &[Depressed, Isolated, Suicide],
                &[AnxietyStress, Grief, Relationship],
                &[Bully],
                &[Depressed, Grief],
                &[Prank, Testing],
            ],
            skipped: &[],
            prf: (11.0 / 15.0, 1.0 / 2.0, 83.0 / 150.0),
        },
    ]
}

/// Mean of the five criteria above.
pub const CONSENSUS_AVERAGE: (f64, f64, f64) = (281.0 / 600.0, 37.0 / 75.0, 331.0 / 750.0);

/// Two conversations with open reviews, and their shown predictions.
pub fn open_fixture() -> (BTreeMap<String, Vec<ReviewerAnnotation>>, BTreeMap<String, TagSet>) {
    use IssueTag::*;
    let mut o = BTreeMap::new();
    o.insert(
        "m1".to_string(),
        vec![
            open("r1", "m1", &[Suicide, Depressed], &[], &[Isolated]),
            open("r2", "m1", &[Suicide], &[Depressed], &[]),
            open("r3", "m1", &[Suicide, Depressed], &[], &[Isolated, Grief]),
        ],
    );
    o.insert(
        "m2".to_string(),
        vec![
            open("r1", "m2", &[], &[Bully], &[AbuseEmotional]),
            open("r2", "m2", &[Bully], &[], &[]),
            open("r3", "m2", &[], &[Bully], &[]),
        ],
    );
    let mut p = BTreeMap::new();
    p.insert("m1".to_string(), set(&[Suicide, Depressed]));
    p.insert("m2".to_string(), set(&[Bully]));
    (o, p)
}

/// Non-empty cells of the open fixture, and the agreement fraction 6 / 9.
pub fn open_expected() -> (Vec<(&'static str, IssueTag, &'static str)>, f64) {
    use IssueTag::*;
    (
        vec![
            ("m1", Depressed, "A2"),
            ("m1", Grief, "M1"),
            ("m1", Isolated, "M2"),
            ("m1", Suicide, "A3"),
            ("m2", AbuseEmotional, "M1"),
            ("m2", Bully, "A1"),
        ],
        6.0 / 9.0,
    )
}

/// Three random blind annotations for one conversation.
pub fn random_blind_triple<R: Rng>(rng: &mut R, conv: &str) -> Vec<ReviewerAnnotation> {
    (0..3)
        .map(|r| {
            let mut primary = random_set(rng, 0.15);
            if primary.is_empty() {
                primary.insert(IssueTag::ALL[rng.random_range(0..TAG_COUNT)]);
            }
            let secondary = random_set(rng, 0.15).difference(primary);
            ReviewerAnnotation {
                reviewer_id: format!("r{r}"),
                conversation_id: conv.into(),
                judgment: Judgment::Blind {
                    primary_tags: primary,
                    secondary_tags: secondary,
                },
            }
        })
        .collect()
}
