//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when
//! any fails. Runs under `cargo test` with `harness = false`.

#[path = "../../core/tests/support/mod.rs"]
mod oracle;

#[path = "../../service/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;
use tagtriage_core::attribution::{feature_attributions, integrated_gradients};
use tagtriage_core::consensus::{agreement_matrix, consensus_all, reference_set, ConsensusCriterion, ReviewMode};
use tagtriage_core::corpus::synthetic::{generate_synthetic, DemographicSampling, GeneratorConfig};
use tagtriage_core::corpus::{parse_corpus_str, stratified_split, Conversation, DemographicCategory, Split, SplitSpec};
use tagtriage_core::decision::{updated_threshold_default, ThresholdPolicy};
use tagtriage_core::metrics::stats::TTest;
use tagtriage_core::metrics::{
    accuracy_19, auc_roc, drift_report, evaluate, exact_accuracy, fairness_report, per_label_prf, sample_averaged,
    EvalReport, ScoredItem,
};
use tagtriage_core::scorer::linear::bce_loss_and_gradient;
use tagtriage_core::scorer::{Attributable, EnsembleScorer, HiddenLayerScorer, LinearScorer, ScoreVector, Scorer};
use tagtriage_core::{IssueTag, TagSet, TAG_COUNT};
use tagtriage_service::{blind_view_schema, CreateSession, EventLog, ReviewService, ServiceState};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Shared across criteria: the end-to-end run's corpus, split and model.
struct Pipeline {
    corpus: Vec<Conversation>,
    split: Split,
    model: EnsembleScorer,
}

struct Ctx {
    dir: tempfile::TempDir,
    pipeline: Option<Pipeline>,
}

fn main() {
    let criteria: Vec<(&str, fn(&mut Ctx) -> Outcome)> = vec![
        ("metric oracle equivalence", metric_oracle),
        ("AUC oracle", auc_oracle),
        ("updated-threshold constants", updated_constants),
        ("threshold monotonicity", threshold_monotonicity),
        ("IG completeness and gradient check", ig_completeness),
        ("end-to-end synthetic run", end_to_end),
        ("consensus fixtures", consensus_fixtures),
        ("agreement matrix", agreement_matrix_criterion),
        ("fairness nulls", fairness_nulls),
        ("drift gate", drift_gate),
        ("refinement direction", refinement_direction),
        ("service determinism and safety", service_safety),
    ];
    let mut ctx = Ctx {
        dir: tempfile::tempdir().expect("temp dir"),
        pipeline: None,
    };
    let mut failed = 0;
    for (name, check) in &criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut ctx))).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1}s): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1}s): {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// metrics and thresholds

fn metric_oracle(_: &mut Ctx) -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let (preds, truths) = oracle::random_instances(&mut rng, 1000);
    let mut worst = 0.0f64;
    let mut diff = |a: f64, b: f64| worst = worst.max((a - b).abs());
    let m = sample_averaged(&preds, &truths).map_err(|e| e.to_string())?;
    let o = oracle::oracle_sample(&preds, &truths);
    diff(m.precision, o.0);
    diff(m.recall, o.1);
    diff(m.f1, o.2);
    diff(
        accuracy_19(&preds, &truths).unwrap(),
        oracle::oracle_accuracy_19(&preds, &truths),
    );
    diff(
        exact_accuracy(&preds, &truths).unwrap(),
        oracle::oracle_exact(&preds, &truths),
    );
    // each instance on its own too, so per-sample conventions are exercised
    for (p, t) in preds.iter().zip(&truths) {
        let m = sample_averaged(&[*p], &[*t]).unwrap();
        let o = oracle::oracle_prf(&oracle::bits(*p), &oracle::bits(*t));
        diff(m.precision, o.0);
        diff(m.recall, o.1);
        diff(m.f1, o.2);
    }
    for (i, tag) in IssueTag::ALL.iter().enumerate() {
        let l = per_label_prf(&preds, &truths, *tag).unwrap();
        let o = oracle::oracle_label(&preds, &truths, i);
        ensure(
            oracle::close(l.precision, o.0, 1e-12)
                && oracle::close(l.recall, o.1, 1e-12)
                && oracle::close(l.f1, o.2, 1e-12),
            || format!("per-label mismatch on {tag}"),
        )?;
    }
    let elapsed = started.elapsed();
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 instances, max deviation {worst:.1e}, {elapsed:.2?}"))
}

fn auc_oracle(_: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let (scores, labels) = oracle::random_auc_case(&mut rng);
        let got = auc_roc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = oracle::oracle_auc(&scores, &labels);
        ensure(got.is_some() == want.is_some(), || {
            "definedness differs from enumeration".into()
        })?;
        if let (Some(a), Some(b)) = (got, want) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    let mut transforms = 0;
    let mut worst_t = 0.0f64;
    while transforms < 100 {
        let (scores, labels) = oracle::random_auc_case(&mut rng);
        let Some(base) = auc_roc(&scores, &labels).unwrap() else {
            continue;
        };
        let f = oracle::random_monotone(&mut rng);
        let mapped: Vec<f64> = scores.iter().map(|s| f(*s)).collect();
        worst_t = worst_t.max((auc_roc(&mapped, &labels).unwrap().unwrap() - base).abs());
        transforms += 1;
    }
    ensure(worst_t <= 1e-12, || {
        format!("monotone transform moved AUC by {worst_t:e}")
    })?;
    Ok(format!(
        "500 sets max deviation {worst:.1e}; 100 transforms max change {worst_t:.1e}"
    ))
}

fn updated_constants(_: &mut Ctx) -> Outcome {
    let p = updated_threshold_default();
    for tag in IssueTag::ALL {
        let want = match tag {
            IssueTag::AnxietyStress | IssueTag::Depressed | IssueTag::Relationship => 0.4,
            IssueTag::Suicide | IssueTag::Isolated => 0.3,
            _ => 0.2,
        };
        ensure(p.get(tag) == want, || format!("{tag}: {} != {want}", p.get(tag)))?;
    }
    Ok("3 tags at 0.4, 2 at 0.3, 14 at 0.2".into())
}

fn threshold_monotonicity(_: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let low = ThresholdPolicy::global(0.25).unwrap();
    let high = ThresholdPolicy::global(0.5).unwrap();
    for d in 0..200 {
        let n = rng.random_range(1..80);
        let (mut pl, mut ph, mut truths) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let s = ScoreVector::new(std::array::from_fn(|_| rng.random::<f64>())).unwrap();
            let (a, b) = (low.apply(&s), high.apply(&s));
            ensure(b.is_subset(a), || {
                format!("dataset {d}: 0.5 predictions not within 0.25 predictions")
            })?;
            pl.push(a);
            ph.push(b);
            truths.push(oracle::random_set(&mut rng, 0.15));
        }
        let rl = sample_averaged(&pl, &truths).unwrap().recall;
        let rh = sample_averaged(&ph, &truths).unwrap().recall;
        ensure(rl >= rh, || {
            format!("dataset {d}: recall(0.25) {rl} < recall(0.5) {rh}")
        })?;
    }
    Ok("200 datasets: subsets nest and recall(0.25) >= recall(0.5)".into())
}

// ---------------------------------------------------------------------------
// attribution

const WORDS: &[&str] = &[
    "alone", "scared", "school", "mom", "hurt", "tired", "friend", "die", "cut", "sad", "work", "night", "help",
    "angry", "lost", "money", "drink", "body", "partner", "fight",
];

fn random_text<R: Rng>(rng: &mut R, max_words: usize) -> String {
    let n = rng.random_range(0..=max_words);
    (0..n)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_linear(seed: u64) -> LinearScorer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = LinearScorer::zeros(1 << 10, 2000);
    for w in s.weights.iter_mut() {
        *w = rng.random_range(-2.0..2.0);
    }
    for b in s.bias.iter_mut() {
        *b = rng.random_range(-1.0..1.0);
    }
    s
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

fn ig_completeness(_: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    // linear: exact for every step count
    let mut worst_linear = 0.0f64;
    for i in 0..100 {
        let s = random_linear(i);
        let c = common::conversation("c", &random_text(&mut rng, 40), TagSet::default());
        let steps = if i < 10 {
            i as usize + 1
        } else {
            rng.random_range(1..128)
        };
        let tag = IssueTag::ALL[rng.random_range(0..TAG_COUNT)];
        let a = integrated_gradients(&s, &c, tag, steps).map_err(|e| e.to_string())?;
        worst_linear = worst_linear.max(a.residual);
    }
    ensure(worst_linear <= 1e-12, || format!("linear residual {worst_linear:e}"))?;

    // one hidden layer, m = 256
    let mut worst_rel = 0.0f64;
    for i in 0..50 {
        let s = HiddenLayerScorer::random(1 << 10, 8, 1.0, 500 + i);
        let c = common::conversation("c", &random_text(&mut rng, 30), TagSet::default());
        let tag = IssueTag::ALL[rng.random_range(0..TAG_COUNT)];
        let a = integrated_gradients(&s, &c, tag, 256).map_err(|e| e.to_string())?;
        let delta = (a.output - a.baseline_output).abs();
        if delta > 1e-12 {
            worst_rel = worst_rel.max(a.residual / delta);
        } else {
            ensure(a.residual <= 1e-12, || {
                format!("residual {} with no output change", a.residual)
            })?;
        }
    }
    ensure(worst_rel <= 1e-3, || {
        format!("hidden-layer relative residual {worst_rel:e}")
    })?;

    // analytic gradients against central differences
    let mut worst_grad = 0.0f64;
    for b in 0..50u64 {
        let net = HiddenLayerScorer::random(1 << 10, 8, 1.0, 900 + b);
        let k = rng.random_range(2..16);
        let indices: Vec<u32> = (0..k).map(|_| rng.random_range(0..1024)).collect();
        let values: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let tag = IssueTag::ALL[rng.random_range(0..TAG_COUNT)];
        let (_, grad) = net.output_and_gradient(&indices, &values, tag);
        let h = 1e-5;
        for j in 0..k {
            let mut v = values.clone();
            v[j] += h;
            let up = net.output_and_gradient(&indices, &v, tag).0;
            v[j] -= 2.0 * h;
            let down = net.output_and_gradient(&indices, &v, tag).0;
            worst_grad = worst_grad.max(rel_err(grad[j], (up - down) / (2.0 * h)));
        }
        // training loss of a linear row over a batch, against its weights
        let lin = random_linear(2000 + b);
        let batch: Vec<(Vec<(usize, f64)>, bool)> = (0..8)
            .map(|_| {
                let x = (0..6)
                    .map(|_| (rng.random_range(0..1024), rng.random_range(0.0..1.0)))
                    .collect();
                (x, rng.random_bool(0.3))
            })
            .collect();
        let row = lin.row(tag).to_vec();
        let bias = lin.bias[tag.index()];
        let (wp, wn) = (rng.random_range(0.5..4.0), rng.random_range(0.5..2.0));
        let loss = |w: &[f64]| -> f64 {
            batch
                .iter()
                .map(|(x, y)| bce_loss_and_gradient(x.iter().map(|(i, v)| w[*i] * v).sum::<f64>() + bias, *y, wp, wn).0)
                .sum::<f64>()
                / batch.len() as f64
        };
        let mut analytic: BTreeMap<usize, f64> = BTreeMap::new();
        for (x, y) in &batch {
            let z = x.iter().map(|(i, v)| row[*i] * v).sum::<f64>() + bias;
            let (_, g) = bce_loss_and_gradient(z, *y, wp, wn);
            for (i, v) in x {
                *analytic.entry(*i).or_default() += g * v / batch.len() as f64;
            }
        }
        for (&i, &g) in &analytic {
            let mut w = row.clone();
            w[i] += h;
            let up = loss(&w);
            w[i] -= 2.0 * h;
            let down = loss(&w);
            worst_grad = worst_grad.max(rel_err(g, (up - down) / (2.0 * h)));
        }
    }
    ensure(worst_grad <= 1e-4, || format!("gradient relative error {worst_grad:e}"))?;

    // the same completeness at the feature level, for the hidden layer
    let net = HiddenLayerScorer::random(1 << 10, 8, 1.0, 77);
    let (attr, out, base) = feature_attributions(&net, &[1, 2, 3], &[0.2, 0.9, 0.4], IssueTag::Grief, 256).unwrap();
    let feature_rel = (attr.iter().sum::<f64>() - (out - base)).abs() / (out - base).abs();
    ensure(feature_rel <= 1e-3, || {
        format!("feature-level relative residual {feature_rel:e}")
    })?;

    Ok(format!(
        "linear residual {worst_linear:.1e}; hidden-layer relative residual {worst_rel:.1e} at m=256; \
         gradient relative error {worst_grad:.1e} over 50 batches"
    ))
}

// ---------------------------------------------------------------------------
// end to end

fn tagtriage(args: &[&str]) -> Result<String, String> {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tagtriage"));
    for (k, _) in std::env::vars() {
        if k.starts_with("TAGTRIAGE_") {
            c.env_remove(k);
        }
    }
    let out = c
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("tagtriage {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn read_report(path: PathBuf) -> Result<EvalReport, String> {
    serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn end_to_end(ctx: &mut Ctx) -> Outcome {
    let dir = ctx.dir.path().join("e2e");
    let corpus = dir.join("corpus.jsonl");
    let model = dir.join("model.json");
    let eval = dir.join("eval");
    let started = Instant::now();
    tagtriage(&["generate", "--seed", "0", "--size", "5000", "--out", p(&corpus)])?;
    tagtriage(&["--corpus", p(&corpus), "--seed", "0", "train", "--out", p(&model)])?;
    tagtriage(&[
        "--corpus",
        p(&corpus),
        "--model",
        p(&model),
        "evaluate",
        "--split",
        "test",
        "--out",
        p(&eval),
    ])?;
    let elapsed = started.elapsed();

    let at25 = read_report(eval.join("eval_global_0.25.json"))?;
    let at50 = read_report(eval.join("eval_global_0.50.json"))?;
    let updated = read_report(eval.join("eval_updated.json"))?;

    // determinism: a second run from the same seed gives identical bytes
    let corpus2 = dir.join("corpus2.jsonl");
    let model2 = dir.join("model2.json");
    tagtriage(&["generate", "--seed", "0", "--size", "5000", "--out", p(&corpus2)])?;
    tagtriage(&["--corpus", p(&corpus2), "--seed", "0", "train", "--out", p(&model2)])?;
    let same = |a: &Path, b: &Path| std::fs::read(a).ok() == std::fs::read(b).ok();
    ensure(same(&corpus, &corpus2), || "corpus differs between runs".into())?;
    ensure(same(&model, &model2), || "model differs between runs".into())?;

    let convs = parse_corpus_str(&std::fs::read_to_string(&corpus).unwrap()).map_err(|e| e.to_string())?;
    let split = stratified_split(&convs, &SplitSpec::default()).map_err(|e| e.to_string())?;
    let scorer = EnsembleScorer::load(&model).map_err(|e| e.to_string())?;
    let members = scorer.member_scores(&convs[0]).len();
    ctx.pipeline = Some(Pipeline {
        corpus: convs,
        split,
        model: scorer,
    });

    let (r25, f25, p25, p50) = (
        at25.sample.recall,
        at25.sample.f1,
        at25.sample.precision,
        at50.sample.precision,
    );
    let detail = format!(
        "{members} members, {} test conversations; @0.25 P {p25:.3} R {r25:.3} F1 {f25:.3}; @0.5 P {p50:.3} R {:.3} F1 {:.3}; \
         updated P {:.3} R {:.3} F1 {:.3}; generate+train+evaluate {elapsed:.1?}",
        at25.conversations,
        at50.sample.recall,
        at50.sample.f1,
        updated.sample.precision,
        updated.sample.recall,
        updated.sample.f1
    );
    ensure(members == 3, || format!("{members} ensemble members"))?;
    ensure(r25 >= 0.75, || format!("recall@0.25 {r25:.4} < 0.75; {detail}"))?;
    ensure(f25 >= 0.55, || format!("F1@0.25 {f25:.4} < 0.55; {detail}"))?;
    ensure(p50 >= p25, || {
        format!("precision@0.5 {p50:.4} < precision@0.25 {p25:.4}; {detail}")
    })?;
    ensure(elapsed < Duration::from_secs(300), || {
        format!("took {elapsed:?}; {detail}")
    })?;
    Ok(detail)
}

fn pipeline(ctx: &Ctx) -> Result<&Pipeline, String> {
    ctx.pipeline
        .as_ref()
        .ok_or_else(|| "needs the end-to-end model, which did not build".to_string())
}

fn items(model: &EnsembleScorer, convs: &[Conversation]) -> Vec<ScoredItem> {
    convs
        .iter()
        .map(|c| ScoredItem {
            id: c.id.clone(),
            scores: model.score(c),
            truth: c.true_tags,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// consensus and review

fn consensus_fixtures(_: &mut Ctx) -> Outcome {
    let (blind, cand) = oracle::consensus_fixture();
    let report = consensus_all(&cand, &blind).map_err(|e| e.to_string())?;
    let convs: Vec<&String> = blind.keys().collect();
    for want in oracle::consensus_expected() {
        let criterion: ConsensusCriterion = want.name.parse()?;
        for (i, conv) in convs.iter().enumerate() {
            let got = reference_set(&blind[*conv], criterion).map_err(|e| e.to_string())?;
            ensure(got == oracle::set(want.references[i]), || {
                format!("{} reference set of {conv}: {got}", want.name)
            })?;
        }
        let got = report.get(criterion);
        ensure(got.skipped == want.skipped, || {
            format!("{} skipped {:?}", want.name, got.skipped)
        })?;
        let m = got.metrics.ok_or_else(|| format!("{} has no metrics", want.name))?;
        ensure(
            (m.precision, m.recall, m.f1) == want.prf
                || ((m.precision - want.prf.0).abs() < 1e-15
                    && (m.recall - want.prf.1).abs() < 1e-15
                    && (m.f1 - want.prf.2).abs() < 1e-15),
            || {
                format!(
                    "{} P/R/F1 {:?} != {:?}",
                    want.name,
                    (m.precision, m.recall, m.f1),
                    want.prf
                )
            },
        )?;
    }
    let avg = report.average.ok_or("no average")?;
    let want = oracle::CONSENSUS_AVERAGE;
    ensure(
        (avg.precision - want.0).abs() < 1e-15
            && (avg.recall - want.1).abs() < 1e-15
            && (avg.f1 - want.2).abs() < 1e-15,
        || format!("average {avg:?} != {want:?}"),
    )?;

    use ConsensusCriterion::*;
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    for i in 0..1000 {
        let triple = oracle::random_blind_triple(&mut rng, &format!("t{i}"));
        let r = |c| reference_set(&triple, c).unwrap();
        ensure(
            r(FA1).is_subset(r(PA1Maj))
                && r(PA1Maj).is_subset(r(FA1AtLeast1))
                && r(PA1Maj).is_subset(r(PA12Maj))
                && r(PA12Maj).is_subset(r(FA12AtLeast1)),
            || format!("chain broken on triple {i}"),
        )?;
    }
    Ok("5 criteria x 5 conversations match hand enumeration; chain holds on 1000 triples".into())
}

fn agreement_matrix_criterion(_: &mut Ctx) -> Outcome {
    let (open, preds) = oracle::open_fixture();
    let m = agreement_matrix(&open, &preds).map_err(|e| e.to_string())?;
    let (cells, overall) = oracle::open_expected();
    let got: Vec<(String, IssueTag, String)> = m
        .cells
        .iter()
        .filter(|c| !c.label().is_empty())
        .map(|c| (c.conversation_id.clone(), c.tag, c.label()))
        .collect();
    let want: Vec<(String, IssueTag, String)> = cells
        .iter()
        .map(|(c, t, l)| (c.to_string(), *t, l.to_string()))
        .collect();
    ensure(got == want, || format!("cells {got:?}"))?;
    ensure(m.overall_agreement == Some(overall), || {
        format!("overall {:?} != {overall}", m.overall_agreement)
    })?;

    let (corpus, table) = common::refinement_fixture();
    let ids: Vec<String> = corpus.iter().map(|c| c.id.clone()).collect();
    let svc = common::service_with(corpus, table, EventLog::in_memory());
    let summary = svc
        .create_session(&CreateSession {
            conversation_ids: ids,
            reviewers_per_mode: 3,
        })
        .map_err(|e| e.to_string())?;
    let counts = svc.state().session(&summary.session_id).unwrap().slot_counts();
    ensure(counts.total == 240, || format!("{} slots", counts.total))?;
    Ok(format!(
        "{} cells exact, agreement {overall:.4}; 40 conversations give 240 slots",
        want.len()
    ))
}

/// Two-sided p of Student's t by Simpson integration of the density.
fn p_by_integration(t: f64, df: f64) -> f64 {
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let f = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let n = 20_000;
    let h = t.abs() / n as f64;
    let mut s = f(0.0) + f(t.abs());
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    (1.0 - 2.0 * s * h / 3.0).clamp(0.0, 1.0)
}

fn fairness_nulls(ctx: &mut Ctx) -> Outcome {
    let pl = pipeline(ctx)?;
    let cfg = GeneratorConfig {
        size: 4000,
        survey_rate: 1.0,
        demographic_sampling: DemographicSampling::Uniform,
        ..Default::default()
    };
    let corpus = generate_synthetic(&cfg, 2024).map_err(|e| e.to_string())?;
    let policy = ThresholdPolicy::global(0.25).unwrap();
    let scored = items(&pl.model, &corpus);
    let preds: Vec<TagSet> = scored.iter().map(|i| policy.apply(&i.scores)).collect();
    let truths: Vec<TagSet> = scored.iter().map(|i| i.truth).collect();
    let demo: Vec<_> = corpus.iter().map(|c| c.demographics.clone()).collect();
    let report = fairness_report(&preds, &truths, &demo, policy.provenance.clone()).map_err(|e| e.to_string())?;

    let min_count = report
        .categories
        .iter()
        .flat_map(|c| &c.subgroups)
        .map(|g| g.count)
        .min()
        .unwrap_or(0);
    ensure(report.categories.len() == DemographicCategory::ALL.len(), || {
        "a category was skipped".into()
    })?;
    ensure(min_count >= 300, || {
        format!("smallest subgroup has {min_count} conversations")
    })?;
    let mut worst_std = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut worst_p = 0.0f64;
    let mut tests = 0;
    let mut check_p = |t: &TTest| {
        tests += 1;
        worst_p = worst_p.max((t.p - p_by_integration(t.t, t.df)).abs());
    };
    for c in &report.categories {
        worst_std = worst_std.max(c.f1_std);
        for g in &c.subgroups {
            worst_gap = worst_gap.max((g.metrics.f1 - report.overall.f1).abs());
            if let Some(t) = &g.t_test {
                check_p(t);
            }
        }
        if let Some(t) = &c.t_test {
            check_p(t);
        }
    }
    let detail = format!(
        "overall F1 {:.3}; smallest subgroup {min_count}; max category std {worst_std:.4}; max subgroup gap {worst_gap:.4}; \
         {tests} t-tests, max |p - integrated p| {worst_p:.1e}",
        report.overall.f1
    );
    ensure(worst_std <= 0.05, || format!("std too large; {detail}"))?;
    ensure(worst_gap <= 0.05, || format!("subgroup gap too large; {detail}"))?;
    ensure(worst_p <= 1e-6, || format!("p disagrees with integration; {detail}"))?;
    Ok(detail)
}

fn drift_gate(ctx: &mut Ctx) -> Outcome {
    let pl = pipeline(ctx)?;
    let policy = ThresholdPolicy::global(0.25).unwrap();
    let eval = |items: &[ScoredItem]| evaluate(items, &policy).map_err(|e| e.to_string());

    // shift labels of test conversations one at a time until F1 falls 0.05
    let test = items(&pl.model, &pl.split.test);
    let reference = eval(&test)?;
    let mut shifted = test.clone();
    let mut moved = 0;
    let mut candidate = reference.clone();
    for i in 0..shifted.len() {
        if reference.sample.f1 - candidate.sample.f1 >= 0.05 {
            break;
        }
        let rotated: TagSet = shifted[i]
            .truth
            .iter()
            .map(|t| IssueTag::ALL[(t.index() + 1) % TAG_COUNT])
            .collect();
        shifted[i].truth = rotated;
        moved += 1;
        candidate = eval(&shifted)?;
    }
    let drop = reference.sample.f1 - candidate.sample.f1;
    ensure(drop >= 0.05, || format!("label shift only reached a drop of {drop:.4}"))?;
    let shifted_report = drift_report(&reference, &candidate, 0.02).map_err(|e| e.to_string())?;
    ensure(shifted_report.flag, || format!("flag not raised at F1 drop {drop:.4}"))?;

    // no shift: the held-out partitions against a fresh draw of the generator
    let mut held_out = pl.split.validation.clone();
    held_out.extend(pl.split.test.iter().cloned());
    let fresh = generate_synthetic(
        &GeneratorConfig {
            size: 5000,
            ..Default::default()
        },
        1,
    )
    .map_err(|e| e.to_string())?;
    let base = eval(&items(&pl.model, &held_out))?;
    let resplit = eval(&items(&pl.model, &fresh))?;
    let r = drift_report(&base, &resplit, 0.02).map_err(|e| e.to_string())?;
    let worst = r.precision.abs.max(r.recall.abs).max(r.f1.abs);
    let detail = format!(
        "{moved} shifted labels drop F1 by {drop:.4} and flag; unshifted deltas P {:+.4} R {:+.4} F1 {:+.4}, flag {} ({} vs {} conversations)",
        r.precision.change,
        r.recall.change,
        r.f1.change,
        r.flag,
        base.conversations,
        resplit.conversations
    );
    ensure(worst <= 0.02 && !r.flag, || {
        format!("unshifted batch drifted; {detail}")
    })?;
    let _ = &pl.corpus;
    Ok(detail)
}

fn refinement_direction(_: &mut Ctx) -> Outcome {
    let (svc, session) = common::completed_refinement_session(EventLog::in_memory());
    let out = svc.refine(&session).map_err(|e| e.to_string())?;
    let before = out.before.average.ok_or("no consensus before")?;
    let after = out.after.average.ok_or("no consensus after")?;
    let detail = format!("consensus precision {:.4} -> {:.4}", before.precision, after.precision);
    ensure(after.precision >= before.precision, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// service

fn http_get(addr: std::net::SocketAddr, path: &str) -> Result<(u16, String), String> {
    let mut stream = std::net::TcpStream::connect(addr).map_err(|e| e.to_string())?;
    write!(
        stream,
        "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n"
    )
    .map_err(|e| e.to_string())?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw).map_err(|e| e.to_string())?;
    let status = raw
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("bad response {raw:?}"))?;
    let body = raw
        .split_once("\r\n\r\n")
        .map(|(_, b)| b.to_string())
        .unwrap_or_default();
    Ok((status, body))
}

fn service_safety(ctx: &mut Ctx) -> Outcome {
    // replay after random interleavings
    let mut events = 0;
    for seed in 0..3 {
        let (svc, ids) = common::plain_service(6, EventLog::in_memory());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        common::random_operations(&svc, &ids, &mut rng, 500);
        let records = svc.records();
        events += records.len();
        let rebuilt =
            ServiceState::replay(ThresholdPolicy::global(0.25).unwrap(), &records).map_err(|e| e.to_string())?;
        ensure(rebuilt == *svc.state(), || format!("replay differs for seed {seed}"))?;
    }
    // and through a log file
    let path = ctx.dir.path().join("events.jsonl");
    let (live, ids) = common::plain_service(6, EventLog::open(&path).map_err(|e| e.to_string())?);
    common::random_operations(&live, &ids, &mut ChaCha8Rng::seed_from_u64(9), 500);
    let expected = live.state();
    drop(live);
    let (reopened, _) = common::plain_service(6, EventLog::open(&path).map_err(|e| e.to_string())?);
    ensure(*reopened.state() == *expected, || {
        "reopened log rebuilt a different state".into()
    })?;

    // two HTTP clients racing for the last slot
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let reps = 20;
    let mut blind_body = String::new();
    for rep in 0..reps {
        let (svc, ids) = common::plain_service(1, EventLog::in_memory());
        let session = svc
            .create_session(&CreateSession {
                conversation_ids: ids,
                reviewers_per_mode: 3,
            })
            .map_err(|e| e.to_string())?
            .session_id;
        svc.next_item(&session, "early-1", ReviewMode::Blind)
            .map_err(|e| e.to_string())?;
        svc.next_item(&session, "early-2", ReviewMode::Blind)
            .map_err(|e| e.to_string())?;
        let svc: Arc<ReviewService> = Arc::new(svc);
        let listener = rt
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .map_err(|e| e.to_string())?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        let app = tagtriage_service::http::router(svc.clone());
        let server = rt.spawn(async move { axum::serve(listener, app).await });
        let barrier = Arc::new(Barrier::new(2));
        let handles: Vec<_> = ["x", "y"]
            .into_iter()
            .map(|r| {
                let barrier = barrier.clone();
                let path = format!("/sessions/{session}/next?reviewer={r}&mode=blind");
                std::thread::spawn(move || {
                    barrier.wait();
                    http_get(addr, &path)
                })
            })
            .collect();
        let results: Vec<(u16, String)> = handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .collect::<Result<_, _>>()?;
        server.abort();
        let statuses: Vec<u16> = results.iter().map(|r| r.0).collect();
        ensure(
            statuses.iter().filter(|s| **s == 200).count() == 1 && statuses.contains(&410),
            || format!("rep {rep}: statuses {statuses:?}"),
        )?;
        let counts = svc.state().session(&session).unwrap().slot_counts();
        ensure(counts.claimed == 3, || {
            format!("rep {rep}: {} blind claims", counts.claimed)
        })?;
        blind_body = results.into_iter().find(|r| r.0 == 200).unwrap().1;
    }

    // blind payloads: committed schema, no prediction fields
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../service/schema/blind_view.schema.json");
    let committed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&schema_path).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(committed == blind_view_schema(), || {
        "blind view schema differs from the committed snapshot".into()
    })?;
    ensure(committed["additionalProperties"] == false, || {
        "blind schema allows extra fields".into()
    })?;
    let props: Vec<&String> = committed["properties"]
        .as_object()
        .ok_or("schema has no properties")?
        .keys()
        .collect();
    let payload: serde_json::Value = serde_json::from_str(&blind_body).map_err(|e| format!("{e}: {blind_body}"))?;
    let keys: Vec<&String> = payload
        .as_object()
        .ok_or("blind payload is not an object")?
        .keys()
        .collect();
    ensure(keys.iter().all(|k| props.contains(k)), || {
        format!("payload keys {keys:?} outside schema {props:?}")
    })?;
    let lower = format!(
        "{committed}{}",
        payload.as_object().unwrap().keys().cloned().collect::<String>()
    )
    .to_lowercase();
    for banned in ["predict", "score", "threshold", "policy"] {
        ensure(!lower.contains(banned), || {
            format!("blind schema or payload mentions {banned}")
        })?;
    }
    Ok(format!(
        "replay exact over 3 x 500 operations ({events} events) and a reopened file log; {reps}/{reps} HTTP races had one 200 and one 410; \
         blind payload keys {keys:?} match the schema snapshot"
    ))
}
