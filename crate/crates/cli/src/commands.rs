//! Command implementations. Each reads its inputs through a [`Run`] so the
//! manifest records their hashes, and writes nothing time-dependent.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use tagtriage_core::attribution::{
    aggregate_keywords, bigram::preset_min_count, bigram_graph, internal_embeddings, parse_embeddings, pca_projection,
    HeuristicTagger, KeywordTable,
};
use tagtriage_core::consensus::{
    agreement_matrix, compare_sources, group_by_conversation, parse_annotations, reference_set, ConsensusCriterion,
    ConsensusReport, ReviewMode, ReviewerAnnotation,
};
use tagtriage_core::corpus::synthetic::generate_synthetic_with_lexicon;
use tagtriage_core::corpus::{
    corpus_stats_with_cap, parse_corpus_str, stratified_split, tokenize, write_corpus, Batch, Conversation,
};
use tagtriage_core::decision::{refine_per_class, sweep_global, updated_threshold_default, ThresholdPolicy};
use tagtriage_core::metrics::{
    drift_report, evaluate, fairness_report, per_tag_tsv, summary_tsv, EvalReport, ScoredItem, SubgroupReport,
};
use tagtriage_core::scorer::{export_scores, import_scores, train_ensemble, EnsembleScorer, ScoreVector, Scorer};
use tagtriage_core::triage::TriageLexicon;
use tagtriage_core::{IssueTag, TagSet};
use tagtriage_service::ServiceConfig;

use crate::cli::{Cli, Command, SplitSel};
use crate::error::{CliError, CliResult};
use crate::manifest::{sidecar, Run};
use crate::settings::Settings;

/// Global 0.25, used wherever a policy is needed and none was given.
pub const DEFAULT_TAU: f64 = 0.25;

/// Parse flags into settings and run the command.
pub fn run(cli: Cli) -> CliResult<()> {
    let settings = Settings::load(cli.global.config.as_deref())?.merge(cli.global.overrides());
    execute(&cli.command, &settings)
}

/// What the config hash covers. The output location is left out so the
/// same run into another directory hashes the same.
#[derive(Serialize)]
struct Effective<'a> {
    command: &'a Command,
    settings: &'a Settings,
}

pub fn execute(command: &Command, s: &Settings) -> CliResult<()> {
    let hashed = Settings { out: None, ..s.clone() };
    let mut run = Run::new(
        command.name(),
        &Effective {
            command,
            settings: &hashed,
        },
        s.seed,
    );
    let manifest_path = match command {
        Command::Generate { size } => generate(&mut run, s, *size)?,
        Command::Stats { cap } => match stats(&mut run, s, *cap)? {
            Some(p) => p,
            None => return Ok(()),
        },
        Command::Train => train(&mut run, s)?,
        Command::Score { split } => score(&mut run, s, *split)?,
        Command::Evaluate { split } => evaluate_cmd(&mut run, s, *split)?,
        Command::Fairness { split } => fairness(&mut run, s, *split)?,
        Command::Consensus { annotations } => consensus(&mut run, s, annotations)?,
        Command::Keywords {
            tag,
            steps,
            threshold,
            top,
            split,
        } => keywords(&mut run, s, *tag, *steps, *threshold, *top, *split)?,
        Command::Bigrams { keywords, min_count } => bigrams(&mut run, s, keywords, *min_count)?,
        Command::Project {
            keywords,
            embeddings,
            window,
            rank,
        } => project(&mut run, s, keywords, embeddings.as_deref(), *window, *rank)?,
        Command::Drift { tolerance } => drift(&mut run, s, *tolerance)?,
        Command::Calibrate {
            annotations,
            split,
            lo,
            hi,
            step,
        } => calibrate(&mut run, s, annotations.as_deref(), *split, (*lo, *hi, *step))?,
        Command::Serve { host, port, event_log } => return serve(s, host.clone(), *port, event_log.clone()),
    };
    run.finish(&manifest_path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// input helpers

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(v).expect("value serializes");
    text.push('\n');
    text.into_bytes()
}

fn out_file(s: &Settings) -> CliResult<PathBuf> {
    Ok(Settings::require(&s.out, "--out")?.to_path_buf())
}

fn out_dir(s: &Settings) -> CliResult<PathBuf> {
    let dir = Settings::require(&s.out, "--out")?.to_path_buf();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn load_corpus(run: &mut Run, s: &Settings) -> CliResult<Vec<Conversation>> {
    let path = Settings::require(&s.corpus, "--corpus")?;
    let text = run.read_string(path)?;
    parse_corpus_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn load_lexicon(run: &mut Run, s: &Settings) -> CliResult<TriageLexicon> {
    match &s.lexicon {
        Some(p) => {
            TriageLexicon::from_json(&run.read_string(p)?).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))
        }
        None => Ok(TriageLexicon::builtin()),
    }
}

fn load_model(run: &mut Run, s: &Settings) -> CliResult<EnsembleScorer> {
    let path = Settings::require(&s.model, "--model")?;
    EnsembleScorer::from_json(&run.read_string(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// `--policy`, or `fallback` when unset.
fn load_policy(run: &mut Run, s: &Settings, fallback: f64) -> CliResult<ThresholdPolicy> {
    match &s.policy {
        Some(p) => ThresholdPolicy::from_json(&run.read_string(p)?)
            .map_err(|e| CliError::Parse(format!("{}: {e}", p.display()))),
        None => Ok(ThresholdPolicy::global(fallback).expect("constant in range")),
    }
}

fn select(corpus: Vec<Conversation>, s: &Settings, which: SplitSel) -> CliResult<Vec<Conversation>> {
    if which == SplitSel::All {
        return Ok(corpus);
    }
    let split = stratified_split(&corpus, &s.split).map_err(CliError::precondition)?;
    Ok(match which {
        SplitSel::Train => split.train,
        SplitSel::Validation => split.validation,
        SplitSel::Test => split.test,
        SplitSel::All => unreachable!(),
    })
}

/// Scores for `convs` from `--scores` when given, otherwise from `--model`.
fn score_all(run: &mut Run, s: &Settings, convs: &[Conversation]) -> CliResult<Vec<ScoreVector>> {
    if let Some(path) = &s.scores {
        let bytes = run.read(path)?;
        let table = import_scores(bytes.as_slice()).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        return convs
            .iter()
            .map(|c| {
                table.get(&c.id).copied().ok_or_else(|| {
                    CliError::Precondition(format!("{}: no scores for conversation {:?}", path.display(), c.id))
                })
            })
            .collect();
    }
    if s.model.is_none() {
        return Err(CliError::Usage("--model or --scores is required".into()));
    }
    let model = load_model(run, s)?;
    Ok(convs.iter().map(|c| model.score(c)).collect())
}

fn scored_items(run: &mut Run, s: &Settings, convs: &[Conversation]) -> CliResult<Vec<ScoredItem>> {
    let scores = score_all(run, s, convs)?;
    Ok(convs
        .iter()
        .zip(scores)
        .map(|(c, scores)| ScoredItem {
            id: c.id.clone(),
            scores,
            truth: c.true_tags,
        })
        .collect())
}

fn load_annotations(run: &mut Run, path: &Path) -> CliResult<Vec<ReviewerAnnotation>> {
    let bytes = run.read(path)?;
    parse_annotations(bytes.as_slice()).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn f(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

// ---------------------------------------------------------------------------
// commands

fn generate(run: &mut Run, s: &Settings, size: Option<usize>) -> CliResult<PathBuf> {
    let out = out_file(s)?;
    let mut cfg = s.generate.clone();
    if let Some(n) = size {
        cfg.size = n;
    }
    let lexicon = load_lexicon(run, s)?;
    let corpus = generate_synthetic_with_lexicon(&cfg, s.seed(), &lexicon).map_err(CliError::precondition)?;
    let mut buf = Vec::new();
    write_corpus(&mut buf, &corpus).expect("writing to memory");
    run.write(&out, &buf)?;
    Ok(sidecar(&out))
}

fn stats(run: &mut Run, s: &Settings, cap: usize) -> CliResult<Option<PathBuf>> {
    let corpus = load_corpus(run, s)?;
    let stats = corpus_stats_with_cap(&corpus, cap).map_err(CliError::precondition)?;
    let json = to_json(&stats);
    match &s.out {
        Some(out) => {
            run.write(out, &json)?;
            Ok(Some(sidecar(out)))
        }
        None => {
            print!("{}", String::from_utf8_lossy(&json));
            Ok(None)
        }
    }
}

fn train(run: &mut Run, s: &Settings) -> CliResult<PathBuf> {
    let out = out_file(s)?;
    let corpus = load_corpus(run, s)?;
    let train = select(corpus, s, SplitSel::Train)?;
    let model = train_ensemble(&train, &s.train).map_err(CliError::precondition)?;
    run.write(&out, model.to_json().as_bytes())?;
    println!("model {} trained on {} conversations", model.fingerprint(), train.len());
    Ok(sidecar(&out))
}

fn score(run: &mut Run, s: &Settings, split: SplitSel) -> CliResult<PathBuf> {
    let out = out_file(s)?;
    let convs = select(load_corpus(run, s)?, s, split)?;
    let model = load_model(run, s)?;
    let scores: Vec<ScoreVector> = convs.iter().map(|c| model.score(c)).collect();
    let mut buf = Vec::new();
    export_scores(&mut buf, convs.iter().map(|c| c.id.as_str()).zip(&scores)).expect("writing to memory");
    run.write(&out, &buf)?;
    Ok(sidecar(&out))
}

/// The evaluation blocks: both global thresholds, the updated policy, and
/// `extra` when given.
pub fn evaluation_blocks(
    items: &[ScoredItem],
    extra: Option<&ThresholdPolicy>,
) -> Result<Vec<(String, EvalReport)>, tagtriage_core::metrics::MetricsError> {
    let mut policies = vec![
        (
            "global_0.50".to_string(),
            ThresholdPolicy::global(0.5).expect("constant in range"),
        ),
        (
            "global_0.25".to_string(),
            ThresholdPolicy::global(0.25).expect("constant in range"),
        ),
        ("updated".to_string(), updated_threshold_default()),
    ];
    if let Some(p) = extra {
        policies.push(("policy".to_string(), p.clone()));
    }
    policies
        .into_iter()
        .map(|(name, p)| Ok((name, evaluate(items, &p)?)))
        .collect()
}

fn evaluate_cmd(run: &mut Run, s: &Settings, split: SplitSel) -> CliResult<PathBuf> {
    let dir = out_dir(s)?;
    let convs = select(load_corpus(run, s)?, s, split)?;
    let items = scored_items(run, s, &convs)?;
    let extra = match &s.policy {
        Some(_) => Some(load_policy(run, s, DEFAULT_TAU)?),
        None => None,
    };
    let blocks = evaluation_blocks(&items, extra.as_ref()).map_err(CliError::precondition)?;
    for (name, report) in &blocks {
        run.write(&dir.join(format!("eval_{name}.json")), &to_json(report))?;
    }
    let refs: Vec<(&str, &EvalReport)> = blocks.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let summary = summary_tsv(&refs);
    run.write(&dir.join("summary.tsv"), summary.as_bytes())?;
    run.write(&dir.join("per_tag.tsv"), per_tag_tsv(&refs).as_bytes())?;
    print!("{summary}");
    Ok(dir.join("manifest.json"))
}

pub fn fairness_tsv(r: &SubgroupReport) -> String {
    let mut out = String::from("category\tsubgroup\tcount\tprecision\trecall\tf1\taccuracy_19\tt\tdf\tp\n");
    let _ = writeln!(
        out,
        "overall\tall\t\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t\t\t",
        r.overall.precision, r.overall.recall, r.overall.f1, r.overall_accuracy
    );
    for c in &r.categories {
        for g in &c.subgroups {
            let t = g.t_test.as_ref();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}",
                c.category,
                g.value,
                g.count,
                g.metrics.precision,
                g.metrics.recall,
                g.metrics.f1,
                g.accuracy,
                f(t.map(|t| t.t)),
                f(t.map(|t| t.df)),
                f(t.map(|t| t.p))
            );
        }
    }
    out
}

fn fairness(run: &mut Run, s: &Settings, split: SplitSel) -> CliResult<PathBuf> {
    let dir = out_dir(s)?;
    let convs = select(load_corpus(run, s)?, s, split)?;
    if convs.iter().all(|c| c.demographics.is_none()) {
        return Err(CliError::Precondition(
            "no conversation carries demographic survey data".into(),
        ));
    }
    let items = scored_items(run, s, &convs)?;
    let policy = load_policy(run, s, DEFAULT_TAU)?;
    let preds: Vec<TagSet> = items.iter().map(|i| policy.apply(&i.scores)).collect();
    let truths: Vec<TagSet> = items.iter().map(|i| i.truth).collect();
    let demo: Vec<_> = convs.iter().map(|c| c.demographics.clone()).collect();
    let report = fairness_report(&preds, &truths, &demo, policy.provenance.clone()).map_err(CliError::precondition)?;
    run.write(&dir.join("fairness.json"), &to_json(&report))?;
    run.write(&dir.join("fairness.tsv"), fairness_tsv(&report).as_bytes())?;
    Ok(dir.join("manifest.json"))
}

fn consensus_rows(out: &mut String, source: &str, r: &ConsensusReport) {
    for c in &r.criteria {
        let m = c.metrics.as_ref();
        let _ = writeln!(
            out,
            "{source}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.criterion,
            c.evaluated,
            f(m.map(|m| m.precision)),
            f(m.map(|m| m.recall)),
            f(m.map(|m| m.f1)),
            f(c.satisfaction_rate)
        );
    }
    let m = r.average.as_ref();
    let _ = writeln!(
        out,
        "{source}\taverage\t\t{}\t{}\t{}\t",
        f(m.map(|m| m.precision)),
        f(m.map(|m| m.recall)),
        f(m.map(|m| m.f1))
    );
}

fn consensus(run: &mut Run, s: &Settings, annotations: &Path) -> CliResult<PathBuf> {
    let dir = out_dir(s)?;
    let corpus = load_corpus(run, s)?;
    let annotations = load_annotations(run, annotations)?;
    let open = group_by_conversation(&annotations, ReviewMode::Open);
    let blind = group_by_conversation(&annotations, ReviewMode::Blind);
    if open.is_empty() && blind.is_empty() {
        return Err(CliError::Precondition("no annotations".into()));
    }
    let by_id: BTreeMap<&str, &Conversation> = corpus.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut ids: Vec<&str> = open.keys().chain(blind.keys()).map(String::as_str).collect();
    ids.sort_unstable();
    ids.dedup();
    let convs: Vec<Conversation> =
        ids.iter()
            .map(|id| {
                by_id.get(id).map(|c| (*c).clone()).ok_or_else(|| {
                    CliError::Precondition(format!("annotated conversation {id:?} is not in the corpus"))
                })
            })
            .collect::<CliResult<_>>()?;
    let scores = score_all(run, s, &convs)?;
    let policy = load_policy(run, s, DEFAULT_TAU)?;
    let predicted: BTreeMap<String, TagSet> = convs
        .iter()
        .zip(&scores)
        .map(|(c, sc)| (c.id.clone(), policy.apply(sc)))
        .collect();

    if !open.is_empty() {
        let matrix = agreement_matrix(&open, &predicted).map_err(CliError::precondition)?;
        run.write(&dir.join("matrix.json"), &to_json(&matrix))?;
        run.write(&dir.join("matrix.tsv"), matrix.to_tsv().as_bytes())?;
    }
    if !blind.is_empty() {
        let pick = |m: &BTreeMap<String, TagSet>| -> BTreeMap<String, TagSet> {
            blind.keys().map(|id| (id.clone(), m[id])).collect()
        };
        let original: BTreeMap<String, TagSet> = convs.iter().map(|c| (c.id.clone(), c.true_tags)).collect();
        let cmp = compare_sources(&pick(&predicted), &pick(&original), &blind).map_err(CliError::precondition)?;
        let mut tsv = String::from("source\tcriterion\tevaluated\tprecision\trecall\tf1\tsatisfaction_rate\n");
        consensus_rows(&mut tsv, "model", &cmp.model);
        consensus_rows(&mut tsv, "original", &cmp.original);
        run.write(&dir.join("consensus.json"), &to_json(&cmp))?;
        run.write(&dir.join("consensus.tsv"), tsv.as_bytes())?;
    }
    Ok(dir.join("manifest.json"))
}

fn keywords(
    run: &mut Run,
    s: &Settings,
    tag: IssueTag,
    steps: usize,
    threshold: Option<f64>,
    top: Option<usize>,
    split: SplitSel,
) -> CliResult<PathBuf> {
    let dir = out_dir(s)?;
    let convs = select(load_corpus(run, s)?, s, split)?;
    let subset: Vec<Conversation> = convs.into_iter().filter(|c| c.true_tags.contains(tag)).collect();
    if subset.is_empty() {
        return Err(CliError::Precondition(format!("no conversation carries {tag}")));
    }
    let model = load_model(run, s)?;
    let table = aggregate_keywords(
        &subset,
        &model,
        tag,
        &s.keywords,
        &HeuristicTagger,
        steps,
        threshold,
        top,
    )
    .map_err(CliError::precondition)?;
    run.write(&dir.join("keywords.json"), &to_json(&table))?;
    run.write(&dir.join("keywords.tsv"), table.to_tsv().as_bytes())?;
    Ok(dir.join("manifest.json"))
}

fn load_keyword_table(run: &mut Run, path: &Path) -> CliResult<KeywordTable> {
    serde_json::from_str(&run.read_string(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn bigrams(run: &mut Run, s: &Settings, keywords: &Path, min_count: Option<usize>) -> CliResult<PathBuf> {
    let dir = out_dir(s)?;
    let table = load_keyword_table(run, keywords)?;
    let min = min_count.or_else(|| preset_min_count(table.target)).unwrap_or(1);
    let graph = bigram_graph(&table.per_conversation, min).map_err(CliError::precondition)?;
    run.write(&dir.join("bigrams.dot"), graph.to_dot().as_bytes())?;
    run.write(&dir.join("bigrams.jsonl"), graph.to_jsonl().as_bytes())?;
    Ok(dir.join("manifest.json"))
}

fn project(
    run: &mut Run,
    s: &Settings,
    keywords: &Path,
    embeddings: Option<&Path>,
    window: usize,
    rank: usize,
) -> CliResult<PathBuf> {
    let dir = out_dir(s)?;
    let table = load_keyword_table(run, keywords)?;
    let words: Vec<String> = table.rows.iter().map(|(w, _)| w.clone()).collect();
    let emb = match embeddings {
        Some(p) => {
            let bytes = run.read(p)?;
            parse_embeddings(bytes.as_slice()).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?
        }
        None => {
            if s.corpus.is_none() {
                return Err(CliError::Usage("--embeddings or --corpus is required".into()));
            }
            let docs: Vec<Vec<String>> = load_corpus(run, s)?.iter().map(|c| tokenize(&c.text())).collect();
            internal_embeddings(&docs, &words, window, rank, s.seed()).map_err(CliError::precondition)?
        }
    };
    let projection = pca_projection(&words, &emb, s.seed()).map_err(CliError::precondition)?;
    run.write(&dir.join("projection.json"), &to_json(&projection))?;
    run.write(&dir.join("projection.tsv"), projection.to_tsv().as_bytes())?;
    Ok(dir.join("manifest.json"))
}

fn drift(run: &mut Run, s: &Settings, tolerance: f64) -> CliResult<PathBuf> {
    if !(0.0..1.0).contains(&tolerance) {
        return Err(CliError::Usage("--tolerance must be in [0, 1)".into()));
    }
    let dir = out_dir(s)?;
    let corpus = load_corpus(run, s)?;
    let (dev, silent): (Vec<Conversation>, Vec<Conversation>) =
        corpus.into_iter().partition(|c| c.batch == Batch::Development);
    if dev.is_empty() || silent.is_empty() {
        return Err(CliError::Precondition(
            "drift needs both development and silent_test conversations".into(),
        ));
    }
    let policy = load_policy(run, s, DEFAULT_TAU)?;
    let reference = evaluate(&scored_items(run, s, &dev)?, &policy).map_err(CliError::precondition)?;
    let candidate = evaluate(&scored_items(run, s, &silent)?, &policy).map_err(CliError::precondition)?;
    let report = drift_report(&reference, &candidate, tolerance).map_err(CliError::precondition)?;
    let mut tsv = String::from("metric\treference\tcandidate\tchange\n");
    for (name, d) in [
        ("precision", report.precision),
        ("recall", report.recall),
        ("f1", report.f1),
        ("accuracy_19", report.accuracy_19),
        ("exact_accuracy", report.exact_accuracy),
    ] {
        let _ = writeln!(tsv, "{name}\t{:.6}\t{:.6}\t{:.6}", d.reference, d.candidate, d.change);
    }
    run.write(&dir.join("drift.json"), &to_json(&report))?;
    run.write(&dir.join("drift.tsv"), tsv.as_bytes())?;
    println!("drift flag: {}", report.flag);
    Ok(dir.join("manifest.json"))
}

fn calibrate(
    run: &mut Run,
    s: &Settings,
    annotations: Option<&Path>,
    split: SplitSel,
    grid: (f64, f64, f64),
) -> CliResult<PathBuf> {
    let dir = out_dir(s)?;
    let corpus = load_corpus(run, s)?;
    let policy = match annotations {
        None => {
            let convs = select(corpus, s, split)?;
            let items = scored_items(run, s, &convs)?;
            let scored: Vec<(ScoreVector, TagSet)> = items.iter().map(|i| (i.scores, i.truth)).collect();
            let sweep = sweep_global(&scored, grid.0, grid.1, grid.2).map_err(|e| CliError::Usage(e.to_string()))?;
            let mut tsv = String::from("tau\tprecision\trecall\tf1\n");
            for row in &sweep.table {
                let m = &row.metrics;
                let _ = writeln!(tsv, "{:.6}\t{:.6}\t{:.6}\t{:.6}", row.tau, m.precision, m.recall, m.f1);
            }
            run.write(&dir.join("sweep.tsv"), tsv.as_bytes())?;
            ThresholdPolicy::global(sweep.best).expect("grid point in range")
        }
        Some(path) => {
            let blind = group_by_conversation(&load_annotations(run, path)?, ReviewMode::Blind);
            if blind.is_empty() {
                return Err(CliError::Precondition("no blind annotations".into()));
            }
            let by_id: BTreeMap<&str, &Conversation> = corpus.iter().map(|c| (c.id.as_str(), c)).collect();
            let convs: Vec<Conversation> = blind
                .keys()
                .map(|id| {
                    by_id.get(id.as_str()).map(|c| (*c).clone()).ok_or_else(|| {
                        CliError::Precondition(format!("annotated conversation {id:?} is not in the corpus"))
                    })
                })
                .collect::<CliResult<_>>()?;
            let scores = score_all(run, s, &convs)?;
            let mut scored = Vec::with_capacity(convs.len());
            for (c, sc) in convs.iter().zip(scores) {
                let reference =
                    reference_set(&blind[&c.id], ConsensusCriterion::PA12Maj).map_err(CliError::precondition)?;
                scored.push((sc, reference));
            }
            let base = load_policy(run, s, DEFAULT_TAU)?;
            let new = refine_per_class(&scored, &base).map_err(CliError::precondition)?;
            let mut tsv = String::from("tag\told\tnew\n");
            for tag in IssueTag::ALL {
                let _ = writeln!(tsv, "{tag}\t{:.6}\t{:.6}", base.get(tag), new.get(tag));
            }
            run.write(&dir.join("thresholds.tsv"), tsv.as_bytes())?;
            new
        }
    };
    run.write(&dir.join("policy.json"), format!("{}\n", policy.to_json()).as_bytes())?;
    Ok(dir.join("manifest.json"))
}

fn serve(s: &Settings, host: Option<String>, port: Option<u16>, event_log: Option<PathBuf>) -> CliResult<()> {
    let mut cfg: ServiceConfig = s.serve.clone();
    cfg.apply_env(|k| std::env::var(k).ok())
        .map_err(|e| CliError::Parse(e.to_string()))?;
    for (slot, v) in [
        (&mut cfg.corpus, &s.corpus),
        (&mut cfg.model, &s.model),
        (&mut cfg.lexicon, &s.lexicon),
        (&mut cfg.policy, &s.policy),
    ] {
        if v.is_some() {
            *slot = v.clone();
        }
    }
    if let Some(h) = host {
        cfg.host = h;
    }
    if let Some(p) = port {
        cfg.port = p;
    }
    if event_log.is_some() {
        cfg.event_log = event_log;
    }
    let addr = cfg.addr().map_err(|e| CliError::Usage(e.to_string()))?;
    let svc = cfg.build().map_err(|e| CliError::Parse(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(tagtriage_service::serve(Arc::new(svc), addr))
        .map_err(|e| CliError::Io(format!("{addr}: {e}")))
}
