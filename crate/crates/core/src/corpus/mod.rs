//! Conversation data model, corpus file I/O, scrubbing, length capping,
//! statistics and train/validation/test splitting.

pub mod demographics;
pub mod synthetic;
pub mod tokenize;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::hash::Fnv64;
use crate::tags::{IssueTag, TagSet, TAG_COUNT};
use crate::triage::PriorityLevel;

pub use demographics::{DemographicCategory, DemographicSurvey};
pub use tokenize::{count_tokens, tokenize, SCRUB_TOKEN};

/// Input cap, in tokens, applied before scoring.
pub const DEFAULT_TOKEN_CAP: usize = 2000;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown tag {tag:?}")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("corpus is empty")]
    Empty,
    #[error("split ratios sum to {0}, expected 1")]
    BadRatios(f64),
    #[error("split ratios must be positive")]
    NonPositiveRatio,
    #[error("corpus has {0} conversations; splitting needs at least 10")]
    TooSmall(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    ServiceUser,
    Responder,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batch {
    #[default]
    Development,
    SilentTest,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<Turn>,
    pub true_tags: TagSet,
    pub priority: PriorityLevel,
    pub demographics: Option<DemographicSurvey>,
    pub batch: Batch,
}

impl Conversation {
    /// All turn texts joined with single spaces.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for (i, turn) in self.turns.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&turn.text);
        }
        out
    }

    /// Token count over all turns, both speakers.
    pub fn token_count(&self) -> usize {
        self.turns.iter().map(|t| count_tokens(&t.text)).sum()
    }

    /// First service-user message, falling back to the first turn.
    pub fn first_message(&self) -> &str {
        self.turns
            .iter()
            .find(|t| t.speaker == Speaker::ServiceUser)
            .or(self.turns.first())
            .map(|t| t.text.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TurnRecord {
    pub speaker: Speaker,
    pub text: String,
}

/// One line of the corpus file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub id: String,
    pub turns: Vec<TurnRecord>,
    pub tags: Vec<String>,
    pub priority: PriorityLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<DemographicSurvey>,
    #[serde(default)]
    pub batch: Batch,
}

impl From<&Conversation> for ConversationRecord {
    fn from(c: &Conversation) -> Self {
        ConversationRecord {
            id: c.id.clone(),
            turns: c
                .turns
                .iter()
                .map(|t| TurnRecord {
                    speaker: t.speaker,
                    text: t.text.clone(),
                })
                .collect(),
            tags: c.true_tags.iter().map(|t| t.display_name().to_string()).collect(),
            priority: c.priority,
            demographics: c.demographics.clone(),
            batch: c.batch,
        }
    }
}

impl ConversationRecord {
    fn into_conversation(self, line: usize) -> Result<Conversation, CorpusError> {
        if self.turns.is_empty() {
            return Err(CorpusError::Invalid {
                line,
                message: format!("conversation {:?} has no turns", self.id),
            });
        }
        let mut true_tags = TagSet::empty();
        for tag in &self.tags {
            let parsed =
                IssueTag::from_display_name(tag).ok_or_else(|| CorpusError::UnknownTag { line, tag: tag.clone() })?;
            true_tags.insert(parsed);
        }
        if true_tags.is_empty() {
            return Err(CorpusError::Invalid {
                line,
                message: format!("conversation {:?} has no tags", self.id),
            });
        }
        Ok(Conversation {
            id: self.id,
            turns: self
                .turns
                .into_iter()
                .enumerate()
                .map(|(index, t)| Turn {
                    speaker: t.speaker,
                    text: t.text,
                    index,
                })
                .collect(),
            true_tags,
            priority: self.priority,
            demographics: self.demographics,
            batch: self.batch,
        })
    }
}

/// Parse a line-delimited corpus. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Conversation>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ConversationRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(record.into_conversation(line_no)?);
    }
    Ok(out)
}

pub fn parse_corpus_str(text: &str) -> Result<Vec<Conversation>, CorpusError> {
    parse_corpus(text.as_bytes())
}

pub fn write_corpus<W: Write>(mut writer: W, corpus: &[Conversation]) -> std::io::Result<()> {
    for conv in corpus {
        let line = serde_json::to_string(&ConversationRecord::from(conv))?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// A name/location pattern to scrub.
#[derive(Debug, Clone)]
pub enum Matcher {
    Literal(String),
    Pattern(Regex),
}

impl Matcher {
    /// Case-insensitive whole-word match of any of `words`.
    pub fn words<I, S>(words: I) -> Result<Matcher, regex::Error>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let alternation: Vec<String> = words.into_iter().map(|w| regex::escape(w.as_ref())).collect();
        let re = Regex::new(&format!(r"(?i)\b(?:{})\b", alternation.join("|")))?;
        Ok(Matcher::Pattern(re))
    }

    fn replace(&self, text: &str) -> String {
        match self {
            Matcher::Literal(lit) if lit.is_empty() => text.to_string(),
            Matcher::Literal(lit) => text.replace(lit.as_str(), SCRUB_TOKEN),
            Matcher::Pattern(re) => {
                let mut out = String::with_capacity(text.len());
                let mut last = 0;
                for m in re.find_iter(text).filter(|m| !m.is_empty()) {
                    out.push_str(&text[last..m.start()]);
                    out.push_str(SCRUB_TOKEN);
                    last = m.end();
                }
                out.push_str(&text[last..]);
                out
            }
        }
    }
}

fn scrub_pass(text: &str, patterns: &[Matcher]) -> String {
    // Existing placeholders are never re-matched: only the text between them is scrubbed.
    let pieces: Vec<String> = text
        .split(SCRUB_TOKEN)
        .map(|piece| {
            patterns
                .iter()
                .fold(piece.to_string(), |acc, m| scrub_between_placeholders(&acc, m))
        })
        .collect();
    pieces.join(SCRUB_TOKEN)
}

fn scrub_between_placeholders(text: &str, m: &Matcher) -> String {
    let parts: Vec<String> = text.split(SCRUB_TOKEN).map(|p| m.replace(p)).collect();
    parts.join(SCRUB_TOKEN)
}

/// Replace every match of `patterns` with `[scrubbed]`. Runs to a fixed point,
/// so applying it twice gives the same result as once.
pub fn scrub(text: &str, patterns: &[Matcher]) -> String {
    let mut current = text.to_string();
    loop {
        let next = scrub_pass(&current, patterns);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// Keep the first `cap` tokens: whole trailing turns are dropped and the
/// boundary turn is cut mid-text. Turns left empty by the cut are removed.
pub fn truncate_to_cap(conv: &Conversation, cap: usize) -> Conversation {
    let cap = cap.max(1);
    if conv.token_count() <= cap {
        return conv.clone();
    }
    let mut remaining = cap;
    let mut turns = Vec::new();
    for turn in &conv.turns {
        if remaining == 0 {
            break;
        }
        let n = count_tokens(&turn.text);
        if n <= remaining {
            turns.push(turn.clone());
            remaining -= n;
        } else {
            turns.push(Turn {
                speaker: turn.speaker,
                text: tokenize::truncate_tokens(&turn.text, remaining).to_string(),
                index: turn.index,
            });
            remaining = 0;
        }
    }
    Conversation { turns, ..conv.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub conversations: usize,
    pub mean_tokens: f64,
    pub median_tokens: f64,
    pub pct_within_cap: f64,
    pub cap: usize,
    pub tag_histogram: [usize; TAG_COUNT],
    /// Entry `k` counts conversations carrying `k + 1` tags.
    pub tags_per_conversation_histogram: [usize; TAG_COUNT],
    pub priority_histogram: BTreeMap<PriorityLevel, usize>,
}

pub fn corpus_stats(corpus: &[Conversation]) -> Result<CorpusStats, CorpusError> {
    corpus_stats_with_cap(corpus, DEFAULT_TOKEN_CAP)
}

pub fn corpus_stats_with_cap(corpus: &[Conversation], cap: usize) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut lengths: Vec<usize> = corpus.iter().map(Conversation::token_count).collect();
    let n = lengths.len() as f64;
    let mean_tokens = lengths.iter().map(|&l| l as f64).sum::<f64>() / n;
    let within = lengths.iter().filter(|&&l| l <= cap).count();
    lengths.sort_unstable();
    let mid = lengths.len() / 2;
    let median_tokens = if lengths.len() % 2 == 0 {
        (lengths[mid - 1] + lengths[mid]) as f64 / 2.0
    } else {
        lengths[mid] as f64
    };

    let mut tag_histogram = [0usize; TAG_COUNT];
    let mut per_conv = [0usize; TAG_COUNT];
    let mut priority_histogram = BTreeMap::new();
    for conv in corpus {
        for tag in conv.true_tags.iter() {
            tag_histogram[tag.index()] += 1;
        }
        let k = conv.true_tags.len();
        if k > 0 {
            per_conv[k - 1] += 1;
        }
        *priority_histogram.entry(conv.priority).or_insert(0) += 1;
    }
    Ok(CorpusStats {
        conversations: corpus.len(),
        mean_tokens,
        median_tokens,
        pct_within_cap: within as f64 / n,
        cap,
        tag_histogram,
        tags_per_conversation_histogram: per_conv,
        priority_histogram,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratify {
    None,
    #[default]
    TagMultisetHash,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    pub stratify_by: Stratify,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: (0.6, 0.2, 0.2),
            seed: 0,
            stratify_by: Stratify::TagMultisetHash,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let (a, b, c) = self.ratios;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 {
            return Err(CorpusError::NonPositiveRatio);
        }
        let sum = a + b + c;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadRatios(sum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Conversation>,
    pub validation: Vec<Conversation>,
    pub test: Vec<Conversation>,
}

/// Per-split index lists into the input corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

fn tag_multiset_key(tags: TagSet) -> u64 {
    let mut h = Fnv64::new();
    for tag in tags.iter() {
        h.write(&[tag.index() as u8]);
    }
    h.finish()
}

/// Target sizes by largest remainder; they always sum to `n`.
fn target_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: [usize; 3] = [0; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut missing = n - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        sizes[i] += 1;
        missing -= 1;
    }
    sizes
}

pub fn stratified_split_indices(corpus: &[Conversation], spec: &SplitSpec) -> Result<SplitIndices, CorpusError> {
    spec.validate()?;
    if corpus.len() < 10 {
        return Err(CorpusError::TooSmall(corpus.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let order: Vec<usize> = match spec.stratify_by {
        Stratify::None => {
            let mut idx: Vec<usize> = (0..corpus.len()).collect();
            idx.shuffle(&mut rng);
            idx
        }
        Stratify::TagMultisetHash => {
            let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for (i, conv) in corpus.iter().enumerate() {
                groups.entry(tag_multiset_key(conv.true_tags)).or_default().push(i);
            }
            let mut idx = Vec::with_capacity(corpus.len());
            for mut members in groups.into_values() {
                members.shuffle(&mut rng);
                idx.extend(members);
            }
            idx
        }
    };

    // Deal the ordered sequence into splits, always serving the split
    // furthest behind its proportional quota. Each stratum's run of
    // consecutive items is thereby divided close to the target ratios.
    let n = corpus.len();
    let sizes = target_sizes(n, [spec.ratios.0, spec.ratios.1, spec.ratios.2]);
    let mut assigned = [0usize; 3];
    let mut buckets: [Vec<usize>; 3] = Default::default();
    for (pos, &item) in order.iter().enumerate() {
        let done = (pos + 1) as f64;
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for s in 0..3 {
            if assigned[s] >= sizes[s] {
                continue;
            }
            let deficit = done * sizes[s] as f64 / n as f64 - assigned[s] as f64;
            if deficit > best_deficit {
                best_deficit = deficit;
                best = s;
            }
        }
        assigned[best] += 1;
        buckets[best].push(item);
    }
    let [mut train, mut validation, mut test] = buckets;
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices {
        train,
        validation,
        test,
    })
}

/// Deterministic train/validation/test partition. Output preserves corpus order within each split.
pub fn stratified_split(corpus: &[Conversation], spec: &SplitSpec) -> Result<Split, CorpusError> {
    let idx = stratified_split_indices(corpus, spec)?;
    let pick = |v: &[usize]| v.iter().map(|&i| corpus[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: pick(&idx.train),
        validation: pick(&idx.validation),
        test: pick(&idx.test),
    })
}
