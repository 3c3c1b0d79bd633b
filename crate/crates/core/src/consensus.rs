//! Expert review: annotations, the open-review agreement matrix, and the
//! five consensus criteria used to score candidate tag sets against blind
//! annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::metrics::{set_prf, unpaired_t_test, MetricsError, SampleMetrics, TTest};
use crate::tags::{IssueTag, TagSet};

/// Reviewers per conversation in each mode.
pub const REVIEWERS_PER_MODE: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsensusError {
    #[error("conversation {conversation}: expected {REVIEWERS_PER_MODE} {mode} annotations, got {got}")]
    WrongCount {
        conversation: String,
        mode: ReviewMode,
        got: usize,
    },
    #[error("annotation by {reviewer} on {conversation}: {reason}")]
    Invalid {
        reviewer: String,
        conversation: String,
        reason: String,
    },
    #[error("no candidate tags for conversation {0}")]
    MissingCandidate(String),
    #[error("candidates cover different conversations")]
    CoverageMismatch,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewMode {
    Open,
    Blind,
}

impl fmt::Display for ReviewMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReviewMode::Open => "open",
            ReviewMode::Blind => "blind",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Judgment {
    /// Verdicts on the shown predictions plus tags the reviewer found missing.
    Open {
        agreed_tags: TagSet,
        disagreed_tags: TagSet,
        #[serde(default)]
        missing_tags: TagSet,
    },
    Blind {
        primary_tags: TagSet,
        #[serde(default)]
        secondary_tags: TagSet,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReviewerAnnotation {
    pub reviewer_id: String,
    pub conversation_id: String,
    #[serde(flatten)]
    pub judgment: Judgment,
}

impl ReviewerAnnotation {
    pub fn mode(&self) -> ReviewMode {
        match self.judgment {
            Judgment::Open { .. } => ReviewMode::Open,
            Judgment::Blind { .. } => ReviewMode::Blind,
        }
    }

    /// Check the structural rules. Open annotations are checked against
    /// the predictions that were shown.
    pub fn validate(&self, shown: TagSet) -> Result<(), ConsensusError> {
        let fail = |reason: String| {
            Err(ConsensusError::Invalid {
                reviewer: self.reviewer_id.clone(),
                conversation: self.conversation_id.clone(),
                reason,
            })
        };
        match &self.judgment {
            Judgment::Open {
                agreed_tags,
                disagreed_tags,
                missing_tags,
            } => {
                if !agreed_tags.is_disjoint(*disagreed_tags) {
                    return fail(format!(
                        "tags both agreed and disagreed: {}",
                        agreed_tags.intersection(*disagreed_tags)
                    ));
                }
                if agreed_tags.union(*disagreed_tags) != shown {
                    return fail(format!(
                        "agreed and disagreed tags must cover the shown predictions {shown}, got {}",
                        agreed_tags.union(*disagreed_tags)
                    ));
                }
                if !missing_tags.is_disjoint(shown) {
                    return fail(format!(
                        "missing tags were already predicted: {}",
                        missing_tags.intersection(shown)
                    ));
                }
            }
            Judgment::Blind {
                primary_tags,
                secondary_tags,
            } => {
                if primary_tags.is_empty() {
                    return fail("primary tags must be non-empty".into());
                }
                if !primary_tags.is_disjoint(*secondary_tags) {
                    return fail(format!(
                        "tags both primary and secondary: {}",
                        primary_tags.intersection(*secondary_tags)
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_annotations<R: BufRead>(reader: R) -> Result<Vec<ReviewerAnnotation>, ConsensusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ConsensusError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let a = serde_json::from_str(&line).map_err(|e| ConsensusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(a);
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(mut writer: W, annotations: &[ReviewerAnnotation]) -> std::io::Result<()> {
    for a in annotations {
        writeln!(writer, "{}", serde_json::to_string(a).expect("annotation serializes"))?;
    }
    Ok(())
}

/// Annotations of one mode grouped by conversation, in input order.
pub fn group_by_conversation(
    annotations: &[ReviewerAnnotation],
    mode: ReviewMode,
) -> BTreeMap<String, Vec<ReviewerAnnotation>> {
    let mut out: BTreeMap<String, Vec<ReviewerAnnotation>> = BTreeMap::new();
    for a in annotations.iter().filter(|a| a.mode() == mode) {
        out.entry(a.conversation_id.clone()).or_default().push(a.clone());
    }
    out
}

fn require_three(
    conversation: &str,
    annotations: &[ReviewerAnnotation],
    mode: ReviewMode,
) -> Result<(), ConsensusError> {
    let got = annotations.iter().filter(|a| a.mode() == mode).count();
    if got != REVIEWERS_PER_MODE || annotations.len() != REVIEWERS_PER_MODE {
        return Err(ConsensusError::WrongCount {
            conversation: conversation.to_string(),
            mode,
            got,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// agreement matrix

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementCell {
    pub conversation_id: String,
    pub tag: IssueTag,
    pub predicted: bool,
    /// Reviewers agreeing; only counted for predicted tags.
    pub a_count: u8,
    /// Reviewers marking the tag missing; only counted for unpredicted tags.
    pub m_count: u8,
}

impl AgreementCell {
    /// "A#" for predicted tags, "M#" for unpredicted tags flagged missing,
    /// empty otherwise.
    pub fn label(&self) -> String {
        if self.predicted {
            format!("A{}", self.a_count)
        } else if self.m_count > 0 {
            format!("M{}", self.m_count)
        } else {
            String::new()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    /// Conversation order follows the id order; tags in canonical order.
    pub conversations: Vec<String>,
    pub cells: Vec<AgreementCell>,
    pub agreements: usize,
    /// Reviewer x predicted-tag decisions.
    pub decisions: usize,
    /// `agreements / decisions`; `None` when nothing was predicted.
    pub overall_agreement: Option<f64>,
}

impl AgreementMatrix {
    pub fn cell(&self, conversation_id: &str, tag: IssueTag) -> Option<&AgreementCell> {
        self.cells
            .iter()
            .find(|c| c.conversation_id == conversation_id && c.tag == tag)
    }

    /// Rows are tags, columns conversations, cells A#/M# labels.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("tag");
        for c in &self.conversations {
            let _ = write!(out, "\t{c}");
        }
        out.push('\n');
        for tag in IssueTag::ALL {
            out.push_str(tag.display_name());
            for c in &self.conversations {
                let label = self.cell(c, tag).map(AgreementCell::label).unwrap_or_default();
                let _ = write!(out, "\t{label}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn agreement_matrix(
    open: &BTreeMap<String, Vec<ReviewerAnnotation>>,
    predictions: &BTreeMap<String, TagSet>,
) -> Result<AgreementMatrix, ConsensusError> {
    let mut cells = Vec::new();
    let (mut agreements, mut decisions) = (0usize, 0usize);
    for (conv, annotations) in open {
        require_three(conv, annotations, ReviewMode::Open)?;
        let predicted = *predictions
            .get(conv)
            .ok_or_else(|| ConsensusError::MissingCandidate(conv.clone()))?;
        for a in annotations {
            a.validate(predicted)?;
        }
        for tag in IssueTag::ALL {
            let (mut a_count, mut m_count) = (0u8, 0u8);
            for a in annotations {
                if let Judgment::Open {
                    agreed_tags,
                    missing_tags,
                    ..
                } = &a.judgment
                {
                    if predicted.contains(tag) && agreed_tags.contains(tag) {
                        a_count += 1;
                    }
                    if !predicted.contains(tag) && missing_tags.contains(tag) {
                        m_count += 1;
                    }
                }
            }
            if predicted.contains(tag) {
                agreements += usize::from(a_count);
                decisions += REVIEWERS_PER_MODE;
            }
            cells.push(AgreementCell {
                conversation_id: conv.clone(),
                tag,
                predicted: predicted.contains(tag),
                a_count,
                m_count,
            });
        }
    }
    Ok(AgreementMatrix {
        conversations: open.keys().cloned().collect(),
        cells,
        agreements,
        decisions,
        overall_agreement: (decisions > 0).then(|| agreements as f64 / decisions as f64),
    })
}

// ---------------------------------------------------------------------------
// consensus criteria

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConsensusCriterion {
    /// Primary for all three reviewers.
    FA1,
    /// Primary for at least two.
    PA1Maj,
    /// Primary or secondary for at least two.
    PA12Maj,
    /// Primary for at least one.
    FA1AtLeast1,
    /// Primary or secondary for at least one.
    FA12AtLeast1,
}

impl ConsensusCriterion {
    pub const ALL: [ConsensusCriterion; 5] = [
        ConsensusCriterion::FA1,
        ConsensusCriterion::PA1Maj,
        ConsensusCriterion::PA12Maj,
        ConsensusCriterion::FA1AtLeast1,
        ConsensusCriterion::FA12AtLeast1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConsensusCriterion::FA1 => "FA1",
            ConsensusCriterion::PA1Maj => "PA1Maj",
            ConsensusCriterion::PA12Maj => "PA12Maj",
            ConsensusCriterion::FA1AtLeast1 => "FA1AtLeast1",
            ConsensusCriterion::FA12AtLeast1 => "FA12AtLeast1",
        }
    }

    fn votes_needed(self) -> usize {
        match self {
            ConsensusCriterion::FA1 => 3,
            ConsensusCriterion::PA1Maj | ConsensusCriterion::PA12Maj => 2,
            ConsensusCriterion::FA1AtLeast1 | ConsensusCriterion::FA12AtLeast1 => 1,
        }
    }

    fn counts_secondary(self) -> bool {
        matches!(self, ConsensusCriterion::PA12Maj | ConsensusCriterion::FA12AtLeast1)
    }

    /// Binary reading: FA1 needs every unanimous tag in the candidate; the
    /// others need any overlap with the reference.
    pub fn satisfied(self, candidate: TagSet, reference: TagSet) -> bool {
        match self {
            ConsensusCriterion::FA1 => reference.is_subset(candidate),
            _ => !candidate.is_disjoint(reference),
        }
    }
}

impl fmt::Display for ConsensusCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ConsensusCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConsensusCriterion::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown consensus criterion {s:?}"))
    }
}

/// Tags meeting `criterion` over three blind annotations. May be empty.
pub fn reference_set(blind: &[ReviewerAnnotation], criterion: ConsensusCriterion) -> Result<TagSet, ConsensusError> {
    let conv = blind.first().map_or("", |a| a.conversation_id.as_str());
    require_three(conv, blind, ReviewMode::Blind)?;
    let mut votes = [0usize; crate::tags::TAG_COUNT];
    for a in blind {
        a.validate(TagSet::default())?;
        if let Judgment::Blind {
            primary_tags,
            secondary_tags,
        } = &a.judgment
        {
            let held = if criterion.counts_secondary() {
                primary_tags.union(*secondary_tags)
            } else {
                *primary_tags
            };
            for t in held.iter() {
                votes[t.index()] += 1;
            }
        }
    }
    Ok(IssueTag::ALL
        .iter()
        .copied()
        .filter(|t| votes[t.index()] >= criterion.votes_needed())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: ConsensusCriterion,
    /// Means over conversations with a non-empty reference set.
    pub metrics: Option<SampleMetrics>,
    pub evaluated: usize,
    /// Conversations whose reference set was empty.
    pub skipped: Vec<String>,
    /// Share of evaluated conversations meeting the binary reading.
    pub satisfaction_rate: Option<f64>,
    pub per_conversation_f1: BTreeMap<String, f64>,
}

pub fn consensus_compare(
    candidates: &BTreeMap<String, TagSet>,
    blind: &BTreeMap<String, Vec<ReviewerAnnotation>>,
    criterion: ConsensusCriterion,
) -> Result<CriterionResult, ConsensusError> {
    let (mut p, mut r, mut f, mut sat) = (0.0, 0.0, 0.0, 0usize);
    let mut skipped = Vec::new();
    let mut per_conversation_f1 = BTreeMap::new();
    for (conv, annotations) in blind {
        let reference = reference_set(annotations, criterion)?;
        if reference.is_empty() {
            skipped.push(conv.clone());
            continue;
        }
        let cand = *candidates
            .get(conv)
            .ok_or_else(|| ConsensusError::MissingCandidate(conv.clone()))?;
        let (a, b, c) = set_prf(cand, reference);
        p += a;
        r += b;
        f += c;
        sat += usize::from(criterion.satisfied(cand, reference));
        per_conversation_f1.insert(conv.clone(), c);
    }
    let evaluated = per_conversation_f1.len();
    let n = evaluated as f64;
    Ok(CriterionResult {
        criterion,
        metrics: (evaluated > 0).then(|| SampleMetrics {
            precision: p / n,
            recall: r / n,
            f1: f / n,
        }),
        evaluated,
        skipped,
        satisfaction_rate: (evaluated > 0).then(|| sat as f64 / n),
        per_conversation_f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub criteria: Vec<CriterionResult>,
    /// Mean over the criteria that evaluated at least one conversation.
    pub average: Option<SampleMetrics>,
}

impl ConsensusReport {
    pub fn get(&self, criterion: ConsensusCriterion) -> &CriterionResult {
        self.criteria
            .iter()
            .find(|c| c.criterion == criterion)
            .expect("all criteria present")
    }

    /// Per conversation, the F1 averaged over the criteria that evaluated it.
    pub fn averaged_f1_per_conversation(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for c in &self.criteria {
            for (conv, f1) in &c.per_conversation_f1 {
                let e = acc.entry(conv.clone()).or_default();
                e.0 += f1;
                e.1 += 1;
            }
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }
}

/// All five criteria plus their average.
pub fn consensus_all(
    candidates: &BTreeMap<String, TagSet>,
    blind: &BTreeMap<String, Vec<ReviewerAnnotation>>,
) -> Result<ConsensusReport, ConsensusError> {
    let criteria = ConsensusCriterion::ALL
        .iter()
        .map(|c| consensus_compare(candidates, blind, *c))
        .collect::<Result<Vec<_>, _>>()?;
    let present: Vec<SampleMetrics> = criteria.iter().filter_map(|c| c.metrics).collect();
    let average = (!present.is_empty()).then(|| {
        let n = present.len() as f64;
        SampleMetrics {
            precision: present.iter().map(|m| m.precision).sum::<f64>() / n,
            recall: present.iter().map(|m| m.recall).sum::<f64>() / n,
            f1: present.iter().map(|m| m.f1).sum::<f64>() / n,
        }
    });
    Ok(ConsensusReport { criteria, average })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceComparison {
    pub model: ConsensusReport,
    pub original: ConsensusReport,
    /// Welch test on the per-conversation criterion-averaged F1 values.
    pub t_test: TTest,
}

/// Score model predictions and original labels against the same blind
/// annotations.
pub fn compare_sources(
    model: &BTreeMap<String, TagSet>,
    original: &BTreeMap<String, TagSet>,
    blind: &BTreeMap<String, Vec<ReviewerAnnotation>>,
) -> Result<SourceComparison, ConsensusError> {
    let keys = |m: &BTreeMap<String, TagSet>| m.keys().cloned().collect::<BTreeSet<_>>();
    if keys(model) != keys(original) {
        return Err(ConsensusError::CoverageMismatch);
    }
    let a = consensus_all(model, blind)?;
    let b = consensus_all(original, blind)?;
    let fa: Vec<f64> = a.averaged_f1_per_conversation().into_values().collect();
    let fb: Vec<f64> = b.averaged_f1_per_conversation().into_values().collect();
    let t_test = unpaired_t_test(&fa, &fb)?;
    Ok(SourceComparison {
        model: a,
        original: b,
        t_test,
    })
}
