//! Response payloads. Blind and open items are separate types so a blind
//! payload has nowhere to put predictions.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use tagtriage_core::consensus::{ConsensusReport, ReviewMode};
use tagtriage_core::corpus::{Conversation, Speaker};
use tagtriage_core::decision::{PolicyProvenance, ThresholdPolicy};
use tagtriage_core::scorer::ScoreVector;
use tagtriage_core::{IssueTag, TagSet};

use crate::state::{SessionState, SlotCounts, SlotStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TurnView {
    /// "service_user" or "responder".
    pub speaker: String,
    pub text: String,
}

pub fn turn_views(conv: &Conversation) -> Vec<TurnView> {
    conv.turns
        .iter()
        .map(|t| TurnView {
            speaker: match t.speaker {
                Speaker::ServiceUser => "service_user",
                Speaker::Responder => "responder",
            }
            .to_string(),
            text: t.text.clone(),
        })
        .collect()
}

/// The 19 display names in canonical order.
pub fn tag_vocabulary() -> Vec<String> {
    IssueTag::ALL.iter().map(|t| t.display_name().to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum BlindMode {
    Blind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpenMode {
    Open,
}

/// A blind item: transcript and tag vocabulary only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BlindView {
    pub mode: BlindMode,
    pub session_id: String,
    pub conversation_id: String,
    pub turns: Vec<TurnView>,
    pub tag_vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenView {
    pub mode: OpenMode,
    pub session_id: String,
    pub conversation_id: String,
    pub turns: Vec<TurnView>,
    pub tag_vocabulary: Vec<String>,
    pub predicted_tags: TagSet,
}

/// Either view; the `mode` field tells them apart on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ItemView {
    Open(OpenView),
    Blind(BlindView),
}

impl ItemView {
    pub fn conversation_id(&self) -> &str {
        match self {
            ItemView::Open(v) => &v.conversation_id,
            ItemView::Blind(v) => &v.conversation_id,
        }
    }

    pub fn mode(&self) -> ReviewMode {
        match self {
            ItemView::Open(_) => ReviewMode::Open,
            ItemView::Blind(_) => ReviewMode::Blind,
        }
    }
}

/// JSON schema of the blind payload, as committed under `schema/`.
pub fn blind_view_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(BlindView)).expect("schema serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewerProgress {
    pub reviewer_id: String,
    pub claimed: usize,
    pub submitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub conversation_ids: Vec<String>,
    pub reviewers_per_mode: usize,
    pub open: SlotCounts,
    pub blind: SlotCounts,
    pub reviewers: Vec<ReviewerProgress>,
    pub base_policy: ThresholdPolicy,
    pub current_policy: ThresholdPolicy,
    pub refinements: usize,
}

impl SessionSummary {
    pub fn of(s: &SessionState) -> Self {
        let counts = |mode: ReviewMode| {
            let mut c = SlotCounts::default();
            for slot in s.slots.iter().filter(|x| x.mode == mode) {
                c.total += 1;
                match slot.status {
                    SlotStatus::Unclaimed => c.unclaimed += 1,
                    SlotStatus::Claimed { .. } => c.claimed += 1,
                    SlotStatus::Submitted { .. } => c.submitted += 1,
                }
            }
            c
        };
        let mut reviewers: std::collections::BTreeMap<&str, ReviewerProgress> = Default::default();
        for slot in &s.slots {
            let Some(r) = slot.status.reviewer() else { continue };
            let e = reviewers.entry(r).or_insert_with(|| ReviewerProgress {
                reviewer_id: r.to_string(),
                claimed: 0,
                submitted: 0,
            });
            match slot.status {
                SlotStatus::Claimed { .. } => e.claimed += 1,
                _ => e.submitted += 1,
            }
        }
        SessionSummary {
            session_id: s.session_id.clone(),
            conversation_ids: s.conversation_ids.clone(),
            reviewers_per_mode: s.reviewers_per_mode,
            open: counts(ReviewMode::Open),
            blind: counts(ReviewMode::Blind),
            reviewers: reviewers.into_values().collect(),
            base_policy: s.base_policy.clone(),
            current_policy: s.current_policy().clone(),
            refinements: s.refinements.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub session_id: String,
    pub conversation_id: String,
    pub reviewer_id: String,
    pub seq: u64,
    /// True when an identical annotation was already stored.
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: Option<String>,
    pub priority: String,
    /// Canonical tag order.
    pub scores: ScoreVector,
    pub tags: TagSet,
    pub policy: PolicyProvenance,
    pub policy_fingerprint: String,
    pub model_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub session_id: String,
    pub seq: u64,
    pub old: ThresholdPolicy,
    pub new: ThresholdPolicy,
    pub old_fingerprint: String,
    pub new_fingerprint: String,
    /// Model predictions under each policy against the blind annotations.
    pub before: ConsensusReport,
    pub after: ConsensusReport,
}
