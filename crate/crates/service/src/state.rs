//! Review-session state, rebuilt by folding events in sequence order.
//!
//! Commands are planned against a state (yielding the event to append, or
//! an error) and events are applied to produce the next state. Replay uses
//! the same `apply`, so live and rebuilt state cannot diverge.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tagtriage_core::consensus::{ReviewMode, ReviewerAnnotation};
use tagtriage_core::decision::ThresholdPolicy;
use tagtriage_core::scorer::ScoreVector;
use tagtriage_core::TagSet;

use crate::error::ServiceError;
use crate::events::{Event, EventRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SlotStatus {
    Unclaimed,
    Claimed {
        reviewer_id: String,
    },
    Submitted {
        reviewer_id: String,
        annotation: ReviewerAnnotation,
        seq: u64,
    },
}

impl SlotStatus {
    pub fn reviewer(&self) -> Option<&str> {
        match self {
            SlotStatus::Unclaimed => None,
            SlotStatus::Claimed { reviewer_id } | SlotStatus::Submitted { reviewer_id, .. } => Some(reviewer_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub conversation_id: String,
    pub mode: ReviewMode,
    /// Position among this conversation's slots of the same mode.
    pub index: usize,
    pub status: SlotStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub seq: u64,
    pub old: ThresholdPolicy,
    pub new: ThresholdPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub conversation_ids: Vec<String>,
    pub reviewers_per_mode: usize,
    pub predictions: BTreeMap<String, TagSet>,
    pub scores: BTreeMap<String, ScoreVector>,
    pub original_tags: BTreeMap<String, TagSet>,
    /// Policy the shown predictions were made under.
    pub base_policy: ThresholdPolicy,
    pub refinements: Vec<Refinement>,
    /// Open slots then blind; within a mode, slot index major and
    /// conversation minor, so claims spread round-robin.
    pub slots: Vec<Slot>,
}

impl SessionState {
    pub fn current_policy(&self) -> &ThresholdPolicy {
        self.refinements.last().map_or(&self.base_policy, |r| &r.new)
    }

    pub fn submitted(&self, mode: ReviewMode) -> impl Iterator<Item = &ReviewerAnnotation> {
        self.slots
            .iter()
            .filter(move |s| s.mode == mode)
            .filter_map(|s| match &s.status {
                SlotStatus::Submitted { annotation, .. } => Some(annotation),
                _ => None,
            })
    }

    /// Submitted annotations of `mode`, for conversations where every slot of that mode is in.
    pub fn complete(&self, mode: ReviewMode) -> BTreeMap<String, Vec<ReviewerAnnotation>> {
        let mut by_conv: BTreeMap<String, Vec<ReviewerAnnotation>> = BTreeMap::new();
        for a in self.submitted(mode) {
            by_conv.entry(a.conversation_id.clone()).or_default().push(a.clone());
        }
        by_conv.retain(|_, v| v.len() == self.reviewers_per_mode);
        for v in by_conv.values_mut() {
            v.sort_by(|a, b| a.reviewer_id.cmp(&b.reviewer_id));
        }
        by_conv
    }

    /// Slots of `mode` not yet submitted, as `conversation#index`.
    pub fn outstanding(&self, mode: ReviewMode) -> Vec<String> {
        self.slots
            .iter()
            .filter(|s| s.mode == mode && !matches!(s.status, SlotStatus::Submitted { .. }))
            .map(|s| format!("{}#{}", s.conversation_id, s.index))
            .collect()
    }

    pub fn slot_counts(&self) -> SlotCounts {
        let mut c = SlotCounts::default();
        for s in &self.slots {
            c.total += 1;
            match s.status {
                SlotStatus::Unclaimed => c.unclaimed += 1,
                SlotStatus::Claimed { .. } => c.claimed += 1,
                SlotStatus::Submitted { .. } => c.submitted += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotCounts {
    pub total: usize,
    pub unclaimed: usize,
    pub claimed: usize,
    pub submitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceState {
    pub sessions: BTreeMap<String, SessionState>,
    /// Policy for `/predict`; the latest refinement, else the configured one.
    pub active_policy: ThresholdPolicy,
    pub last_seq: u64,
}

/// Result of planning a claim.
#[derive(Debug, Clone, PartialEq)]
pub enum ClaimPlan {
    /// The reviewer already holds this unsubmitted slot.
    Held(usize),
    Claim(Event),
}

/// Result of planning a submission.
#[derive(Debug, Clone, PartialEq)]
pub enum SubmitPlan {
    /// Identical annotation already stored under this sequence number.
    Duplicate(u64),
    Submit(Event),
}

fn corrupt(seq: u64, msg: impl Into<String>) -> ServiceError {
    ServiceError::Log(format!("event {seq}: {}", msg.into()))
}

impl ServiceState {
    pub fn new(active_policy: ThresholdPolicy) -> Self {
        ServiceState {
            sessions: BTreeMap::new(),
            active_policy,
            last_seq: 0,
        }
    }

    /// Fold `records` into a fresh state.
    pub fn replay<'a>(
        initial_policy: ThresholdPolicy,
        records: impl IntoIterator<Item = &'a EventRecord>,
    ) -> Result<Self, ServiceError> {
        let mut state = ServiceState::new(initial_policy);
        for r in records {
            state.apply(r)?;
        }
        Ok(state)
    }

    pub fn session(&self, id: &str) -> Result<&SessionState, ServiceError> {
        self.sessions
            .get(id)
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))
    }

    pub fn next_session_id(&self) -> String {
        format!("session-{}", self.sessions.len() + 1)
    }

    pub fn plan_claim(&self, session_id: &str, reviewer_id: &str, mode: ReviewMode) -> Result<ClaimPlan, ServiceError> {
        if reviewer_id.trim().is_empty() {
            return Err(ServiceError::BadRequest("reviewer id must not be empty".into()));
        }
        let session = self.session(session_id)?;
        let held = session.slots.iter().position(|s| {
            s.mode == mode && matches!(&s.status, SlotStatus::Claimed { reviewer_id: r } if r == reviewer_id)
        });
        if let Some(i) = held {
            return Ok(ClaimPlan::Held(i));
        }
        // a reviewer sees each conversation at most once, in either mode
        let touched = |conv: &str| {
            session
                .slots
                .iter()
                .any(|s| s.conversation_id == conv && s.status.reviewer() == Some(reviewer_id))
        };
        let free = session
            .slots
            .iter()
            .position(|s| s.mode == mode && s.status == SlotStatus::Unclaimed && !touched(&s.conversation_id));
        match free {
            Some(i) => Ok(ClaimPlan::Claim(Event::SlotClaimed {
                session_id: session_id.to_string(),
                slot: i,
                conversation_id: session.slots[i].conversation_id.clone(),
                mode,
                reviewer_id: reviewer_id.to_string(),
            })),
            None => Err(ServiceError::Exhausted {
                reviewer: reviewer_id.to_string(),
                mode: mode.to_string(),
            }),
        }
    }

    pub fn plan_submit(&self, session_id: &str, annotation: &ReviewerAnnotation) -> Result<SubmitPlan, ServiceError> {
        let session = self.session(session_id)?;
        let conv = &annotation.conversation_id;
        let Some(&shown) = session.predictions.get(conv) else {
            return Err(ServiceError::Validation(format!(
                "conversation {conv} is not in session {session_id}"
            )));
        };
        let mode = annotation.mode();
        let slot = session.slots.iter().position(|s| {
            s.mode == mode && &s.conversation_id == conv && s.status.reviewer() == Some(annotation.reviewer_id.as_str())
        });
        let Some(i) = slot else {
            return Err(ServiceError::Conflict(format!(
                "reviewer {} holds no {mode} slot for {conv}",
                annotation.reviewer_id
            )));
        };
        match &session.slots[i].status {
            SlotStatus::Submitted {
                annotation: stored,
                seq,
                ..
            } if stored == annotation => {
                return Ok(SubmitPlan::Duplicate(*seq));
            }
            SlotStatus::Submitted { .. } => {
                return Err(ServiceError::Conflict(format!(
                    "slot {conv}#{} already submitted",
                    session.slots[i].index
                )));
            }
            _ => {}
        }
        let shown = if mode == ReviewMode::Open {
            shown
        } else {
            TagSet::default()
        };
        annotation
            .validate(shown)
            .map_err(|e| ServiceError::Validation(e.to_string()))?;
        Ok(SubmitPlan::Submit(Event::AnnotationSubmitted {
            session_id: session_id.to_string(),
            slot: i,
            annotation: annotation.clone(),
        }))
    }

    /// Apply one committed record. Errors mean the log disagrees with the
    /// rules the planners enforce.
    pub fn apply(&mut self, record: &EventRecord) -> Result<(), ServiceError> {
        let seq = record.seq;
        if seq != self.last_seq + 1 {
            return Err(corrupt(seq, format!("expected sequence {}", self.last_seq + 1)));
        }
        match &record.event {
            Event::SessionCreated {
                session_id,
                conversation_ids,
                reviewers_per_mode,
                predictions,
                scores,
                original_tags,
                policy,
            } => {
                if self.sessions.contains_key(session_id) {
                    return Err(corrupt(seq, format!("session {session_id} exists")));
                }
                let mut slots = Vec::new();
                for mode in [ReviewMode::Open, ReviewMode::Blind] {
                    for index in 0..*reviewers_per_mode {
                        for conv in conversation_ids {
                            slots.push(Slot {
                                conversation_id: conv.clone(),
                                mode,
                                index,
                                status: SlotStatus::Unclaimed,
                            });
                        }
                    }
                }
                self.sessions.insert(
                    session_id.clone(),
                    SessionState {
                        session_id: session_id.clone(),
                        conversation_ids: conversation_ids.clone(),
                        reviewers_per_mode: *reviewers_per_mode,
                        predictions: predictions.clone(),
                        scores: scores.clone(),
                        original_tags: original_tags.clone(),
                        base_policy: policy.clone(),
                        refinements: Vec::new(),
                        slots,
                    },
                );
            }
            Event::SlotClaimed {
                session_id,
                slot,
                reviewer_id,
                ..
            } => {
                let s = self
                    .sessions
                    .get_mut(session_id)
                    .and_then(|s| s.slots.get_mut(*slot))
                    .ok_or_else(|| corrupt(seq, "claim of unknown slot"))?;
                if s.status != SlotStatus::Unclaimed {
                    return Err(corrupt(seq, "slot claimed twice"));
                }
                s.status = SlotStatus::Claimed {
                    reviewer_id: reviewer_id.clone(),
                };
            }
            Event::AnnotationSubmitted {
                session_id,
                slot,
                annotation,
            } => {
                let s = self
                    .sessions
                    .get_mut(session_id)
                    .and_then(|s| s.slots.get_mut(*slot))
                    .ok_or_else(|| corrupt(seq, "submission to unknown slot"))?;
                match &s.status {
                    SlotStatus::Claimed { reviewer_id } if *reviewer_id == annotation.reviewer_id => {}
                    _ => return Err(corrupt(seq, "submission to a slot the reviewer does not hold")),
                }
                s.status = SlotStatus::Submitted {
                    reviewer_id: annotation.reviewer_id.clone(),
                    annotation: annotation.clone(),
                    seq,
                };
            }
            Event::PolicyRefined { session_id, old, new } => {
                let s = self
                    .sessions
                    .get_mut(session_id)
                    .ok_or_else(|| corrupt(seq, "refinement of unknown session"))?;
                s.refinements.push(Refinement {
                    seq,
                    old: old.clone(),
                    new: new.clone(),
                });
                self.active_policy = new.clone();
            }
        }
        self.last_seq = seq;
        Ok(())
    }
}
