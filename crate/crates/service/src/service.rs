//! The review service engine. Writes go through one mutex that appends to
//! the event log and folds the record into the state; reads take the last
//! published snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, MutexGuard, OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use tagtriage_core::consensus::{
    agreement_matrix, compare_sources, consensus_all, reference_set, ConsensusCriterion, ReviewMode,
    ReviewerAnnotation, REVIEWERS_PER_MODE,
};
use tagtriage_core::corpus::{Batch, Conversation, Speaker, Turn};
use tagtriage_core::decision::{refine_per_class, ThresholdPolicy};
use tagtriage_core::metrics::{drift_report, evaluate, fairness_report, ScoredItem, DEFAULT_DRIFT_TOLERANCE};
use tagtriage_core::scorer::{ScoreVector, Scorer};
use tagtriage_core::triage::{assign_priority, TriageLexicon};
use tagtriage_core::TagSet;

use crate::error::ServiceError;
use crate::events::{Event, EventLog, EventRecord};
use crate::state::{ClaimPlan, ServiceState, SubmitPlan};
use crate::views::{
    tag_vocabulary, turn_views, Ack, BlindMode, BlindView, ItemView, OpenMode, OpenView, Prediction, RefineOutcome,
    SessionSummary,
};

/// Criterion whose reference sets drive threshold refinement.
pub const REFINE_CRITERION: ConsensusCriterion = ConsensusCriterion::PA12Maj;

/// Everything the service reads but never writes.
pub struct ServiceContext {
    pub corpus: Vec<Conversation>,
    pub scorer: Option<Arc<dyn Scorer>>,
    pub lexicon: TriageLexicon,
    /// Active policy until a refinement replaces it.
    pub initial_policy: ThresholdPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub conversation_ids: Vec<String>,
    #[serde(default = "default_reviewers")]
    pub reviewers_per_mode: usize,
}

fn default_reviewers() -> usize {
    REVIEWERS_PER_MODE
}

/// A report body: JSON, or tab-separated text for the matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Json(serde_json::Value),
    Tsv(String),
}

struct Writer {
    log: EventLog,
    state: ServiceState,
}

pub struct ReviewService {
    ctx: ServiceContext,
    index: BTreeMap<String, usize>,
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<ServiceState>>,
    corpus_scores: OnceLock<Vec<ScoredItem>>,
}

fn to_json<T: Serialize>(value: &T) -> Result<serde_json::Value, ServiceError> {
    serde_json::to_value(value).map_err(|e| ServiceError::Internal(e.to_string()))
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ServiceError {
    ServiceError::InvalidPayload {
        field: Some(field.into()),
        message: message.into(),
    }
}

impl ReviewService {
    /// Rebuild state from whatever `log` already holds.
    pub fn new(ctx: ServiceContext, log: EventLog) -> Result<Self, ServiceError> {
        let mut index = BTreeMap::new();
        for (i, c) in ctx.corpus.iter().enumerate() {
            if index.insert(c.id.clone(), i).is_some() {
                return Err(ServiceError::BadRequest(format!(
                    "corpus repeats conversation id {}",
                    c.id
                )));
            }
        }
        let state = ServiceState::replay(ctx.initial_policy.clone(), log.records())?;
        Ok(ReviewService {
            snapshot: RwLock::new(Arc::new(state.clone())),
            writer: Mutex::new(Writer { log, state }),
            ctx,
            index,
            corpus_scores: OnceLock::new(),
        })
    }

    pub fn context(&self) -> &ServiceContext {
        &self.ctx
    }

    /// Latest committed state.
    pub fn state(&self) -> Arc<ServiceState> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Every committed record, in order.
    pub fn records(&self) -> Vec<EventRecord> {
        self.lock().log.records().to_vec()
    }

    fn lock(&self) -> MutexGuard<'_, Writer> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn scorer(&self) -> Result<&dyn Scorer, ServiceError> {
        self.ctx.scorer.as_deref().ok_or(ServiceError::NoModel)
    }

    /// Append `event`, fold it in and publish the new snapshot. The event is
    /// applied to a copy first so a rejected event never reaches the log.
    fn commit(&self, w: &mut Writer, event: Event) -> Result<EventRecord, ServiceError> {
        let mut next = w.state.clone();
        let probe = EventRecord {
            seq: w.log.last_seq() + 1,
            timestamp_ms: 0,
            event: event.clone(),
        };
        next.apply(&probe)?;
        let record = w.log.append(event)?;
        w.state = next;
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(w.state.clone());
        Ok(record)
    }

    pub fn predict(&self, body: &[u8]) -> Result<Prediction, ServiceError> {
        let scorer = self.scorer()?;
        let conv = parse_predict_payload(body, &self.ctx.lexicon)?;
        let scores = scorer.score(&conv);
        let state = self.state();
        let policy = &state.active_policy;
        Ok(Prediction {
            id: (!conv.id.is_empty()).then(|| conv.id.clone()),
            priority: conv.priority.as_str().to_string(),
            tags: policy.apply(&scores),
            scores,
            policy: policy.provenance.clone(),
            policy_fingerprint: policy.fingerprint(),
            model_fingerprint: scorer.fingerprint(),
        })
    }

    pub fn create_session(&self, req: &CreateSession) -> Result<SessionSummary, ServiceError> {
        if req.conversation_ids.is_empty() {
            return Err(invalid("conversation_ids", "must not be empty"));
        }
        if req.reviewers_per_mode != REVIEWERS_PER_MODE {
            return Err(invalid(
                "reviewers_per_mode",
                format!("consensus criteria are defined for {REVIEWERS_PER_MODE} reviewers per mode"),
            ));
        }
        let mut seen = BTreeSet::new();
        let dups: BTreeSet<&String> = req.conversation_ids.iter().filter(|id| !seen.insert(*id)).collect();
        if !dups.is_empty() {
            let list: Vec<&str> = dups.into_iter().map(String::as_str).collect();
            return Err(invalid(
                "conversation_ids",
                format!("duplicate ids: {}", list.join(", ")),
            ));
        }
        let missing: Vec<String> = req
            .conversation_ids
            .iter()
            .filter(|id| !self.index.contains_key(*id))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(ServiceError::UnknownConversations(missing));
        }
        let scorer = self.scorer()?;
        let scores: BTreeMap<String, ScoreVector> = req
            .conversation_ids
            .iter()
            .map(|id| (id.clone(), scorer.score(&self.ctx.corpus[self.index[id]])))
            .collect();
        let original_tags = req
            .conversation_ids
            .iter()
            .map(|id| (id.clone(), self.ctx.corpus[self.index[id]].true_tags))
            .collect();

        let mut w = self.lock();
        let policy = w.state.active_policy.clone();
        let predictions = scores.iter().map(|(id, s)| (id.clone(), policy.apply(s))).collect();
        let session_id = w.state.next_session_id();
        self.commit(
            &mut w,
            Event::SessionCreated {
                session_id: session_id.clone(),
                conversation_ids: req.conversation_ids.clone(),
                reviewers_per_mode: req.reviewers_per_mode,
                predictions,
                scores,
                original_tags,
                policy,
            },
        )?;
        Ok(SessionSummary::of(w.state.session(&session_id)?))
    }

    pub fn session(&self, session_id: &str) -> Result<SessionSummary, ServiceError> {
        Ok(SessionSummary::of(self.state().session(session_id)?))
    }

    /// Claim (or return the already held) slot for `reviewer_id` in `mode`.
    pub fn next_item(&self, session_id: &str, reviewer_id: &str, mode: ReviewMode) -> Result<ItemView, ServiceError> {
        let mut w = self.lock();
        let slot = match w.state.plan_claim(session_id, reviewer_id, mode)? {
            ClaimPlan::Held(i) => i,
            ClaimPlan::Claim(event) => {
                let Event::SlotClaimed { slot, .. } = event else {
                    unreachable!("claim plans carry claim events")
                };
                self.commit(&mut w, event)?;
                slot
            }
        };
        let session = w.state.session(session_id)?;
        let conversation_id = session.slots[slot].conversation_id.clone();
        let conv = &self.ctx.corpus[self.index[&conversation_id]];
        let turns = turn_views(conv);
        Ok(match mode {
            ReviewMode::Open => ItemView::Open(OpenView {
                mode: OpenMode::Open,
                session_id: session_id.to_string(),
                predicted_tags: session.predictions[&conversation_id],
                conversation_id,
                turns,
                tag_vocabulary: tag_vocabulary(),
            }),
            ReviewMode::Blind => ItemView::Blind(BlindView {
                mode: BlindMode::Blind,
                session_id: session_id.to_string(),
                conversation_id,
                turns,
                tag_vocabulary: tag_vocabulary(),
            }),
        })
    }

    pub fn submit(&self, session_id: &str, annotation: &ReviewerAnnotation) -> Result<Ack, ServiceError> {
        let mut w = self.lock();
        let seq = match w.state.plan_submit(session_id, annotation)? {
            SubmitPlan::Duplicate(seq) => {
                return Ok(ack(session_id, annotation, seq, true));
            }
            SubmitPlan::Submit(event) => self.commit(&mut w, event)?.seq,
        };
        Ok(ack(session_id, annotation, seq, false))
    }

    /// Refine the session's creation policy from its blind annotations.
    /// Repeating a refinement recomputes from the same base.
    pub fn refine(&self, session_id: &str) -> Result<RefineOutcome, ServiceError> {
        let mut w = self.lock();
        let session = w.state.session(session_id)?;
        let outstanding = session.outstanding(ReviewMode::Blind);
        if !outstanding.is_empty() {
            return Err(ServiceError::Incomplete(outstanding));
        }
        let blind = session.complete(ReviewMode::Blind);
        let mut scored_reference = Vec::with_capacity(session.conversation_ids.len());
        for id in &session.conversation_ids {
            let reference =
                reference_set(&blind[id], REFINE_CRITERION).map_err(|e| ServiceError::Internal(e.to_string()))?;
            scored_reference.push((session.scores[id], reference));
        }
        let old = session.base_policy.clone();
        let new = refine_per_class(&scored_reference, &old).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let under = |p: &ThresholdPolicy| -> BTreeMap<String, TagSet> {
            session.scores.iter().map(|(id, s)| (id.clone(), p.apply(s))).collect()
        };
        let report =
            |p: &ThresholdPolicy| consensus_all(&under(p), &blind).map_err(|e| ServiceError::Internal(e.to_string()));
        let before = report(&old)?;
        let after = report(&new)?;
        let record = self.commit(
            &mut w,
            Event::PolicyRefined {
                session_id: session_id.to_string(),
                old: old.clone(),
                new: new.clone(),
            },
        )?;
        Ok(RefineOutcome {
            session_id: session_id.to_string(),
            seq: record.seq,
            old_fingerprint: old.fingerprint(),
            new_fingerprint: new.fingerprint(),
            old,
            new,
            before,
            after,
        })
    }

    fn scored_corpus(&self) -> Result<&[ScoredItem], ServiceError> {
        if self.ctx.corpus.is_empty() {
            return Err(ServiceError::MissingPrerequisite("a loaded corpus".into()));
        }
        let scorer = self.scorer()?;
        Ok(self.corpus_scores.get_or_init(|| {
            self.ctx
                .corpus
                .iter()
                .map(|c| ScoredItem {
                    id: c.id.clone(),
                    scores: scorer.score(c),
                    truth: c.true_tags,
                })
                .collect()
        }))
    }

    fn batch_items(&self, batch: Option<Batch>) -> Result<Vec<ScoredItem>, ServiceError> {
        let items = self.scored_corpus()?;
        let picked: Vec<ScoredItem> = items
            .iter()
            .zip(&self.ctx.corpus)
            .filter(|(_, c)| batch.is_none_or(|b| c.batch == b))
            .map(|(i, _)| i.clone())
            .collect();
        if picked.is_empty() {
            let name = match batch {
                Some(Batch::Development) => "development conversations",
                Some(Batch::SilentTest) => "silent_test conversations",
                None => "conversations",
            };
            return Err(ServiceError::MissingPrerequisite(name.into()));
        }
        Ok(picked)
    }

    /// `kind` is one of eval, fairness, drift, consensus, matrix. Consensus
    /// and matrix need `session`; the matrix honours `format=tsv`.
    pub fn report(&self, kind: &str, params: &BTreeMap<String, String>) -> Result<Report, ServiceError> {
        let precondition = |e: &dyn std::fmt::Display| ServiceError::MissingPrerequisite(e.to_string());
        let state = self.state();
        match kind {
            "eval" => {
                let batch = match params.get("batch").map(String::as_str) {
                    None | Some("all") => None,
                    Some("development") => Some(Batch::Development),
                    Some("silent_test") => Some(Batch::SilentTest),
                    Some(other) => return Err(invalid("batch", format!("unknown batch {other:?}"))),
                };
                let items = self.batch_items(batch)?;
                let report = evaluate(&items, &state.active_policy).map_err(|e| precondition(&e))?;
                Ok(Report::Json(to_json(&report)?))
            }
            "fairness" => {
                let items = self.scored_corpus()?;
                if self.ctx.corpus.iter().all(|c| c.demographics.is_none()) {
                    return Err(ServiceError::MissingPrerequisite("demographic survey data".into()));
                }
                let preds: Vec<TagSet> = items.iter().map(|i| state.active_policy.apply(&i.scores)).collect();
                let truths: Vec<TagSet> = items.iter().map(|i| i.truth).collect();
                let demo: Vec<_> = self.ctx.corpus.iter().map(|c| c.demographics.clone()).collect();
                let report = fairness_report(&preds, &truths, &demo, state.active_policy.provenance.clone())
                    .map_err(|e| precondition(&e))?;
                Ok(Report::Json(to_json(&report)?))
            }
            "drift" => {
                let tolerance = match params.get("tolerance") {
                    None => DEFAULT_DRIFT_TOLERANCE,
                    Some(t) => t
                        .parse::<f64>()
                        .ok()
                        .filter(|t| (0.0..1.0).contains(t))
                        .ok_or_else(|| invalid("tolerance", "must be a number in [0, 1)"))?,
                };
                let reference = evaluate(&self.batch_items(Some(Batch::Development))?, &state.active_policy)
                    .map_err(|e| precondition(&e))?;
                let candidate = evaluate(&self.batch_items(Some(Batch::SilentTest))?, &state.active_policy)
                    .map_err(|e| precondition(&e))?;
                let report = drift_report(&reference, &candidate, tolerance).map_err(|e| precondition(&e))?;
                Ok(Report::Json(to_json(&report)?))
            }
            "consensus" => {
                let session = state.session(session_param(params)?)?;
                let blind = session.complete(ReviewMode::Blind);
                if blind.is_empty() {
                    return Err(ServiceError::MissingPrerequisite(
                        "a conversation with all blind annotations submitted".into(),
                    ));
                }
                let policy = session.current_policy();
                let model = session
                    .scores
                    .iter()
                    .map(|(id, s)| (id.clone(), policy.apply(s)))
                    .collect();
                let report = compare_sources(&model, &session.original_tags, &blind).map_err(|e| precondition(&e))?;
                Ok(Report::Json(to_json(&report)?))
            }
            "matrix" => {
                let session = state.session(session_param(params)?)?;
                let open = session.complete(ReviewMode::Open);
                let matrix = agreement_matrix(&open, &session.predictions).map_err(|e| precondition(&e))?;
                match params.get("format").map(String::as_str) {
                    None | Some("json") => Ok(Report::Json(to_json(&matrix)?)),
                    Some("tsv") => Ok(Report::Tsv(matrix.to_tsv())),
                    Some(other) => Err(invalid("format", format!("unknown format {other:?}"))),
                }
            }
            other => Err(ServiceError::UnknownReport(other.to_string())),
        }
    }
}

fn session_param(params: &BTreeMap<String, String>) -> Result<&str, ServiceError> {
    params
        .get("session")
        .map(String::as_str)
        .ok_or_else(|| ServiceError::MissingPrerequisite("the session query parameter".into()))
}

fn ack(session_id: &str, a: &ReviewerAnnotation, seq: u64, duplicate: bool) -> Ack {
    Ack {
        session_id: session_id.to_string(),
        conversation_id: a.conversation_id.clone(),
        reviewer_id: a.reviewer_id.clone(),
        seq,
        duplicate,
    }
}

/// Parse `{"id"?: string, "turns": [{"speaker", "text"}]}`, naming the
/// offending field on failure.
pub fn parse_predict_payload(body: &[u8], lexicon: &TriageLexicon) -> Result<Conversation, ServiceError> {
    let value: serde_json::Value = serde_json::from_slice(body).map_err(|e| ServiceError::InvalidPayload {
        field: None,
        message: format!("not valid JSON: {e}"),
    })?;
    let obj = value.as_object().ok_or_else(|| invalid("$", "expected an object"))?;
    let id = match obj.get("id") {
        None | Some(serde_json::Value::Null) => String::new(),
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(_) => return Err(invalid("id", "expected a string")),
    };
    let turns = obj
        .get("turns")
        .ok_or_else(|| invalid("turns", "missing field"))?
        .as_array()
        .ok_or_else(|| invalid("turns", "expected an array"))?;
    if turns.is_empty() {
        return Err(invalid("turns", "must not be empty"));
    }
    let mut out = Vec::with_capacity(turns.len());
    for (index, t) in turns.iter().enumerate() {
        let field = |name: &str| format!("turns[{index}].{name}");
        let t = t
            .as_object()
            .ok_or_else(|| invalid(format!("turns[{index}]"), "expected an object"))?;
        let speaker = match t.get("speaker").map(|s| s.as_str()) {
            None => return Err(invalid(field("speaker"), "missing field")),
            Some(Some("service_user")) => Speaker::ServiceUser,
            Some(Some("responder")) => Speaker::Responder,
            Some(_) => return Err(invalid(field("speaker"), "expected \"service_user\" or \"responder\"")),
        };
        let text = match t.get("text") {
            None => return Err(invalid(field("text"), "missing field")),
            Some(v) => v.as_str().ok_or_else(|| invalid(field("text"), "expected a string"))?,
        };
        out.push(Turn {
            speaker,
            text: text.to_string(),
            index,
        });
    }
    let mut conv = Conversation {
        id,
        turns: out,
        true_tags: TagSet::default(),
        priority: tagtriage_core::triage::PriorityLevel::NoGroundTruth,
        demographics: None,
        batch: Batch::default(),
    };
    conv.priority = assign_priority(conv.first_message(), lexicon);
    Ok(conv)
}
