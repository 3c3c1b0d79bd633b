//! Append-only event log, one JSON record per line.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tagtriage_core::consensus::{ReviewMode, ReviewerAnnotation};
use tagtriage_core::decision::ThresholdPolicy;
use tagtriage_core::scorer::ScoreVector;
use tagtriage_core::TagSet;

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session_id: String,
        conversation_ids: Vec<String>,
        reviewers_per_mode: usize,
        /// Tags shown to open reviewers, under `policy`.
        predictions: BTreeMap<String, TagSet>,
        scores: BTreeMap<String, ScoreVector>,
        /// Labels the conversations arrived with.
        original_tags: BTreeMap<String, TagSet>,
        policy: ThresholdPolicy,
    },
    SlotClaimed {
        session_id: String,
        slot: usize,
        conversation_id: String,
        mode: ReviewMode,
        reviewer_id: String,
    },
    AnnotationSubmitted {
        session_id: String,
        slot: usize,
        annotation: ReviewerAnnotation,
    },
    PolicyRefined {
        session_id: String,
        old: ThresholdPolicy,
        new: ThresholdPolicy,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Records in memory, mirrored to a file when one is configured.
#[derive(Debug)]
pub struct EventLog {
    path: Option<PathBuf>,
    file: Option<File>,
    records: Vec<EventRecord>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn io_err(path: &Path, e: std::io::Error) -> ServiceError {
    ServiceError::Log(format!("{}: {e}", path.display()))
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog {
            path: None,
            file: None,
            records: Vec::new(),
        }
    }

    /// Open or create the log at `path`, reading any existing records. An
    /// unterminated final line (a torn write) is dropped with a warning.
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        let records = if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let (records, keep) = parse_records(&text)?;
            if keep < text.len() {
                log::warn!("{}: dropping torn final record", path.display());
                let f = OpenOptions::new().write(true).open(path).map_err(|e| io_err(path, e))?;
                f.set_len(keep as u64).map_err(|e| io_err(path, e))?;
            }
            records
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        Ok(EventLog {
            path: Some(path.to_path_buf()),
            file: Some(file),
            records,
        })
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn last_seq(&self) -> u64 {
        self.records.last().map_or(0, |r| r.seq)
    }

    /// Persist `event` as the next record and return it.
    pub fn append(&mut self, event: Event) -> Result<EventRecord, ServiceError> {
        let record = EventRecord {
            seq: self.last_seq() + 1,
            timestamp_ms: now_ms(),
            event,
        };
        if let (Some(file), Some(path)) = (self.file.as_mut(), self.path.as_ref()) {
            let mut line = serde_json::to_string(&record).map_err(|e| ServiceError::Internal(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
            file.sync_data().map_err(|e| io_err(path, e))?;
        }
        self.records.push(record.clone());
        Ok(record)
    }
}

/// Parse complete lines; returns the records and the byte length they span.
fn parse_records(text: &str) -> Result<(Vec<EventRecord>, usize), ServiceError> {
    let mut records: Vec<EventRecord> = Vec::new();
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let terminated = line.ends_with('\n');
        let body = line.trim();
        if body.is_empty() {
            offset += line.len();
            continue;
        }
        match serde_json::from_str::<EventRecord>(body) {
            Ok(r) => {
                let expected = records.last().map_or(1, |p| p.seq + 1);
                if r.seq != expected {
                    return Err(ServiceError::Log(format!(
                        "line {}: sequence {} where {expected} expected",
                        i + 1,
                        r.seq
                    )));
                }
                records.push(r);
                offset += line.len();
            }
            Err(_) if !terminated => break,
            Err(e) => return Err(ServiceError::Log(format!("line {}: {e}", i + 1))),
        }
    }
    Ok((records, offset))
}
