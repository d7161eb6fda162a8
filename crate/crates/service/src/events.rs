//! Append-only JSONL event log, one file per campaign. Every line carries a
//! dense sequence number and a SHA-256 checksum over its other fields.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use activeeval_core::{CampaignConfig, CampaignState, OutcomeKind, PolicyRef, Suggestion, TaskSpec};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Created,
    Suggested,
    OutcomesRecorded,
    Retrained,
    SnapshotRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub payload: Value,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub checksum: String,
}

fn digest(seq: u64, kind: EventKind, payload: &Value, timestamp: u64) -> String {
    let canonical = serde_json::to_vec(&(seq, kind, payload, timestamp)).expect("values serialize");
    hex::encode(Sha256::digest(canonical))
}

impl CampaignEvent {
    pub fn new(seq: u64, kind: EventKind, payload: Value, timestamp: u64) -> Self {
        let checksum = digest(seq, kind, &payload, timestamp);
        Self {
            seq,
            kind,
            payload,
            timestamp,
            checksum,
        }
    }

    pub fn verify(&self) -> bool {
        digest(self.seq, self.kind, &self.payload, self.timestamp) == self.checksum
    }

    pub fn decode<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        serde_json::from_value(self.payload.clone())
            .map_err(|e| ServiceError::CorruptLog(format!("event {} ({:?}): {e}", self.seq, self.kind)))
    }
}

/// Everything needed to rebuild a campaign without re-resolving its spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedPayload {
    pub id: String,
    pub idempotency_key: Option<String>,
    /// SHA-256 of the canonical create request.
    pub request_digest: String,
    pub outcome_kind: OutcomeKind,
    pub policies: Vec<PolicyRef>,
    pub tasks: Vec<TaskSpec>,
    pub config: CampaignConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestedPayload {
    /// Campaign version the suggestion was served at.
    pub version: u64,
    pub suggestion: Suggestion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomesPayload {
    pub suggestion: Suggestion,
    pub outcomes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrainedPayload {
    pub step: u64,
    pub version: u64,
    pub total_cost: f64,
    pub epochs: usize,
    pub dataset_len: usize,
}

impl RetrainedPayload {
    pub fn of(state: &CampaignState, epochs: usize) -> Self {
        Self {
            step: state.step(),
            version: state.version(),
            total_cost: state.total_cost(),
            epochs,
            dataset_len: state.dataset().len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPayload {
    /// Last event folded into the snapshot.
    pub upto_seq: u64,
    /// File name, relative to the log's directory.
    pub file: String,
    pub sha256: String,
}

/// Contents of a snapshot file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub upto_seq: u64,
    pub state: CampaignState,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Writer for one campaign's log.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl EventLog {
    /// Starts a new log; fails if the file exists.
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| ServiceError::io(dir.display(), e))?;
        }
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(path)
            .map_err(|e| ServiceError::io(path.display(), e))?;
        Ok(Self {
            path: path.to_owned(),
            file,
            next_seq: 1,
        })
    }

    /// Reopens an existing log whose last event is `last_seq`.
    pub fn reopen(path: &Path, last_seq: u64) -> Result<Self> {
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| ServiceError::io(path.display(), e))?;
        Ok(Self {
            path: path.to_owned(),
            file,
            next_seq: last_seq + 1,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    /// Appends and syncs one event.
    pub fn append(&mut self, kind: EventKind, payload: &impl Serialize) -> Result<CampaignEvent> {
        let payload = serde_json::to_value(payload).map_err(|e| ServiceError::Core(e.into()))?;
        let event = CampaignEvent::new(self.next_seq, kind, payload, now_millis());
        let mut line = serde_json::to_vec(&event).map_err(|e| ServiceError::Core(e.into()))?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|()| self.file.sync_data())
            .map_err(|e| ServiceError::io(self.path.display(), e))?;
        self.next_seq += 1;
        Ok(event)
    }

    /// Reads a whole log, checking checksums and that `seq` runs 1, 2, 3, ...
    pub fn read(path: &Path) -> Result<Vec<CampaignEvent>> {
        let file = File::open(path).map_err(|e| ServiceError::io(path.display(), e))?;
        let mut events = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ServiceError::io(path.display(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let event: CampaignEvent = serde_json::from_str(&line)
                .map_err(|e| ServiceError::CorruptLog(format!("line {}: {e}", n + 1)))?;
            let expected = events.len() as u64 + 1;
            if event.seq != expected {
                return Err(ServiceError::CorruptLog(format!(
                    "sequence gap: expected seq {expected}, found {}",
                    event.seq
                )));
            }
            if !event.verify() {
                return Err(ServiceError::CorruptLog(format!("checksum mismatch at seq {}", event.seq)));
            }
            events.push(event);
        }
        Ok(events)
    }
}
