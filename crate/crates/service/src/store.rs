//! Campaign registry: creation with idempotency keys, the serialized per-campaign
//! write path, snapshots, and recovery from logs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Mutex;

use activeeval_core::cost::LedgerEntry;
use activeeval_core::embedding::EmbeddingClient;
use activeeval_core::engine::{Estimates, TrialRequest};
use activeeval_core::{CampaignConfig, CampaignState, DatasetSpec, Suggestion};

use crate::error::{Result, ServiceError};
use crate::events::{
    CampaignEvent, CreatedPayload, EventKind, EventLog, OutcomesPayload, RetrainedPayload, Snapshot,
    SnapshotPayload, SuggestedPayload,
};

/// Events between snapshots.
pub const SNAPSHOT_EVERY: u64 = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateRequest {
    pub spec: DatasetSpec,
    #[serde(default)]
    pub config: CampaignConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub id: String,
    pub warm_start_trials: Vec<TrialRequest>,
    /// The warm-start suggestion while its outcomes are outstanding.
    pub suggestion: Option<Suggestion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomesRequest {
    pub token: String,
    pub outcomes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomesResponse {
    pub new_total_cost: f64,
    pub charged: f64,
    pub step: u64,
    pub version: u64,
    pub next_available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostResponse {
    pub total: f64,
    pub eval: f64,
    pub switch: f64,
    pub current_task: String,
    pub entries: Vec<LedgerEntry>,
}

/// A campaign rebuilt from its log.
#[derive(Debug, Clone)]
pub struct Recovered {
    pub created: CreatedPayload,
    pub state: CampaignState,
    pub last_seq: u64,
    /// Events appended after the latest snapshot.
    pub since_snapshot: u64,
    pub suggested_version: Option<u64>,
    pub snapshot_file: Option<PathBuf>,
}

fn corrupt(seq: u64, msg: impl std::fmt::Display) -> ServiceError {
    ServiceError::CorruptLog(format!("seq {seq}: {msg}"))
}

/// Rebuilds a campaign from the latest snapshot plus the events after it.
/// Training is replayed from the recorded seeds, so the result is bit-identical
/// to the state that wrote the log.
pub fn recover(log_path: &Path) -> Result<Recovered> {
    let events = EventLog::read(log_path)?;
    let first = events
        .first()
        .ok_or_else(|| ServiceError::CorruptLog(format!("{}: log is empty", log_path.display())))?;
    if first.kind != EventKind::Created {
        return Err(corrupt(1, "first event is not Created"));
    }
    let created: CreatedPayload = first.decode()?;
    let dir = log_path.parent().unwrap_or(Path::new("."));

    let snapshot_at = events.iter().rposition(|e| e.kind == EventKind::SnapshotRef);
    let (mut state, start, snapshot_file) = match snapshot_at {
        Some(k) => {
            let p: SnapshotPayload = events[k].decode()?;
            let path = dir.join(&p.file);
            let bytes = std::fs::read(&path).map_err(|e| corrupt(events[k].seq, format!("{}: {e}", path.display())))?;
            if hex::encode(Sha256::digest(&bytes)) != p.sha256 {
                return Err(corrupt(events[k].seq, "snapshot checksum mismatch"));
            }
            let snap: Snapshot = serde_json::from_slice(&bytes).map_err(|e| corrupt(events[k].seq, e))?;
            if snap.upto_seq != p.upto_seq {
                return Err(corrupt(events[k].seq, "snapshot covers a different sequence number"));
            }
            (snap.state, p.upto_seq, Some(path))
        }
        None => {
            let state = CampaignState::new(
                created.policies.clone(),
                created.tasks.clone(),
                created.outcome_kind,
                &created.config,
            )
            .map_err(|e| corrupt(1, e))?;
            (state, 1, None)
        }
    };

    let mut suggested_version = None;
    for ev in &events[1..] {
        if ev.kind == EventKind::Suggested {
            suggested_version = Some(ev.decode::<SuggestedPayload>()?.version);
        }
        if ev.seq <= start {
            continue;
        }
        match ev.kind {
            EventKind::Created => return Err(corrupt(ev.seq, "second Created event")),
            EventKind::OutcomesRecorded => {
                let p: OutcomesPayload = ev.decode()?;
                state
                    .record_outcomes(&p.suggestion, &p.outcomes)
                    .map_err(|e| corrupt(ev.seq, e))?;
            }
            EventKind::Retrained => {
                let p: RetrainedPayload = ev.decode()?;
                let now = RetrainedPayload::of(&state, p.epochs);
                if now != p {
                    return Err(corrupt(ev.seq, format!("replay diverged: logged {p:?}, replayed {now:?}")));
                }
            }
            EventKind::Suggested | EventKind::SnapshotRef => {}
        }
    }
    let last_seq = events.last().map_or(0, |e| e.seq);
    let since_snapshot = match snapshot_at {
        Some(k) => (events.len() - 1 - k) as u64,
        None => events.len() as u64,
    };
    Ok(Recovered {
        created,
        state,
        last_seq,
        since_snapshot,
        suggested_version,
        snapshot_file,
    })
}

struct Writer {
    log: EventLog,
    since_snapshot: u64,
    suggested_version: Option<u64>,
    /// Current suggestion, keyed by the version it belongs to.
    cached: Option<(u64, Suggestion)>,
    snapshot_file: Option<PathBuf>,
}

impl Writer {
    /// Appends an event; `state` must be the state the log describes once
    /// the event is in. Writes a snapshot when one is due.
    fn append(&mut self, id: &str, kind: EventKind, payload: &impl Serialize, state: &CampaignState) -> Result<()> {
        self.log.append(kind, payload)?;
        self.since_snapshot += 1;
        if self.since_snapshot >= SNAPSHOT_EVERY {
            self.snapshot(id, state)?;
        }
        Ok(())
    }

    fn snapshot(&mut self, id: &str, state: &CampaignState) -> Result<()> {
        let upto_seq = self.log.last_seq();
        let file = format!("{id}.snapshot-{upto_seq:08}.json");
        let path = self.log.path().with_file_name(&file);
        let bytes = serde_json::to_vec(&Snapshot {
            upto_seq,
            state: state.clone(),
        })
        .map_err(|e| ServiceError::Core(e.into()))?;
        activeeval_core::io::write_atomic(&path, &bytes)?;
        self.log.append(
            EventKind::SnapshotRef,
            &SnapshotPayload {
                upto_seq,
                file,
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
        )?;
        self.since_snapshot = 0;
        if let Some(old) = self.snapshot_file.replace(path) {
            // Only the latest snapshot is ever loaded.
            let _ = std::fs::remove_file(old);
        }
        Ok(())
    }
}

pub struct Campaign {
    pub id: String,
    created: CreatedPayload,
    writer: Mutex<Writer>,
    committed: RwLock<Arc<CampaignState>>,
}

impl Campaign {
    /// Latest committed state.
    pub fn state(&self) -> Arc<CampaignState> {
        self.committed.read().expect("state lock").clone()
    }

    fn commit(&self, state: CampaignState) {
        *self.committed.write().expect("state lock") = Arc::new(state);
    }

    fn create_response(&self) -> CreateResponse {
        let state = self.state();
        let d = state.config().acquisition.trials_per_query;
        let warm_start_trials = (0..state.num_policies())
            .flat_map(|policy| std::iter::repeat_n(TrialRequest { policy, task: state.warm_task() }, d))
            .collect();
        CreateResponse {
            id: self.id.clone(),
            warm_start_trials,
            suggestion: state.pending_warm_start(),
        }
    }
}

struct Inner {
    data_dir: PathBuf,
    client: Option<EmbeddingClient>,
    campaigns: RwLock<HashMap<String, Arc<Campaign>>>,
    /// Idempotency key -> (request digest, campaign id). The lock also
    /// serializes campaign creation.
    keys: Mutex<HashMap<String, (String, String)>>,
}

/// Shared server state.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::io("worker task", std::io::Error::other(e.to_string())))?
}

impl AppState {
    /// Opens `data_dir`, recovering every campaign log found in it.
    pub fn open(data_dir: impl Into<PathBuf>, client: Option<EmbeddingClient>) -> Result<Self> {
        let data_dir = data_dir.into();
        let dir = data_dir.join("campaigns");
        std::fs::create_dir_all(&dir).map_err(|e| ServiceError::io(dir.display(), e))?;
        let mut campaigns = HashMap::new();
        let mut keys = HashMap::new();
        let mut logs: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| ServiceError::io(dir.display(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        logs.sort();
        for path in logs {
            let rec = recover(&path)?;
            let id = rec.created.id.clone();
            if let Some(key) = &rec.created.idempotency_key {
                keys.insert(key.clone(), (rec.created.request_digest.clone(), id.clone()));
            }
            let writer = Writer {
                log: EventLog::reopen(&path, rec.last_seq)?,
                since_snapshot: rec.since_snapshot,
                suggested_version: rec.suggested_version,
                cached: None,
                snapshot_file: rec.snapshot_file,
            };
            log::info!("recovered campaign {id} at step {}", rec.state.step());
            campaigns.insert(
                id.clone(),
                Arc::new(Campaign {
                    id,
                    created: rec.created,
                    writer: Mutex::new(writer),
                    committed: RwLock::new(Arc::new(rec.state)),
                }),
            );
        }
        Ok(Self(Arc::new(Inner {
            data_dir,
            client,
            campaigns: RwLock::new(campaigns),
            keys: Mutex::new(keys),
        })))
    }

    pub fn data_dir(&self) -> &Path {
        &self.0.data_dir
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.0.data_dir.join("campaigns").join(format!("{id}.jsonl"))
    }

    pub fn campaign_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.0.campaigns.read().expect("registry lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn campaign(&self, id: &str) -> Result<Arc<Campaign>> {
        self.0
            .campaigns
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownCampaign(id.to_owned()))
    }

    /// Creates a campaign from a JSON request body. Returns `false` in the first
    /// field when the idempotency key matched an existing campaign.
    pub async fn create(&self, body: &[u8], idempotency_key: Option<String>) -> Result<(bool, CreateResponse)> {
        let mut de = serde_json::Deserializer::from_slice(body);
        let request: CreateRequest = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| ServiceError::InvalidSpec(format!("{}: {}", e.path(), e.inner())))?;
        let canonical = serde_json::to_vec(&request).map_err(|e| ServiceError::Core(e.into()))?;
        let request_digest = hex::encode(Sha256::digest(&canonical));

        let mut keys = self.0.keys.lock().await;
        if let Some(key) = &idempotency_key {
            if let Some((digest, id)) = keys.get(key) {
                if *digest != request_digest {
                    return Err(ServiceError::DuplicateIdempotencyKey(key.clone()));
                }
                return Ok((false, self.campaign(id)?.create_response()));
            }
        }

        let client = self.0.client.clone();
        let (created_parts, state) = blocking(move || {
            let resolved = request
                .spec
                .resolve(&request.config, client.as_ref())
                .map_err(|e| ServiceError::InvalidSpec(format!("spec: {e}")))?;
            let config = resolved.campaign_config(&request.config);
            let state = CampaignState::new(
                resolved.policies.clone(),
                resolved.tasks.clone(),
                resolved.outcome_kind,
                &config,
            )
            .map_err(|e| ServiceError::InvalidSpec(format!("config: {e}")))?;
            Ok(((resolved.outcome_kind, resolved.policies, resolved.tasks), state))
        })
        .await?;

        let id = uuid::Uuid::new_v4().simple().to_string();
        let (outcome_kind, policies, tasks) = created_parts;
        let created = CreatedPayload {
            id: id.clone(),
            idempotency_key: idempotency_key.clone(),
            request_digest: request_digest.clone(),
            outcome_kind,
            policies,
            tasks,
            // The engine's normalized config, so recovery rebuilds the same state.
            config: state.config().clone(),
        };
        let mut log = EventLog::create(&self.log_path(&id))?;
        log.append(EventKind::Created, &created)?;
        let campaign = Arc::new(Campaign {
            id: id.clone(),
            created,
            writer: Mutex::new(Writer {
                log,
                since_snapshot: 1,
                suggested_version: None,
                cached: None,
                snapshot_file: None,
            }),
            committed: RwLock::new(Arc::new(state)),
        });
        self.0
            .campaigns
            .write()
            .expect("registry lock")
            .insert(id.clone(), campaign.clone());
        if let Some(key) = idempotency_key {
            keys.insert(key, (request_digest, id.clone()));
        }
        log::info!("created campaign {id}");
        Ok((true, campaign.create_response()))
    }

    /// Current suggestion of a campaign whose writer lock is held.
    async fn current(campaign: &Campaign, writer: &mut Writer) -> Result<Suggestion> {
        let state = campaign.state();
        if let Some(warm) = state.pending_warm_start() {
            return Ok(warm);
        }
        if let Some((version, s)) = &writer.cached {
            if *version == state.version() {
                return Ok(s.clone());
            }
        }
        let version = state.version();
        let s = blocking(move || Ok(state.suggest_next()?)).await?;
        writer.cached = Some((version, s.clone()));
        Ok(s)
    }

    /// Next query; 409 while warm-start outcomes are outstanding.
    pub async fn next(&self, id: &str) -> Result<Suggestion> {
        let campaign = self.campaign(id)?;
        let mut writer = campaign.writer.lock().await;
        let suggestion = Self::current(&campaign, &mut writer).await?;
        if suggestion.warm_start {
            return Err(ServiceError::PendingOutcomes {
                suggestion: Box::new(suggestion),
            });
        }
        let state = campaign.state();
        if writer.suggested_version != Some(state.version()) {
            let payload = SuggestedPayload {
                version: state.version(),
                suggestion: suggestion.clone(),
            };
            writer.append(id, EventKind::Suggested, &payload, &state)?;
            writer.suggested_version = Some(state.version());
        }
        Ok(suggestion)
    }

    /// Applies outcomes for the suggestion identified by `token`.
    pub async fn record(&self, id: &str, request: OutcomesRequest) -> Result<OutcomesResponse> {
        let campaign = self.campaign(id)?;
        let mut writer = campaign.writer.lock().await;
        let suggestion = Self::current(&campaign, &mut writer).await?;
        if request.token != suggestion.token {
            return Err(ServiceError::StaleSuggestion {
                token: request.token,
                current: suggestion.token,
            });
        }
        let mut next = (*campaign.state()).clone();
        let outcomes = request.outcomes;
        let (next, summary, outcomes) = blocking(move || {
            let summary = next.record_outcomes(&suggestion, &outcomes).map_err(ServiceError::from_record)?;
            Ok((next, summary, OutcomesPayload { suggestion, outcomes }))
        })
        .await?;
        let epochs = if outcomes.suggestion.warm_start {
            next.config().surrogate.epochs_initial
        } else {
            next.config().surrogate.epochs_per_update
        };
        writer.append(id, EventKind::OutcomesRecorded, &outcomes, &next)?;
        writer.append(id, EventKind::Retrained, &RetrainedPayload::of(&next, epochs), &next)?;
        writer.cached = None;
        let version = next.version();
        campaign.commit(next);
        Ok(OutcomesResponse {
            new_total_cost: summary.total_cost,
            charged: summary.charged,
            step: summary.step,
            version,
            next_available: true,
        })
    }

    pub async fn estimates(&self, id: &str) -> Result<Estimates> {
        let state = self.campaign(id)?.state();
        blocking(move || Ok(state.estimates()?)).await
    }

    pub fn cost(&self, id: &str) -> Result<CostResponse> {
        use activeeval_core::cost::ChargeKind;
        let state = self.campaign(id)?.state();
        let ledger = state.ledger();
        Ok(CostResponse {
            total: ledger.total(),
            eval: ledger.sum_of(ChargeKind::Eval),
            switch: ledger.sum_of(ChargeKind::Switch),
            current_task: state.tasks()[state.current_task()].id.clone(),
            entries: ledger.entries().to_vec(),
        })
    }

    /// Every event of a campaign's log, in order.
    pub async fn history(&self, id: &str) -> Result<Vec<CampaignEvent>> {
        let campaign = self.campaign(id)?;
        // Hold the writer so the read sees whole events only.
        let _writer = campaign.writer.lock().await;
        EventLog::read(&self.log_path(&campaign.id))
    }

    /// Creation record of a campaign.
    pub fn created(&self, id: &str) -> Result<CreatedPayload> {
        Ok(self.campaign(id)?.created.clone())
    }
}
