//! Persistent planning sessions: append-only config revisions and the runs
//! started from them.
//!
//! Layout under the data directory:
//!
//! ```text
//! sessions/<session id>/session.json
//! sessions/<session id>/runs/<run id>/{config.json, <stage>.json, regions.geojson}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use georegion::advisor::{geocode, summarize_dataset, DatasetSummary, Gazetteer, Place, Suggestion, SuggestionProvider};
use georegion::metrics::PartitionMetrics;
use georegion::pipeline::{completed_stages, read_stage_payload, sha256_hex, GEOJSON_FILE};
use georegion::{Error, FieldError, GridRaster, PipelineConfig, Stage};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SESSION_FILE: &str = "session.json";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("session {0} was created against a different grid")]
    StaleGrid(String),
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Core(e.into())
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        ServiceError::Core(e.into())
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;

fn not_found(what: impl Into<String>) -> ServiceError {
    ServiceError::Core(Error::NotFound(what.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub revision: usize,
    pub config: PipelineConfig,
    /// The refinement delta this revision was derived from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Value>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

impl RunStatus {
    pub fn is_finished(self) -> bool {
        matches!(self, RunStatus::Succeeded | RunStatus::Failed)
    }
}

/// Why a run failed, in a form clients can act on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

impl From<&Error> for RunError {
    fn from(e: &Error) -> Self {
        let stage = match e {
            Error::Stage { stage, .. } => Some(stage.clone()),
            _ => None,
        };
        let fields = match e.root() {
            Error::Validation(f) => f.clone(),
            _ => Vec::new(),
        };
        RunError {
            kind: e.kind().to_string(),
            stage,
            message: e.root().to_string(),
            fields,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub revision: usize,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RunError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PartitionMetrics>,
    /// Stage payload hashes plus the GeoJSON hash, once succeeded.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hashes: BTreeMap<String, String>,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub study_area: Place,
    pub hazard: String,
    pub grid_hash: String,
    pub revisions: Vec<Revision>,
    pub runs: Vec<RunRecord>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl SessionState {
    pub fn run(&self, run_id: &str) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.run_id == run_id)
    }

    fn run_mut(&mut self, run_id: &str) -> Option<&mut RunRecord> {
        self.runs.iter_mut().find(|r| r.run_id == run_id)
    }
}

/// Run status as served to clients: the record plus completed stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunView {
    #[serde(flatten)]
    pub record: RunRecord,
    pub stages: Vec<Stage>,
}

struct SessionHandle {
    dir: PathBuf,
    stale: bool,
    state: RwLock<SessionState>,
    /// Serializes every mutation of the session.
    writes: tokio::sync::Mutex<()>,
    /// Runs of one session execute one at a time, in submission order.
    runner: tokio::sync::Mutex<()>,
}

impl SessionHandle {
    fn snapshot(&self) -> SessionState {
        self.state.read().expect("session lock poisoned").clone()
    }

    fn check_fresh(&self) -> ServiceResult<()> {
        if self.stale {
            return Err(ServiceError::StaleGrid(self.snapshot().session_id));
        }
        Ok(())
    }

    /// Applies `f` to the state and writes session.json. Callers hold
    /// `writes`.
    fn update<T>(&self, f: impl FnOnce(&mut SessionState) -> T) -> ServiceResult<T> {
        let mut next = self.snapshot();
        let out = f(&mut next);
        next.updated_at = Utc::now();
        write_atomic(&self.dir.join(SESSION_FILE), &serde_json::to_vec_pretty(&next)?)?;
        *self.state.write().expect("session lock poisoned") = next;
        Ok(out)
    }

    fn run_dir(&self, run_id: &str) -> PathBuf {
        self.dir.join("runs").join(run_id)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

/// Content hash identifying the grid a session was created against.
pub fn grid_hash(grid: &GridRaster) -> String {
    sha256_hex(&serde_json::to_vec(grid).expect("grid serializes"))
}

/// Parses `value` as `T`, reporting the failing field path.
pub fn parse_with_path<T: DeserializeOwned>(value: Value) -> Result<T, Error> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        Error::Validation(vec![FieldError::new(path, e.inner().to_string())])
    })
}

/// Recursively overlays `delta` onto `base`; objects merge, anything else
/// replaces.
pub fn merge_delta(base: &mut Value, delta: &Value) {
    match (base, delta) {
        (Value::Object(b), Value::Object(d)) => {
            for (k, v) in d {
                match b.get_mut(k) {
                    Some(slot) if v.is_object() => merge_delta(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, d) => *b = d.clone(),
    }
}

/// All sessions of one service instance, sharing one grid.
pub struct SessionStore {
    root: PathBuf,
    grid: Arc<GridRaster>,
    grid_hash: String,
    summary: DatasetSummary,
    advisor: Arc<dyn SuggestionProvider>,
    gazetteer: Gazetteer,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

impl SessionStore {
    /// Opens (or creates) the store under `data_dir`, reloading existing
    /// sessions. Runs left unfinished by a previous process are marked
    /// failed; sessions built on another grid become read-only.
    pub fn open(
        data_dir: impl AsRef<Path>,
        grid: GridRaster,
        advisor: Arc<dyn SuggestionProvider>,
        gazetteer: Gazetteer,
    ) -> ServiceResult<Self> {
        let root = data_dir.as_ref().join("sessions");
        std::fs::create_dir_all(&root)?;
        let hash = grid_hash(&grid);
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&root)? {
            let dir = entry?.path();
            let file = dir.join(SESSION_FILE);
            if !file.is_file() {
                continue;
            }
            let state: SessionState = serde_json::from_slice(&std::fs::read(&file)?).map_err(|e| Error::Corruption {
                path: file.clone(),
                message: e.to_string(),
            })?;
            let handle = Arc::new(SessionHandle {
                dir,
                stale: state.grid_hash != hash,
                state: RwLock::new(state),
                writes: tokio::sync::Mutex::new(()),
                runner: tokio::sync::Mutex::new(()),
            });
            let interrupted = handle.snapshot().runs.iter().any(|r| !r.status.is_finished());
            if interrupted {
                handle.update(|s| {
                    for r in s.runs.iter_mut().filter(|r| !r.status.is_finished()) {
                        r.status = RunStatus::Failed;
                        r.error = Some(RunError {
                            kind: "interrupted".into(),
                            stage: None,
                            message: "service stopped before the run finished".into(),
                            fields: Vec::new(),
                        });
                    }
                })?;
            }
            let id = handle.snapshot().session_id;
            sessions.insert(id, handle);
        }
        Ok(Self {
            root,
            summary: summarize_dataset(&grid),
            grid: Arc::new(grid),
            grid_hash: hash,
            advisor,
            gazetteer,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn grid(&self) -> &GridRaster {
        &self.grid
    }

    pub fn dataset_summary(&self) -> &DatasetSummary {
        &self.summary
    }

    fn handle(&self, id: &str) -> ServiceResult<Arc<SessionHandle>> {
        self.sessions
            .read()
            .expect("store lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| not_found(format!("session `{id}`")))
    }

    pub fn create_session(&self, study_area: &str, hazard: &str) -> ServiceResult<String> {
        let mut fields = Vec::new();
        if study_area.trim().is_empty() {
            fields.push(FieldError::new("study_area", "must be nonempty"));
        }
        if hazard.trim().is_empty() {
            fields.push(FieldError::new("hazard", "must be nonempty"));
        }
        if !fields.is_empty() {
            return Err(Error::Validation(fields).into());
        }
        let place = geocode(&self.gazetteer, study_area)?.clone();
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.root.join(&id);
        std::fs::create_dir_all(dir.join("runs"))?;
        let now = Utc::now();
        let state = SessionState {
            session_id: id.clone(),
            study_area: place,
            hazard: hazard.trim().to_lowercase(),
            grid_hash: self.grid_hash.clone(),
            revisions: Vec::new(),
            runs: Vec::new(),
            created_at: now,
            updated_at: now,
        };
        write_atomic(&dir.join(SESSION_FILE), &serde_json::to_vec_pretty(&state)?)?;
        let handle = Arc::new(SessionHandle {
            dir,
            stale: false,
            state: RwLock::new(state),
            writes: tokio::sync::Mutex::new(()),
            runner: tokio::sync::Mutex::new(()),
        });
        self.sessions.write().expect("store lock poisoned").insert(id.clone(), handle);
        Ok(id)
    }

    pub fn session(&self, id: &str) -> ServiceResult<SessionState> {
        Ok(self.handle(id)?.snapshot())
    }

    pub fn suggestions(&self, id: &str) -> ServiceResult<Vec<Suggestion>> {
        let hazard = self.handle(id)?.snapshot().hazard;
        Ok(self.advisor.suggest(&hazard, self.grid.feature_names())?)
    }

    fn check_config(&self, config: &PipelineConfig) -> ServiceResult<()> {
        config.validate(&self.grid)?;
        config.check_feasible(&self.grid)?;
        Ok(())
    }

    /// Appends a full configuration as a new revision.
    pub async fn submit_config(&self, id: &str, config: Value) -> ServiceResult<usize> {
        let handle = self.handle(id)?;
        let config: PipelineConfig = parse_with_path(config)?;
        self.check_config(&config)?;
        let _guard = handle.writes.lock().await;
        handle.check_fresh()?;
        handle.update(|s| push_revision(s, config, None))
    }

    /// Queues a run of an existing revision and returns its id at once.
    pub async fn start_run(self: &Arc<Self>, id: &str, revision: usize) -> ServiceResult<String> {
        let handle = self.handle(id)?;
        let _guard = handle.writes.lock().await;
        handle.check_fresh()?;
        self.queue_run(&handle, revision)
    }

    /// Applies `delta` to the latest revision, appends the result and
    /// queues a run of it.
    pub async fn refine(self: &Arc<Self>, id: &str, delta: Value) -> ServiceResult<(usize, String)> {
        let handle = self.handle(id)?;
        if !delta.is_object() {
            return Err(Error::Validation(vec![FieldError::new("delta", "must be an object")]).into());
        }
        let _guard = handle.writes.lock().await;
        handle.check_fresh()?;
        let Some(latest) = handle.snapshot().revisions.last().cloned() else {
            return Err(Error::Contract("refinement needs a submitted config".into()).into());
        };
        let mut merged = serde_json::to_value(&latest.config)?;
        merge_delta(&mut merged, &delta);
        let config: PipelineConfig = parse_with_path(merged)?;
        self.check_config(&config)?;
        let revision = handle.update(|s| push_revision(s, config, Some(delta)))?;
        let run_id = self.queue_run(&handle, revision)?;
        Ok((revision, run_id))
    }

    fn queue_run(self: &Arc<Self>, handle: &Arc<SessionHandle>, revision: usize) -> ServiceResult<String> {
        let state = handle.snapshot();
        let Some(rev) = state.revisions.get(revision) else {
            return Err(not_found(format!("revision {revision}")));
        };
        let config = rev.config.clone();
        let run_id = uuid::Uuid::new_v4().simple().to_string();
        handle.update(|s| {
            s.runs.push(RunRecord {
                run_id: run_id.clone(),
                revision,
                status: RunStatus::Queued,
                error: None,
                region_count: None,
                metrics: None,
                hashes: BTreeMap::new(),
                created_at: Utc::now(),
                finished_at: None,
            })
        })?;
        let store = Arc::clone(self);
        let handle = Arc::clone(handle);
        let rid = run_id.clone();
        tokio::spawn(async move {
            store.execute(handle, rid, config).await;
        });
        Ok(run_id)
    }

    async fn execute(&self, handle: Arc<SessionHandle>, run_id: String, config: PipelineConfig) {
        let _turn = handle.runner.lock().await;
        {
            let _guard = handle.writes.lock().await;
            let _ = handle.update(|s| {
                if let Some(r) = s.run_mut(&run_id) {
                    r.status = RunStatus::Running;
                }
            });
        }
        let grid = Arc::clone(&self.grid);
        let dir = handle.run_dir(&run_id);
        let result = tokio::task::spawn_blocking(move || georegion::run_pipeline_to(&grid, &config, &dir))
            .await
            .unwrap_or_else(|e| Err(Error::Contract(format!("run task failed: {e}"))));
        let _guard = handle.writes.lock().await;
        let _ = handle.update(|s| {
            let Some(r) = s.run_mut(&run_id) else { return };
            r.finished_at = Some(Utc::now());
            match &result {
                Ok(run) => {
                    r.status = RunStatus::Succeeded;
                    r.region_count = Some(run.region_count());
                    r.metrics = Some(run.metrics.clone());
                    r.hashes = run.hashes.clone();
                }
                Err(e) => {
                    r.status = RunStatus::Failed;
                    r.error = Some(e.into());
                }
            }
        });
    }

    fn run_record(&self, id: &str, run_id: &str) -> ServiceResult<(Arc<SessionHandle>, RunRecord)> {
        let handle = self.handle(id)?;
        let record = handle
            .snapshot()
            .run(run_id)
            .cloned()
            .ok_or_else(|| not_found(format!("run `{run_id}`")))?;
        Ok((handle, record))
    }

    pub fn run(&self, id: &str, run_id: &str) -> ServiceResult<RunView> {
        let (handle, record) = self.run_record(id, run_id)?;
        let stages = completed_stages(&handle.run_dir(run_id));
        Ok(RunView { record, stages })
    }

    /// The stage file exactly as persisted, after verifying its hash.
    pub fn stage(&self, id: &str, run_id: &str, stage: &str) -> ServiceResult<Vec<u8>> {
        let (handle, _) = self.run_record(id, run_id)?;
        let stage: Stage = stage.parse()?;
        let dir = handle.run_dir(run_id);
        read_stage_payload(&dir, stage)?;
        Ok(std::fs::read(dir.join(stage.file_name()))?)
    }

    pub fn geojson(&self, id: &str, run_id: &str) -> ServiceResult<Vec<u8>> {
        let (handle, record) = self.run_record(id, run_id)?;
        if record.status != RunStatus::Succeeded {
            return Err(not_found(format!("regions of run `{run_id}` ({:?})", record.status)));
        }
        Ok(std::fs::read(handle.run_dir(run_id).join(GEOJSON_FILE))?)
    }
}

fn push_revision(s: &mut SessionState, config: PipelineConfig, delta: Option<Value>) -> usize {
    let revision = s.revisions.len();
    s.revisions.push(Revision {
        revision,
        config,
        delta,
        created_at: Utc::now(),
    });
    revision
}
