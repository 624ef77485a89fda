//! On-disk flow and run storage.
//!
//! Layout under the data directory:
//! `flows/<id>.flow.json` and `runs/<runId>/{input.json,trace.jsonl,outputs.json,status.json}`.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use jitflow_core::engine::{EventKind, RunState, TraceEvent};
use jitflow_core::model::{parse_flow_document, serialize_flow, FlowDefinition, FlowSource};
use jitflow_core::FlowParseError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid id '{0}': use letters, digits, '-' and '_'")]
    InvalidId(String),

    #[error("flow '{0}' already exists with different content")]
    Conflict(String),

    #[error("stored flow '{id}' is corrupt: {source}")]
    Corrupt { id: String, source: FlowParseError },

    #[error(transparent)]
    Io(#[from] io::Error),
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Writes `contents` to `path` through a temp file and rename.
fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().expect("store paths have a parent");
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Flows by id, stored in canonical form.
pub struct FlowStore {
    dir: PathBuf,
    write: Mutex<()>,
}

impl FlowStore {
    pub fn open(data_dir: &Path) -> io::Result<Self> {
        let dir = data_dir.join("flows");
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, write: Mutex::new(()) })
    }

    /// First 12 hex digits of the SHA-256 of the canonical text.
    pub fn content_id(flow: &FlowDefinition) -> String {
        let digest = Sha256::digest(serialize_flow(flow).as_bytes());
        hex::encode(digest)[..12].to_string()
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.flow.json"))
    }

    /// Stores `flow` under `id`, or under its content id. Storing an equal
    /// flow again is a no-op.
    pub fn put(&self, flow: &FlowDefinition, id: Option<&str>) -> Result<String, StoreError> {
        let id = match id {
            Some(id) if !valid_id(id) => return Err(StoreError::InvalidId(id.to_string())),
            Some(id) => id.to_string(),
            None => Self::content_id(flow),
        };
        let _guard = self.write.lock().unwrap();
        match self.get(&id)? {
            Some(existing) if existing == *flow => return Ok(id),
            Some(_) => return Err(StoreError::Conflict(id)),
            None => {}
        }
        write_atomic(&self.path(&id), serialize_flow(flow).as_bytes())?;
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Result<Option<FlowDefinition>, StoreError> {
        if !valid_id(id) {
            return Ok(None);
        }
        match fs::read_to_string(self.path(id)) {
            Ok(text) => parse_flow_document(&text)
                .map(Some)
                .map_err(|source| StoreError::Corrupt { id: id.to_string(), source }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn list(&self) -> io::Result<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok()?.file_name().to_str()?.strip_suffix(".flow.json").map(str::to_string))
            .collect();
        ids.sort();
        Ok(ids)
    }
}

impl FlowSource for FlowStore {
    fn load_flow(&self, id: &str) -> Option<FlowDefinition> {
        self.get(id).ok().flatten()
    }
}

/// Contents of `status.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunStatus {
    pub run_id: String,
    pub flow_id: String,
    pub state: RunState,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub paused_at: Option<String>,
    pub error: Option<String>,
}

/// Run artifacts, one directory per run.
pub struct RunStore {
    dir: PathBuf,
}

impl RunStore {
    pub fn open(data_dir: &Path) -> io::Result<Self> {
        let dir = data_dir.join("runs");
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn run_dir(&self, run_id: &str) -> Option<PathBuf> {
        valid_id(run_id).then(|| self.dir.join(run_id))
    }

    fn file(&self, run_id: &str, name: &str) -> io::Result<PathBuf> {
        self.run_dir(run_id)
            .map(|d| d.join(name))
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "invalid run id"))
    }

    pub fn create(&self, status: &RunStatus, input: &serde_json::Value) -> io::Result<()> {
        let dir = self.run_dir(&status.run_id).ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "invalid run id"))?;
        fs::create_dir(&dir)?;
        write_atomic(&dir.join("input.json"), &serde_json::to_vec_pretty(input)?)?;
        fs::File::create(dir.join("trace.jsonl"))?;
        self.write_status(status)
    }

    pub fn append_event(&self, run_id: &str, event: &TraceEvent) -> io::Result<()> {
        let mut f = OpenOptions::new().append(true).open(self.file(run_id, "trace.jsonl")?)?;
        f.write_all((event.to_json_line() + "\n").as_bytes())
    }

    pub fn write_status(&self, status: &RunStatus) -> io::Result<()> {
        write_atomic(&self.file(&status.run_id, "status.json")?, &serde_json::to_vec_pretty(status)?)
    }

    pub fn write_outputs(&self, run_id: &str, outputs: &serde_json::Map<String, serde_json::Value>) -> io::Result<()> {
        write_atomic(&self.file(run_id, "outputs.json")?, &serde_json::to_vec_pretty(outputs)?)
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, run_id: &str, name: &str) -> io::Result<Option<T>> {
        let Some(path) = self.run_dir(run_id).map(|d| d.join(name)) else { return Ok(None) };
        match fs::read(path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn status(&self, run_id: &str) -> io::Result<Option<RunStatus>> {
        self.read_json(run_id, "status.json")
    }

    pub fn outputs(&self, run_id: &str) -> io::Result<serde_json::Map<String, serde_json::Value>> {
        Ok(self.read_json(run_id, "outputs.json")?.unwrap_or_default())
    }

    pub fn input(&self, run_id: &str) -> io::Result<Option<serde_json::Value>> {
        self.read_json(run_id, "input.json")
    }

    /// Raw `trace.jsonl` text.
    pub fn trace_text(&self, run_id: &str) -> io::Result<Option<String>> {
        let Some(path) = self.run_dir(run_id).map(|d| d.join("trace.jsonl")) else { return Ok(None) };
        match fs::read_to_string(path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn trace(&self, run_id: &str) -> io::Result<Vec<TraceEvent>> {
        let text = self.trace_text(run_id)?.unwrap_or_default();
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(io::Error::from))
            .collect()
    }

    pub fn list(&self) -> io::Result<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok()?.file_name().to_str().map(str::to_string))
            .filter(|id| valid_id(id))
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// Closes runs left unfinished by a previous process: appends a
    /// `run_failed` event with reason `interrupted` and marks them failed.
    /// Returns the ids it closed.
    pub fn close_interrupted(&self) -> io::Result<Vec<String>> {
        let mut closed = Vec::new();
        for id in self.list()? {
            let Some(mut status) = self.status(&id)? else { continue };
            if status.state.is_terminal() {
                continue;
            }
            let trace = self.trace(&id)?;
            let ts = trace.last().map_or(0, |e| e.ts);
            let event = TraceEvent {
                ts,
                event: EventKind::RunFailed,
                module_id: None,
                detail: serde_json::json!({ "reason": "interrupted" }),
            };
            self.append_event(&id, &event)?;
            status.state = RunState::Failed;
            status.paused_at = None;
            status.error = Some("service restarted before the run finished".into());
            status.finished_at = Some(Utc::now());
            self.write_status(&status)?;
            closed.push(id);
        }
        Ok(closed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use jitflow_core::model::ModuleInstance;

    fn sample() -> FlowDefinition {
        FlowDefinition::new("s").module(ModuleInstance::new("a", "ExternalIntInput"))
    }

    #[test]
    fn flow_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = FlowStore::open(dir.path()).unwrap();
        let id = store.put(&sample(), None).unwrap();
        assert_eq!(id.len(), 12);
        assert_eq!(store.put(&sample(), None).unwrap(), id);
        assert_eq!(store.get(&id).unwrap().unwrap(), sample());
        assert_eq!(store.put(&sample(), Some("named")).unwrap(), "named");
        let other = FlowDefinition::new("other");
        assert!(matches!(store.put(&other, Some("named")), Err(StoreError::Conflict(_))));
        assert!(matches!(store.put(&other, Some("../x")), Err(StoreError::InvalidId(_))));
        assert!(store.get("../etc").unwrap().is_none());
        assert_eq!(store.list().unwrap(), vec![id, "named".to_string()]);
    }

    #[test]
    fn interrupted_runs_are_closed() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let status = RunStatus {
            run_id: "r1".into(),
            flow_id: "f".into(),
            state: RunState::Running,
            started_at: Utc::now(),
            finished_at: None,
            paused_at: None,
            error: None,
        };
        store.create(&status, &serde_json::json!({})).unwrap();
        let ev = TraceEvent { ts: 7, event: EventKind::RunStarted, module_id: None, detail: serde_json::json!({}) };
        store.append_event("r1", &ev).unwrap();
        assert_eq!(store.close_interrupted().unwrap(), ["r1"]);
        assert_eq!(store.status("r1").unwrap().unwrap().state, RunState::Failed);
        let trace = store.trace("r1").unwrap();
        assert_eq!(trace.len(), 2);
        assert!(trace[1].event.is_terminal() && trace[1].ts == 7);
        assert!(store.close_interrupted().unwrap().is_empty());
    }
}
