use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::engine::RunPlan;
use crate::model::{Endpoint, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RunStarted,
    ModuleStarted,
    ModuleCompleted,
    ModuleFailed,
    RunPaused,
    GateDecided,
    RunCompleted,
    RunFailed,
}

impl EventKind {
    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::RunCompleted | EventKind::RunFailed)
    }
}

/// One line of a run's append-only trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Milliseconds since the run started.
    pub ts: u64,
    pub event: EventKind,
    #[serde(rename = "moduleId")]
    pub module_id: Option<String>,
    pub detail: serde_json::Value,
}

impl TraceEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace events serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    PausedForApproval,
    Completed,
    Failed,
    Rejected,
}

impl RunState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunState::Completed | RunState::Failed | RunState::Rejected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleState {
    Pending,
    Ready,
    Executing,
    Done,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateDecision {
    Approve,
    Reject,
}

impl std::str::FromStr for GateDecision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "approve" => Ok(GateDecision::Approve),
            "reject" => Ok(GateDecision::Reject),
            other => Err(format!("decision must be 'approve' or 'reject', not '{other}'")),
        }
    }
}

/// Monotonic milliseconds since run start. Time spent paused between
/// driver calls still counts, since the origin is fixed at creation.
#[derive(Debug, Clone)]
pub(crate) struct RunClock {
    origin: Instant,
    last: u64,
}

impl Default for RunClock {
    fn default() -> Self {
        Self { origin: Instant::now(), last: 0 }
    }
}

impl RunClock {
    pub(crate) fn now(&mut self) -> u64 {
        let ms = self.origin.elapsed().as_millis() as u64;
        self.last = self.last.max(ms);
        self.last
    }
}

/// One execution of a plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Run {
    pub run_id: String,
    pub plan: RunPlan,
    pub state: RunState,
    pub module_states: BTreeMap<String, ModuleState>,
    pub port_values: BTreeMap<Endpoint, Value>,
    pub outputs: BTreeMap<String, Value>,
    pub trace: Vec<TraceEvent>,
    /// The gated module the run is waiting on.
    pub paused_at: Option<String>,
    pub gate_decisions: BTreeMap<String, GateDecision>,
    /// First failure message, for failed runs.
    pub error: Option<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(skip)]
    pub(crate) clock: RunClock,
    /// Execution time used so far, for the deadline.
    #[serde(skip)]
    pub(crate) active: Duration,
}

impl Run {
    pub fn new(run_id: impl Into<String>, plan: RunPlan) -> Self {
        let module_states = plan.flow.modules.iter().map(|m| (m.id.clone(), ModuleState::Pending)).collect();
        let mut port_values = BTreeMap::new();
        for e in &plan.flow.external_inputs {
            if let Some(v) = plan.input_bindings.get(&e.name) {
                port_values.insert(e.target.clone(), v.clone());
            }
        }
        Self {
            run_id: run_id.into(),
            plan,
            state: RunState::Running,
            module_states,
            port_values,
            outputs: BTreeMap::new(),
            trace: Vec::new(),
            paused_at: None,
            gate_decisions: BTreeMap::new(),
            error: None,
            started_at: Utc::now(),
            finished_at: None,
            clock: RunClock::default(),
            active: Duration::ZERO,
        }
    }

    /// Outputs as plain JSON, as printed by the CLI.
    pub fn plain_outputs(&self) -> serde_json::Map<String, serde_json::Value> {
        self.outputs.iter().map(|(k, v)| (k.clone(), v.to_plain_json())).collect()
    }

    pub fn trace_jsonl(&self) -> String {
        self.trace.iter().map(|e| e.to_json_line() + "\n").collect()
    }

    pub fn events_for<'a>(&'a self, module_id: &'a str) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.trace.iter().filter(move |e| e.module_id.as_deref() == Some(module_id))
    }
}
