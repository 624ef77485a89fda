//! Live runs: one engine task per run, a persisted trace, and event
//! subscriptions that replay from the first event.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::sync::{Arc, Mutex};

use futures::stream::{self, BoxStream, StreamExt};
use jitflow_core::engine::{
    bind_json_inputs, check_resume, continue_run, new_run_id, plan_run, resume_run, start_run, EventKind,
    ExecutionContext, GateDecision, GatePolicy, PlanError, ResumeError, Run, RunObserver, RunState, TraceEvent,
};
use jitflow_core::model::FlowDefinition;
use serde_json::{json, Map, Value as Json};
use tokio::sync::watch;

use crate::store::{RunStatus, RunStore};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("unknown run '{0}'")]
    UnknownRun(String),

    #[error(transparent)]
    Plan(#[from] PlanError),

    #[error(transparent)]
    Resume(#[from] ResumeError),

    #[error("run storage failed: {0}")]
    Io(#[from] io::Error),
}

/// A run's status together with its plain JSON outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSnapshot {
    pub status: RunStatus,
    pub outputs: Map<String, Json>,
}

struct HandleState {
    status: RunStatus,
    events: Vec<TraceEvent>,
    outputs: Map<String, Json>,
    decisions: BTreeMap<String, GateDecision>,
    /// The engine's run while it is parked; `None` while a task drives it.
    run: Option<Run>,
}

struct RunHandle {
    state: Mutex<HandleState>,
    ctx: Arc<ExecutionContext>,
    events_seen: watch::Sender<usize>,
}

/// Appends the run's own events to memory and `trace.jsonl`.
struct Recorder {
    run_id: String,
    handle: std::sync::Weak<RunHandle>,
    store: Arc<RunStore>,
}

impl RunObserver for Recorder {
    fn on_event(&self, run_id: &str, event: &TraceEvent) {
        if run_id != self.run_id {
            return;
        }
        let Some(handle) = self.handle.upgrade() else { return };
        let count = {
            let mut st = handle.state.lock().unwrap();
            if let Err(e) = self.store.append_event(run_id, event) {
                tracing::error!(run_id, error = %e, "cannot append trace event");
            }
            st.events.push(event.clone());
            let status_changed = match event.event {
                EventKind::RunPaused => {
                    st.status.state = RunState::PausedForApproval;
                    st.status.paused_at = event.module_id.clone();
                    true
                }
                EventKind::GateDecided if event.detail["auto"] == false => {
                    st.status.state = RunState::Running;
                    st.status.paused_at = None;
                    true
                }
                _ => false,
            };
            if status_changed {
                if let Err(e) = self.store.write_status(&st.status) {
                    tracing::error!(run_id, error = %e, "cannot write run status");
                }
            }
            st.events.len()
        };
        handle.events_seen.send_replace(count);
    }
}

/// Parks a run the engine has returned and persists its status.
fn park(store: &RunStore, handle: &RunHandle, run: Run) {
    let mut st = handle.state.lock().unwrap();
    st.status.state = run.state;
    st.status.paused_at = run.paused_at.clone();
    st.status.error = run.error.clone();
    st.status.finished_at = run.finished_at;
    st.outputs = run.plain_outputs();
    st.decisions = run.gate_decisions.clone();
    if run.state.is_terminal() {
        if let Err(e) = store.write_outputs(&run.run_id, &st.outputs) {
            tracing::error!(run_id = %run.run_id, error = %e, "cannot write outputs");
        }
    }
    if let Err(e) = store.write_status(&st.status) {
        tracing::error!(run_id = %run.run_id, error = %e, "cannot write run status");
    }
    st.run = Some(run);
}

/// Starts, tracks and resumes runs.
pub struct RunManager {
    store: Arc<RunStore>,
    base: ExecutionContext,
    runs: Mutex<HashMap<String, Arc<RunHandle>>>,
}

impl RunManager {
    pub fn new(store: Arc<RunStore>, base: ExecutionContext) -> Self {
        Self { store, base, runs: Mutex::new(HashMap::new()) }
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    fn handle(&self, run_id: &str) -> Option<Arc<RunHandle>> {
        self.runs.lock().unwrap().get(run_id).cloned()
    }

    /// Binds `inputs`, persists the run and starts it in the background.
    /// Returns the run id once `run_started` is recorded.
    pub fn start(
        &self,
        flow_id: &str,
        flow: &FlowDefinition,
        inputs: &Map<String, Json>,
        require_approval: bool,
    ) -> Result<String, RunError> {
        let bound = bind_json_inputs(flow, &self.base.catalog, inputs)?;
        let plan = plan_run(flow, &self.base.catalog, bound)?;
        let mut run = Run::new(new_run_id(), plan);
        let status = RunStatus {
            run_id: run.run_id.clone(),
            flow_id: flow_id.to_string(),
            state: RunState::Running,
            started_at: run.started_at,
            finished_at: None,
            paused_at: None,
            error: None,
        };
        let input = json!({ "flowId": flow_id, "inputs": inputs, "options": { "requireApproval": require_approval } });
        self.store.create(&status, &input)?;

        let policy = if require_approval { GatePolicy::Require } else { GatePolicy::Auto };
        let run_id = run.run_id.clone();
        let handle = Arc::new_cyclic(|weak| {
            let recorder = Recorder { run_id: run_id.clone(), handle: weak.clone(), store: self.store.clone() };
            RunHandle {
                state: Mutex::new(HandleState {
                    status,
                    events: Vec::new(),
                    outputs: Map::new(),
                    decisions: BTreeMap::new(),
                    run: None,
                }),
                ctx: Arc::new(self.base.clone().with_gate_policy(policy).with_observer(Arc::new(recorder))),
                events_seen: watch::channel(0).0,
            }
        });
        self.runs.lock().unwrap().insert(run_id.clone(), handle.clone());
        start_run(&mut run, &handle.ctx);
        let store = self.store.clone();
        tokio::spawn(async move {
            continue_run(&mut run, &handle.ctx).await;
            park(&store, &handle, run);
        });
        Ok(run_id)
    }

    /// Applies a gate decision. Terminal runs always answer `WrongState`;
    /// repeating the decision already recorded for a live run is a no-op.
    pub fn decide(&self, run_id: &str, module_id: &str, decision: GateDecision) -> Result<RunState, RunError> {
        let Some(handle) = self.handle(run_id) else {
            return match self.store.status(run_id)? {
                Some(status) => Err(ResumeError::WrongState { state: status.state }.into()),
                None => Err(RunError::UnknownRun(run_id.to_string())),
            };
        };
        let mut st = handle.state.lock().unwrap();
        if st.status.state.is_terminal() {
            return Err(ResumeError::WrongState { state: st.status.state }.into());
        }
        if st.decisions.get(module_id) == Some(&decision) {
            return Ok(st.status.state);
        }
        let Some(run) = st.run.as_ref() else {
            return Err(ResumeError::WrongState { state: RunState::Running }.into());
        };
        check_resume(run, module_id, decision)?;
        let run = st.run.take().expect("checked above");
        st.decisions.insert(module_id.to_string(), decision);
        drop(st);
        let store = self.store.clone();
        let module_id = module_id.to_string();
        tokio::spawn(async move {
            let run = resume_run(run, &module_id, decision, handle.ctx.clone()).await.expect("decision was checked");
            park(&store, &handle, run);
        });
        Ok(RunState::Running)
    }

    pub fn snapshot(&self, run_id: &str) -> Result<RunSnapshot, RunError> {
        if let Some(handle) = self.handle(run_id) {
            let st = handle.state.lock().unwrap();
            return Ok(RunSnapshot { status: st.status.clone(), outputs: st.outputs.clone() });
        }
        let status = self.store.status(run_id)?.ok_or_else(|| RunError::UnknownRun(run_id.to_string()))?;
        Ok(RunSnapshot { outputs: self.store.outputs(run_id)?, status })
    }

    pub fn trace_text(&self, run_id: &str) -> Result<String, RunError> {
        self.store.trace_text(run_id)?.ok_or_else(|| RunError::UnknownRun(run_id.to_string()))
    }

    /// Every event of the run from the first one, ending after the
    /// terminal event.
    pub fn events(&self, run_id: &str) -> Result<BoxStream<'static, TraceEvent>, RunError> {
        let Some(handle) = self.handle(run_id) else {
            if self.store.status(run_id)?.is_none() {
                return Err(RunError::UnknownRun(run_id.to_string()));
            }
            return Ok(stream::iter(self.store.trace(run_id)?).boxed());
        };
        let rx = handle.events_seen.subscribe();
        Ok(stream::unfold((handle, rx, 0usize, false), |(handle, mut rx, next, done)| async move {
            if done {
                return None;
            }
            loop {
                let event = handle.state.lock().unwrap().events.get(next).cloned();
                if let Some(ev) = event {
                    let terminal = ev.event.is_terminal();
                    return Some((ev, (handle, rx, next + 1, terminal)));
                }
                rx.changed().await.ok()?;
            }
        })
        .boxed())
    }
}
