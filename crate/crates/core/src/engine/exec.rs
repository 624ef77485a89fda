use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Instant;

use chrono::Utc;
use serde_json::json;
use tokio::task::JoinSet;

use crate::engine::{
    EventKind, ExecutionContext, GateDecision, GatePolicy, ModuleCall, ModuleError, ModuleResult, ModuleState, Run,
    RunPlan, RunState, TraceEvent,
};
use crate::model::{Endpoint, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResumeError {
    #[error("run is {state:?}, not paused for approval")]
    WrongState { state: RunState },

    #[error("no pending gate at module '{module_id}'")]
    UnknownGate { module_id: String },
}

impl ResumeError {
    pub fn code(&self) -> &'static str {
        match self {
            ResumeError::WrongState { .. } => "wrong-state",
            ResumeError::UnknownGate { .. } => "unknown-gate",
        }
    }
}

pub fn new_run_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// Executes `plan` until it completes, fails or pauses at a gate.
pub async fn execute_run(plan: RunPlan, ctx: Arc<ExecutionContext>) -> Run {
    let mut run = Run::new(new_run_id(), plan);
    start_run(&mut run, &ctx);
    drive(&mut run, &ctx).await;
    run
}

/// Emits `run_started` for a fresh run. Split from [`execute_run`] so
/// callers can publish the run id before driving it.
pub fn start_run(run: &mut Run, ctx: &ExecutionContext) {
    let inputs: serde_json::Map<_, _> =
        run.plan.input_bindings.iter().map(|(k, v)| (k.clone(), serde_json::to_value(v).unwrap())).collect();
    let detail = json!({ "flow": run.plan.flow.name, "inputs": inputs, "depth": run.plan.depth });
    emit(run, ctx, EventKind::RunStarted, None, detail);
}

/// Checks a gate decision without applying it. `Ok(false)` means the same
/// decision was already recorded and resuming is a no-op.
pub fn check_resume(run: &Run, module_id: &str, decision: GateDecision) -> Result<bool, ResumeError> {
    if run.gate_decisions.get(module_id) == Some(&decision) {
        return Ok(false);
    }
    if run.state != RunState::PausedForApproval {
        return Err(ResumeError::WrongState { state: run.state });
    }
    if run.paused_at.as_deref() != Some(module_id) {
        return Err(ResumeError::UnknownGate { module_id: module_id.to_string() });
    }
    Ok(true)
}

/// Records a gate decision and, on approval, continues the run.
///
/// Repeating the decision already taken for a gate is a no-op.
pub async fn resume_run(
    mut run: Run,
    module_id: &str,
    decision: GateDecision,
    ctx: Arc<ExecutionContext>,
) -> Result<Run, ResumeError> {
    if !check_resume(&run, module_id, decision)? {
        return Ok(run);
    }
    run.gate_decisions.insert(module_id.to_string(), decision);
    run.paused_at = None;
    emit(&mut run, &ctx, EventKind::GateDecided, Some(module_id), json!({ "decision": decision, "auto": false }));
    match decision {
        GateDecision::Approve => {
            run.state = RunState::Running;
            drive(&mut run, &ctx).await;
        }
        GateDecision::Reject => {
            for state in run.module_states.values_mut() {
                if matches!(state, ModuleState::Pending | ModuleState::Ready) {
                    *state = ModuleState::Skipped;
                }
            }
            run.state = RunState::Rejected;
            run.finished_at = Some(Utc::now());
            emit(&mut run, &ctx, EventKind::RunFailed, None, json!({ "reason": "rejected", "module": module_id }));
        }
    }
    Ok(run)
}

pub(crate) fn emit(run: &mut Run, ctx: &ExecutionContext, event: EventKind, module_id: Option<&str>, detail: serde_json::Value) {
    let ev = TraceEvent { ts: run.clock.now(), event, module_id: module_id.map(str::to_string), detail };
    if let Some(obs) = &ctx.observer {
        obs.on_event(&run.run_id, &ev);
    }
    run.trace.push(ev);
}

fn tagged(map: &BTreeMap<String, Value>) -> serde_json::Value {
    serde_json::to_value(map).unwrap()
}

/// Input ports of each module that will receive a value: connection
/// targets plus externally bound ports.
fn fed_ports(plan: &RunPlan) -> HashMap<String, BTreeSet<String>> {
    let mut fed: HashMap<String, BTreeSet<String>> = HashMap::new();
    for c in &plan.flow.connections {
        fed.entry(c.to.module.clone()).or_default().insert(c.to.port.clone());
    }
    for e in &plan.flow.external_inputs {
        if plan.input_bindings.contains_key(&e.name) {
            fed.entry(e.target.module.clone()).or_default().insert(e.target.port.clone());
        }
    }
    fed
}

fn gather_inputs(run: &Run, module_id: &str, ports: Option<&BTreeSet<String>>) -> BTreeMap<String, Value> {
    ports
        .into_iter()
        .flatten()
        .filter_map(|p| run.port_values.get(&Endpoint::new(module_id, p.as_str())).map(|v| (p.clone(), v.clone())))
        .collect()
}

fn mark_downstream_skipped(run: &mut Run, from: &str) {
    let mut stack = vec![from.to_string()];
    while let Some(id) = stack.pop() {
        for c in run.plan.flow.connections.iter().filter(|c| c.from.module == id) {
            let state = run.module_states.get_mut(&c.to.module).unwrap();
            if matches!(state, ModuleState::Pending | ModuleState::Ready) {
                *state = ModuleState::Skipped;
                stack.push(c.to.module.clone());
            }
        }
    }
}

/// Code about to run at a gate, for the reviewer.
fn gate_code(run: &Run, module_id: &str, inputs: &BTreeMap<String, Value>) -> Option<String> {
    let m = run.plan.flow.get_module(module_id)?;
    inputs
        .get("Code")
        .and_then(Value::as_text)
        .map(str::to_string)
        .or_else(|| m.params.get("Code").and_then(|p| p.as_text()).map(str::to_string))
}

/// Runs the scheduling loop until quiescence.
pub(crate) async fn drive(run: &mut Run, ctx: &Arc<ExecutionContext>) {
    let segment_start = Instant::now();
    let budget = ctx.deadline.saturating_sub(run.active);
    let fed = fed_ports(&run.plan);
    let mut tasks: JoinSet<(String, Result<ModuleResult, ModuleError>)> = JoinSet::new();
    let mut in_flight: HashMap<tokio::task::Id, String> = HashMap::new();

    loop {
        let mut gate_wait: Option<String> = None;
        let order = run.plan.topological_order.clone();
        for id in &order {
            if !ctx.parallel && !in_flight.is_empty() {
                break;
            }
            if !matches!(run.module_states[id], ModuleState::Pending | ModuleState::Ready) {
                continue;
            }
            let ports = fed.get(id);
            let ready = ports
                .into_iter()
                .flatten()
                .all(|p| run.port_values.contains_key(&Endpoint::new(id.as_str(), p.as_str())));
            if !ready {
                continue;
            }
            let module = run.plan.flow.get_module(id).unwrap().clone();
            if module.gated && !run.gate_decisions.contains_key(id) {
                match ctx.gate_policy {
                    GatePolicy::Require => {
                        run.module_states.insert(id.clone(), ModuleState::Ready);
                        gate_wait.get_or_insert_with(|| id.clone());
                        continue;
                    }
                    GatePolicy::Auto => {
                        run.gate_decisions.insert(id.clone(), GateDecision::Approve);
                        emit(run, ctx, EventKind::GateDecided, Some(id), json!({ "decision": "approve", "auto": true }));
                    }
                }
            }
            let spec = run.plan.resolved_specs[id].clone();
            let inputs = gather_inputs(run, id, ports);
            run.module_states.insert(id.clone(), ModuleState::Executing);
            emit(run, ctx, EventKind::ModuleStarted, Some(id), json!({ "kind": module.kind }));
            let call = ModuleCall {
                run_id: run.run_id.clone(),
                module_id: id.clone(),
                kind: module.kind.clone(),
                params: spec.effective_params(&module.params),
                spec,
                inputs,
                depth: run.plan.depth,
                ctx: ctx.clone(),
            };
            let executor = ctx.executors.get(&module.kind);
            let mid = id.clone();
            let handle = tasks.spawn(async move {
                let result = match executor {
                    Some(ex) => ex.execute(call).await,
                    None => Err(ModuleError::new(format!("no executor registered for kind '{}'", call.kind))),
                };
                (mid, result)
            });
            in_flight.insert(handle.id(), id.clone());
        }

        if in_flight.is_empty() {
            run.active += segment_start.elapsed();
            match gate_wait {
                Some(g) => pause(run, ctx, &g, fed.get(&g)),
                None => finish(run, ctx),
            }
            return;
        }

        let remaining = budget.saturating_sub(segment_start.elapsed());
        match tokio::time::timeout(remaining, tasks.join_next_with_id()).await {
            Err(_) => {
                tasks.abort_all();
                run.active += segment_start.elapsed();
                deadline_exceeded(run, ctx);
                return;
            }
            Ok(None) => unreachable!("in-flight tasks are tracked"),
            Ok(Some(Ok((task_id, (id, result))))) => {
                in_flight.remove(&task_id);
                complete_module(run, ctx, &id, result);
            }
            Ok(Some(Err(join_err))) => {
                let id = in_flight.remove(&join_err.id()).expect("tracked task");
                complete_module(run, ctx, &id, Err(ModuleError::new(format!("executor panicked: {join_err}"))));
            }
        }
    }
}

fn complete_module(run: &mut Run, ctx: &ExecutionContext, id: &str, result: Result<ModuleResult, ModuleError>) {
    let spec = run.plan.resolved_specs[id].clone();
    let result = result.and_then(|r| {
        let mut outs = BTreeMap::new();
        for port in &spec.outputs {
            let v = r
                .outputs
                .get(&port.name)
                .ok_or_else(|| ModuleError::new(format!("executor produced no value for output '{}'", port.name)))?;
            let v = v.coerce_to(&port.ty).ok_or_else(|| {
                ModuleError::new(format!("output '{}' is {} but is declared {}", port.name, v.port_type(), port.ty))
            })?;
            outs.insert(port.name.clone(), v);
        }
        Ok((outs, r.detail))
    });
    match result {
        Ok((outs, extra)) => {
            for (port, v) in &outs {
                let from = Endpoint::new(id, port.as_str());
                for c in run.plan.flow.connections.iter().filter(|c| c.from == from) {
                    let dst_ty = &run.plan.resolved_specs[&c.to.module].input_port(&c.to.port).unwrap().ty;
                    let coerced = v.coerce_to(dst_ty).expect("validated connection is assignable");
                    run.port_values.insert(c.to.clone(), coerced);
                }
                run.port_values.insert(from, v.clone());
            }
            run.module_states.insert(id.to_string(), ModuleState::Done);
            let mut detail = json!({ "outputs": tagged(&outs) });
            merge(&mut detail, extra);
            emit(run, ctx, EventKind::ModuleCompleted, Some(id), detail);
        }
        Err(e) => {
            run.module_states.insert(id.to_string(), ModuleState::Failed);
            mark_downstream_skipped(run, id);
            if run.error.is_none() {
                run.error = Some(format!("{id}: {}", e.message));
            }
            let mut detail = json!({ "error": e.message });
            merge(&mut detail, e.detail);
            emit(run, ctx, EventKind::ModuleFailed, Some(id), detail);
        }
    }
}

fn merge(into: &mut serde_json::Value, extra: serde_json::Value) {
    let obj = into.as_object_mut().expect("detail is an object");
    match extra {
        serde_json::Value::Object(extra) => {
            for (k, v) in extra {
                obj.entry(k).or_insert(v);
            }
        }
        serde_json::Value::Null => {}
        other => {
            obj.insert("info".into(), other);
        }
    }
}

fn pause(run: &mut Run, ctx: &ExecutionContext, module_id: &str, ports: Option<&BTreeSet<String>>) {
    let inputs = gather_inputs(run, module_id, ports);
    let m = run.plan.flow.get_module(module_id).unwrap();
    let detail = json!({
        "kind": m.kind,
        "params": m.params,
        "inputs": tagged(&inputs),
        "code": gate_code(run, module_id, &inputs),
    });
    run.state = RunState::PausedForApproval;
    run.paused_at = Some(module_id.to_string());
    emit(run, ctx, EventKind::RunPaused, Some(module_id), detail);
}

fn finish(run: &mut Run, ctx: &ExecutionContext) {
    for state in run.module_states.values_mut() {
        if matches!(state, ModuleState::Pending | ModuleState::Ready) {
            *state = ModuleState::Skipped;
        }
    }
    run.finished_at = Some(Utc::now());
    let failed: Vec<String> =
        run.module_states.iter().filter(|(_, s)| **s == ModuleState::Failed).map(|(id, _)| id.clone()).collect();
    if !failed.is_empty() {
        run.state = RunState::Failed;
        let detail = json!({ "reason": "module_failed", "failed": failed, "error": run.error });
        emit(run, ctx, EventKind::RunFailed, None, detail);
        return;
    }
    let mut outputs = BTreeMap::new();
    for e in &run.plan.flow.external_outputs {
        match run.port_values.get(&e.source) {
            Some(v) => {
                outputs.insert(e.name.clone(), v.clone());
            }
            None => {
                run.state = RunState::Failed;
                run.error = Some(format!("output '{}' was never produced", e.name));
                let detail = json!({ "reason": "unbound_output", "error": run.error });
                emit(run, ctx, EventKind::RunFailed, None, detail);
                return;
            }
        }
    }
    run.outputs = outputs;
    run.state = RunState::Completed;
    let detail = json!({ "outputs": tagged(&run.outputs) });
    emit(run, ctx, EventKind::RunCompleted, None, detail);
}

fn deadline_exceeded(run: &mut Run, ctx: &ExecutionContext) {
    let message = format!("run deadline of {} ms exceeded", ctx.deadline.as_millis());
    let executing: Vec<String> = run
        .module_states
        .iter()
        .filter(|(_, s)| **s == ModuleState::Executing)
        .map(|(id, _)| id.clone())
        .collect();
    for id in &executing {
        run.module_states.insert(id.clone(), ModuleState::Failed);
        emit(run, ctx, EventKind::ModuleFailed, Some(id), json!({ "error": message }));
    }
    for state in run.module_states.values_mut() {
        if matches!(state, ModuleState::Pending | ModuleState::Ready) {
            *state = ModuleState::Skipped;
        }
    }
    run.state = RunState::Failed;
    run.error = Some(message.clone());
    run.finished_at = Some(Utc::now());
    emit(run, ctx, EventKind::RunFailed, None, json!({ "reason": "deadline", "error": message }));
}
