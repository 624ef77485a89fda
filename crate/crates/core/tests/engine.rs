mod support;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use jitflow_core::dsl::parse_dsl;
use jitflow_core::engine::*;
use jitflow_core::model::{validate_flow, FlowDefinition, MemoryFlows, PortType, Value};
use jitflow_core::stdlib::standard_context;
use proptest::prelude::*;
use support::*;

fn add() -> FlowDefinition {
    flow("add.flow.json")
}

#[test]
fn plan_binds_inputs() {
    let c = ctx();
    let plan = plan_run(&add(), &c.catalog, inputs(&[("x", Value::Int(2)), ("y", Value::Int(3))])).unwrap();
    assert_eq!(plan.topological_order.len(), 4);
    assert_eq!(plan.input_bindings.len(), 2);
    let err = plan_run(&add(), &c.catalog, inputs(&[("x", Value::Int(2))])).unwrap_err();
    assert!(matches!(&err, PlanError::MissingInput { name } if name == "y"), "{err:?}");
    let err = plan_run(&add(), &c.catalog, inputs(&[("x", Value::Int(2)), ("y", Value::text("3"))])).unwrap_err();
    assert!(matches!(&err, PlanError::TypeMismatch { name, expected: PortType::Int, .. } if name == "y"), "{err:?}");
}

#[test]
fn int_widens_to_real_at_binding() {
    let f = parse_dsl(
        r#"flow "r" {
  module c: Calculator { Mode = "Real" }
  module o: ExternalStringOutput
  connect c.Result -> o.Input
  extern input c.Param1 as "x"
  extern input c.Param2 as "y"
  extern output o.Result as "out"
}"#,
    )
    .unwrap();
    let plan = plan_run(&f, &ctx().catalog, inputs(&[("x", Value::Int(2)), ("y", Value::Real(0.5))])).unwrap();
    assert_eq!(plan.input_bindings["x"], Value::Real(2.0));
}

#[tokio::test]
async fn add_flow_runs() {
    let ctx = Arc::new(ctx());
    let run = run_flow(&add(), inputs(&[("x", Value::Int(2)), ("y", Value::Int(3))]), &ctx).await;
    assert_eq!(run.state, RunState::Completed);
    assert_eq!(run.plain_outputs(), serde_json::json!({"sum": 5}).as_object().unwrap().clone());
    assert!(run.module_states.values().all(|s| *s == ModuleState::Done));
    assert_eq!(run.trace.first().unwrap().event, EventKind::RunStarted);
    assert_eq!(run.trace.last().unwrap().event, EventKind::RunCompleted);
    for line in run.trace_jsonl().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v.as_object().unwrap().keys().collect::<Vec<_>>(), ["detail", "event", "moduleId", "ts"]);
    }
}

#[tokio::test]
async fn failing_script_skips_downstream() {
    let ctx = Arc::new(ctx());
    let run = run_flow(&flow("script-fails.flow"), BTreeMap::new(), &ctx).await;
    assert_eq!(run.state, RunState::Failed);
    assert_eq!(run.module_states["script"], ModuleState::Failed);
    assert_eq!(run.module_states["out"], ModuleState::Skipped);
    assert!(run.error.as_deref().unwrap().contains("exit code 3"));
    let last = run.trace.last().unwrap();
    assert_eq!(last.event, EventKind::RunFailed);
    assert_eq!(last.detail["reason"], "module_failed");
}

fn gated_ctx() -> Arc<ExecutionContext> {
    Arc::new(ctx().with_gate_policy(GatePolicy::Require))
}

async fn paused_echo(ctx: &Arc<ExecutionContext>) -> Run {
    let run = run_flow(&flow("gated-echo.flow"), inputs(&[("word", Value::text("hi"))]), ctx).await;
    assert_eq!(run.state, RunState::PausedForApproval);
    assert_eq!(run.paused_at.as_deref(), Some("echo"));
    run
}

#[tokio::test]
async fn gate_pauses_with_resolved_inputs_then_approves() {
    let ctx = gated_ctx();
    let run = paused_echo(&ctx).await;
    let paused = run.trace.iter().find(|e| e.event == EventKind::RunPaused).unwrap();
    assert_eq!(paused.module_id.as_deref(), Some("echo"));
    assert_eq!(paused.detail["code"], "import sys\nprint(sys.argv[1])\n");
    assert_eq!(paused.detail["inputs"]["Arg0"], serde_json::json!({"type": "Text", "value": "hi"}));
    assert!(run.events_for("echo").all(|e| e.event != EventKind::ModuleStarted));
    let run = resume_run(run, "echo", GateDecision::Approve, ctx.clone()).await.unwrap();
    assert_eq!(run.state, RunState::Completed);
    assert_eq!(run.outputs["echo"], Value::text("hi"));
    let again = resume_run(run.clone(), "echo", GateDecision::Approve, ctx.clone()).await.unwrap();
    assert_eq!(again.trace.len(), run.trace.len());
    let err = resume_run(run, "echo", GateDecision::Reject, ctx).await.unwrap_err();
    assert!(matches!(err, ResumeError::WrongState { state: RunState::Completed }));
}

#[tokio::test]
async fn gate_reject_never_starts_the_script() {
    let ctx = gated_ctx();
    let run = paused_echo(&ctx).await;
    let err = resume_run(run.clone(), "word", GateDecision::Approve, ctx.clone()).await.unwrap_err();
    assert!(matches!(err, ResumeError::UnknownGate { .. }));
    let run = resume_run(run, "echo", GateDecision::Reject, ctx).await.unwrap();
    assert_eq!(run.state, RunState::Rejected);
    assert!(run.trace.iter().any(|e| e.event == EventKind::GateDecided && e.detail["decision"] == "reject"));
    for id in ["echo", "out"] {
        assert!(run.events_for(id).all(|e| e.event != EventKind::ModuleStarted), "{id}");
        assert_eq!(run.module_states[id], ModuleState::Skipped);
    }
    assert!(run.trace.iter().all(|e| e.detail.get("workdir").is_none()));
}

#[tokio::test]
async fn auto_policy_runs_gated_modules() {
    let ctx = Arc::new(ctx());
    let run = run_flow(&flow("gated-echo.flow"), inputs(&[("word", Value::text("hi"))]), &ctx).await;
    assert_eq!(run.state, RunState::Completed);
    let decided = run.events_for("echo").find(|e| e.event == EventKind::GateDecided).unwrap();
    assert_eq!(decided.detail["auto"], true);
}

#[tokio::test]
async fn deadline_fails_the_run() {
    let ctx = Arc::new(ctx().with_deadline(Duration::from_millis(300)));
    let f = parse_dsl(
        r#"flow "slow" {
  module s: CodeScript { Code = "import time\ntime.sleep(5)\n", ArgCount = 0 }
  module o: ExternalStringOutput
  connect s.Stdout -> o.Input
  extern output o.Result as "out"
}"#,
    )
    .unwrap();
    let started = std::time::Instant::now();
    let run = run_flow(&f, BTreeMap::new(), &ctx).await;
    assert!(started.elapsed() < Duration::from_secs(3));
    assert_eq!(run.state, RunState::Failed);
    assert_eq!(run.trace.last().unwrap().detail["reason"], "deadline");
}

fn app_ref_flow(name: &str, target: &str) -> FlowDefinition {
    parse_dsl(&format!(
        r#"flow "{name}" {{
  module inner: AppReference {{ FlowId = "{target}" }}
  module o: ExternalIntOutput
  connect inner.sum -> o.Input
  extern input inner.x as "x"
  extern input inner.y as "y"
  extern output o.Result as "sum"
}}"#
    ))
    .unwrap()
}

#[tokio::test]
async fn app_reference_runs_inner_flow() {
    let store = Arc::new(MemoryFlows::new());
    store.insert("add", add());
    let ctx = Arc::new(standard_context(Some(store)));
    let outer = app_ref_flow("outer", "add");
    let spec = ctx.catalog.resolve("AppReference", &outer.get_module("inner").unwrap().params, 0).unwrap();
    assert_eq!(spec.inputs.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(), ["x", "y"]);
    assert_eq!(spec.outputs.iter().map(|p| (p.name.as_str(), p.ty.clone())).collect::<Vec<_>>(), [("sum", PortType::Int)]);
    let run = run_flow(&outer, inputs(&[("x", Value::Int(20)), ("y", Value::Int(22))]), &ctx).await;
    assert_eq!(run.outputs["sum"], Value::Int(42), "{:?}", run.error);
    let done = run.events_for("inner").find(|e| e.event == EventKind::ModuleCompleted).unwrap();
    assert_eq!(done.detail["flowId"], "add");
    assert!(done.detail["innerTrace"].as_array().unwrap().len() > 4);
}

#[test]
fn app_reference_to_jit_flow_exposes_one_input_two_outputs() {
    let c = ctx();
    let mut params = jitflow_core::model::ParamMap::new();
    params.insert("FlowId".into(), "jit-codegen".into());
    let spec = c.catalog.resolve("AppReference", &params, 0).unwrap();
    assert_eq!(spec.inputs.iter().map(|p| (p.name.as_str(), p.ty.clone())).collect::<Vec<_>>(), [("Prompt", PortType::Text)]);
    assert_eq!(
        spec.outputs.iter().map(|p| (p.name.as_str(), p.ty.clone())).collect::<Vec<_>>(),
        [("Code", PortType::Text), ("StatusCode", PortType::Int)]
    );
}

#[test]
fn app_reference_errors() {
    let store = Arc::new(MemoryFlows::new());
    store.insert("self", app_ref_flow("self", "self"));
    store.insert("ping", app_ref_flow("ping", "pong"));
    store.insert("pong", app_ref_flow("pong", "ping"));
    let c = standard_context(Some(store.clone()));
    let report = validate_flow(&app_ref_flow("missing", "nope"), &c.catalog);
    assert_eq!(report.error_codes(), ["unknown-flow"], "{report}");
    for id in ["self", "ping"] {
        let report = validate_flow(&app_ref_flow("top", id), &c.catalog);
        assert_eq!(report.error_codes(), ["depth-exceeded"], "{id}: {report}");
    }
    assert!(resolve_app_reference("self", Some(store.as_ref()), MAX_NESTING).is_ok());
    let err = resolve_app_reference("self", Some(store.as_ref()), MAX_NESTING + 1).unwrap_err();
    assert_eq!(err.code, "depth-exceeded");
}

#[tokio::test]
async fn sixteen_levels_of_nesting_run() {
    let store = Arc::new(MemoryFlows::new());
    store.insert("level0", add());
    for i in 1..=MAX_NESTING {
        store.insert(format!("level{i}"), app_ref_flow(&format!("level{i}"), &format!("level{}", i - 1)));
    }
    let ctx = Arc::new(standard_context(Some(store.clone())));
    let top = app_ref_flow("top", &format!("level{}", MAX_NESTING - 1));
    let run = run_flow(&top, inputs(&[("x", Value::Int(1)), ("y", Value::Int(2))]), &ctx).await;
    assert_eq!(run.outputs["sum"], Value::Int(3), "{:?}", run.error);
    let too_deep = app_ref_flow("top", &format!("level{MAX_NESTING}"));
    assert_eq!(validate_flow(&too_deep, &ctx.catalog).error_codes(), ["depth-exceeded"]);
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap()
}

fn int_inputs(xs: &[i64]) -> BTreeMap<String, Value> {
    xs.iter().enumerate().map(|(i, x)| (format!("x{i}"), Value::Int(*x))).collect()
}

fn check_trace(run: &Run, flow: &FlowDefinition) -> Result<(), TestCaseError> {
    check_delivery(run, flow).map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_dags_deliver_topologically_and_match_serial((dag, xs) in arb_dag_inputs()) {
        let rt = runtime();
        let f = dag.flow();
        let expected: BTreeMap<String, Value> = dag.evaluate(&xs).into_iter().map(|(k, v)| (k, Value::Int(v))).collect();
        let parallel = Arc::new(ctx());
        let serial = Arc::new(ctx().with_parallel(false));
        let (p, s) = rt.block_on(async {
            (run_flow(&f, int_inputs(&xs), &parallel).await, run_flow(&f, int_inputs(&xs), &serial).await)
        });
        prop_assert_eq!(p.state, RunState::Completed);
        prop_assert_eq!(&p.outputs, &expected);
        prop_assert_eq!(&s.outputs, &p.outputs);
        check_trace(&p, &f)?;
        check_trace(&s, &f)?;
    }

    #[test]
    fn rejected_gates_start_nothing_downstream((dag, xs) in arb_dag_inputs(), reject_at in 0usize..4) {
        let rt = runtime();
        let f = dag.flow();
        let ctx = gated_ctx();
        let mut run = rt.block_on(run_flow(&f, int_inputs(&xs), &ctx));
        let mut gates = 0;
        while run.state == RunState::PausedForApproval {
            let gate = run.paused_at.clone().unwrap();
            if gates == reject_at {
                run = rt.block_on(resume_run(run, &gate, GateDecision::Reject, ctx.clone())).unwrap();
                prop_assert_eq!(run.state, RunState::Rejected);
                for id in dag.downstream(&f, &gate) {
                    prop_assert!(run.events_for(&id).all(|e| e.event != EventKind::ModuleStarted), "{} started", id);
                }
            } else {
                run = rt.block_on(resume_run(run, &gate, GateDecision::Approve, ctx.clone())).unwrap();
            }
            gates += 1;
        }
        if run.state == RunState::Completed {
            let expected: BTreeMap<String, Value> = dag.evaluate(&xs).into_iter().map(|(k, v)| (k, Value::Int(v))).collect();
            prop_assert_eq!(&run.outputs, &expected);
        }
        check_trace(&run, &f)?;
    }
}
