//! Run planning and execution: ready-set scheduling over a single-activation
//! DAG, approval gates, nested App Reference runs and the run trace.

mod app_ref;
mod context;
mod exec;
mod plan;
mod run;

pub use app_ref::{resolve_app_reference, APP_REFERENCE};
pub(crate) use app_ref::{resolve_spec as resolve_app_reference_spec, template as app_reference_template, AppReferenceExecutor};
pub use context::{
    value_text, ExecutionContext, ExecutorRegistry, GatePolicy, HttpConfig, InterpreterConfig, ModuleCall, ModuleError,
    ModuleExecutor, ModuleResult, RunObserver, DEFAULT_DEADLINE, DEFAULT_SCRIPT_TIMEOUT, MAX_NESTING,
};
pub use exec::{check_resume, execute_run, new_run_id, resume_run, start_run, ResumeError};
pub(crate) use exec::drive;
pub use plan::{bind_json_inputs, input_slots, output_types, plan_run, plan_run_at_depth, InputSlot, PlanError, RunPlan};
pub use run::{EventKind, GateDecision, ModuleState, Run, RunState, TraceEvent};

/// Drives a run created with [`Run::new`] and [`start_run`].
pub async fn continue_run(run: &mut Run, ctx: &std::sync::Arc<ExecutionContext>) {
    drive(run, ctx).await
}
