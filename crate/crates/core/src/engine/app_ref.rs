use std::sync::Arc;

use async_trait::async_trait;
use serde_json::json;

use crate::engine::{
    execute_run, input_slots, output_types, plan_run_at_depth, ModuleCall, ModuleError,
    ModuleExecutor, ModuleResult, RunState, MAX_NESTING,
};
use crate::model::{
    is_identifier, validate_at_depth, FlowDefinition, FlowSource, ModuleSpec, ParamKind, ParamMap, ParamSpec,
    PortSpec, ResolveEnv, ResolveError,
};

pub const APP_REFERENCE: &str = "AppReference";

/// Loads the flow an App Reference at nesting `depth` points to.
pub fn resolve_app_reference(
    flow_id: &str,
    store: Option<&dyn FlowSource>,
    depth: usize,
) -> Result<FlowDefinition, ResolveError> {
    if depth > MAX_NESTING {
        return Err(ResolveError::new(
            "depth-exceeded",
            format!("App Reference nesting exceeds {MAX_NESTING} levels at flow '{flow_id}'"),
        ));
    }
    store
        .and_then(|s| s.load_flow(flow_id))
        .ok_or_else(|| ResolveError::new("unknown-flow", format!("no stored flow with id '{flow_id}'")))
}

pub(crate) fn template() -> ModuleSpec {
    ModuleSpec::new(APP_REFERENCE, "Runs another stored flow; its external inputs and outputs become this module's ports.")
        .param(ParamSpec::required("FlowId", ParamKind::Text, "Id of the referenced flow"))
}

/// Ports come from the referenced flow, typed by resolving it one level deeper.
pub(crate) fn resolve_spec(spec: &ModuleSpec, params: &ParamMap, env: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    let flow_id = params.get("FlowId").and_then(|v| v.as_text()).unwrap_or_default();
    let inner_depth = env.depth + 1;
    let flow = resolve_app_reference(flow_id, env.catalog.flows().map(|f| f.as_ref()), inner_depth)?;
    let (report, specs) = validate_at_depth(&flow, env.catalog, inner_depth);
    if !report.ok {
        if let Some(deep) = report.errors().find(|i| i.code == "depth-exceeded") {
            return Err(ResolveError::new("depth-exceeded", deep.message.clone()));
        }
        return Err(ResolveError::invalid_param(format!(
            "referenced flow '{flow_id}' is invalid: {}",
            report.error_codes().join(", ")
        )));
    }
    let mut out = spec.clone();
    for (name, slot) in input_slots(&flow, &specs) {
        check_port_name(flow_id, &name)?;
        out.inputs.push(if slot.required { PortSpec::input(name, slot.ty) } else { PortSpec::optional_input(name, slot.ty) });
    }
    for (name, ty) in output_types(&flow, &specs) {
        check_port_name(flow_id, &name)?;
        if out.input_port(&name).is_some() {
            return Err(ResolveError::invalid_param(format!(
                "referenced flow '{flow_id}' uses '{name}' as both an input and an output name"
            )));
        }
        out.outputs.push(PortSpec::output(name, ty));
    }
    Ok(out)
}

fn check_port_name(flow_id: &str, name: &str) -> Result<(), ResolveError> {
    if is_identifier(name) {
        Ok(())
    } else {
        Err(ResolveError::invalid_param(format!(
            "referenced flow '{flow_id}' has external name '{name}', which is not a valid port name"
        )))
    }
}

pub(crate) struct AppReferenceExecutor;

#[async_trait]
impl ModuleExecutor for AppReferenceExecutor {
    async fn execute(&self, call: ModuleCall) -> Result<ModuleResult, ModuleError> {
        let flow_id = call.param_text("FlowId").to_string();
        let depth = call.depth + 1;
        let catalog = call.ctx.catalog.clone();
        let flow = resolve_app_reference(&flow_id, catalog.flows().map(|f| f.as_ref()), depth)
            .map_err(|e| ModuleError::new(e.message))?;
        let plan = plan_run_at_depth(&flow, &catalog, call.inputs.clone(), depth)
            .map_err(|e| ModuleError::new(format!("cannot run '{flow_id}': {e}")))?;
        let mut inner_ctx = (*call.ctx).clone();
        inner_ctx.observer = None;
        let run = execute_run(plan, Arc::new(inner_ctx)).await;
        let detail = json!({ "flowId": flow_id, "innerRunId": run.run_id, "innerTrace": run.trace });
        match run.state {
            RunState::Completed => Ok(ModuleResult { outputs: run.outputs, detail }),
            RunState::PausedForApproval => Err(ModuleError::new(format!(
                "gated module '{}' inside referenced flow '{flow_id}' needs approval, which nested runs cannot pause for",
                run.paused_at.unwrap_or_default()
            ))
            .with_detail(detail)),
            _ => Err(ModuleError::new(format!(
                "referenced flow '{flow_id}' failed: {}",
                run.error.unwrap_or_else(|| "unknown error".into())
            ))
            .with_detail(detail)),
        }
    }
}
