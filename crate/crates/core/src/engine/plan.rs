use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{
    topological_order, validate_at_depth, FlowDefinition, ModuleCatalog, PortType, ResolvedSpecs, ValidationReport,
    Value,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("flow is invalid: {}", .0.error_codes().join(", "))]
    Invalid(ValidationReport),

    #[error("missing input '{name}'")]
    MissingInput { name: String },

    #[error("input '{name}' expects {expected}, got {found}")]
    TypeMismatch { name: String, expected: PortType, found: String },

    #[error("flow has no external input '{name}'")]
    UnknownInput { name: String },
}

impl PlanError {
    pub fn code(&self) -> &'static str {
        match self {
            PlanError::Invalid(_) => "invalid-flow",
            PlanError::MissingInput { .. } => "missing-input",
            PlanError::TypeMismatch { .. } => "type-mismatch",
            PlanError::UnknownInput { .. } => "unknown-input",
        }
    }
}

/// A validated flow with its inputs bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunPlan {
    pub flow: FlowDefinition,
    pub resolved_specs: ResolvedSpecs,
    pub input_bindings: BTreeMap<String, Value>,
    pub topological_order: Vec<String>,
    /// App Reference nesting depth (0 for a top-level run).
    pub depth: usize,
}

/// Declared type and requiredness of each external input.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSlot {
    pub ty: PortType,
    pub required: bool,
}

/// External input slots of a flow, from resolved specs. Inputs whose target
/// does not resolve are absent.
pub fn input_slots(flow: &FlowDefinition, specs: &ResolvedSpecs) -> BTreeMap<String, InputSlot> {
    flow.external_inputs
        .iter()
        .filter_map(|e| {
            let port = specs.get(&e.target.module)?.input_port(&e.target.port)?;
            Some((e.name.clone(), InputSlot { ty: port.ty.clone(), required: port.required }))
        })
        .collect()
}

/// Output types of a flow's external outputs.
pub fn output_types(flow: &FlowDefinition, specs: &ResolvedSpecs) -> BTreeMap<String, PortType> {
    flow.external_outputs
        .iter()
        .filter_map(|e| {
            let port = specs.get(&e.source.module)?.output_port(&e.source.port)?;
            Some((e.name.clone(), port.ty.clone()))
        })
        .collect()
}

pub fn plan_run(
    flow: &FlowDefinition,
    catalog: &ModuleCatalog,
    inputs: BTreeMap<String, Value>,
) -> Result<RunPlan, PlanError> {
    plan_run_at_depth(flow, catalog, inputs, 0)
}

/// Validates, then binds `inputs` with eager coercion.
pub fn plan_run_at_depth(
    flow: &FlowDefinition,
    catalog: &ModuleCatalog,
    inputs: BTreeMap<String, Value>,
    depth: usize,
) -> Result<RunPlan, PlanError> {
    let (report, specs) = validate_at_depth(flow, catalog, depth);
    if !report.ok {
        return Err(PlanError::Invalid(report));
    }
    let slots = input_slots(flow, &specs);
    if let Some(name) = inputs.keys().find(|k| !slots.contains_key(*k)) {
        return Err(PlanError::UnknownInput { name: name.clone() });
    }
    let mut bindings = BTreeMap::new();
    for (name, slot) in &slots {
        match inputs.get(name) {
            Some(v) => {
                let coerced = v.coerce_to(&slot.ty).ok_or_else(|| PlanError::TypeMismatch {
                    name: name.clone(),
                    expected: slot.ty.clone(),
                    found: v.port_type().to_string(),
                })?;
                bindings.insert(name.clone(), coerced);
            }
            None if slot.required => return Err(PlanError::MissingInput { name: name.clone() }),
            None => {}
        }
    }
    let order = topological_order(flow).expect("validated flows are acyclic");
    Ok(RunPlan { flow: flow.clone(), resolved_specs: specs, input_bindings: bindings, topological_order: order, depth })
}

/// Converts plain JSON inputs (as sent by the CLI or service) into values of
/// the flow's declared input types.
pub fn bind_json_inputs(
    flow: &FlowDefinition,
    catalog: &ModuleCatalog,
    inputs: &serde_json::Map<String, serde_json::Value>,
) -> Result<BTreeMap<String, Value>, PlanError> {
    let (report, specs) = validate_at_depth(flow, catalog, 0);
    if !report.ok {
        return Err(PlanError::Invalid(report));
    }
    let slots = input_slots(flow, &specs);
    let mut out = BTreeMap::new();
    for (name, json) in inputs {
        let slot = slots.get(name).ok_or_else(|| PlanError::UnknownInput { name: name.clone() })?;
        let v = Value::from_plain_json(json, &slot.ty).map_err(|e| PlanError::TypeMismatch {
            name: name.clone(),
            expected: slot.ty.clone(),
            found: e.to_string(),
        })?;
        out.insert(name.clone(), v);
    }
    Ok(out)
}
