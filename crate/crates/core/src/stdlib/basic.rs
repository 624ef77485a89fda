//! Externals, Calculator, Key Value Pair, String Formatter, JSONPath Query
//! and Regex Replace.

use async_trait::async_trait;

use crate::engine::{value_text, ModuleCall, ModuleError, ModuleExecutor, ModuleResult};
use crate::model::{
    KeyValue, ModuleSpec, ParamKind, ParamMap, ParamSpec, ParamValue, PortSpec, PortType, ResolveEnv, ResolveError,
    Value,
};
use crate::stdlib::text::{self, EscapeMode};
use crate::stdlib::{arity, MAX_ARITY};

/// Wraps a synchronous function as an executor.
pub(crate) struct SyncExec(pub fn(&ModuleCall) -> Result<ModuleResult, ModuleError>);

#[async_trait]
impl ModuleExecutor for SyncExec {
    async fn execute(&self, call: ModuleCall) -> Result<ModuleResult, ModuleError> {
        (self.0)(&call)
    }
}

fn param_to_value(p: &ParamValue, ty: &PortType) -> Option<Value> {
    match (p, ty) {
        (ParamValue::Int(i), PortType::Int) => Some(Value::Int(*i)),
        (ParamValue::Text(s), PortType::Text) => Some(Value::Text(s.clone())),
        (ParamValue::Bool(b), PortType::Bool) => Some(Value::Bool(*b)),
        (ParamValue::Int(i), PortType::Real) => Some(Value::Real(*i as f64)),
        (ParamValue::Real(r), PortType::Real) => Some(Value::Real(*r)),
        _ => None,
    }
}

pub(crate) fn external_input_spec(kind: &str, ty: PortType, default_kind: Option<ParamKind>) -> ModuleSpec {
    let mut spec = ModuleSpec::new(kind, &format!("Exposes a flow-level {ty} input on port Result."));
    if let Some(k) = default_kind {
        spec = spec.param(ParamSpec::optional("Default", k, "Value used when the input is not bound"));
    }
    spec.input(PortSpec::input("Input", ty.clone()).note("bind with extern input"))
        .output(PortSpec::output("Result", ty))
}

/// `Input` becomes optional once a default exists.
pub(crate) fn resolve_external_input(spec: &ModuleSpec, params: &ParamMap, _: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    let mut out = spec.clone();
    if let Some(d) = params.get("Default") {
        let ty = &spec.inputs[0].ty;
        param_to_value(d, ty).ok_or_else(|| ResolveError::invalid_param(format!("Default is not a valid {ty}")))?;
        out.inputs[0].required = false;
    }
    Ok(out)
}

pub(crate) fn exec_external_input(call: &ModuleCall) -> Result<ModuleResult, ModuleError> {
    let v = match call.input("Input") {
        Some(v) => v.clone(),
        None => {
            let ty = &call.spec.outputs[0].ty;
            call.param("Default")
                .and_then(|p| param_to_value(p, ty))
                .ok_or_else(|| ModuleError::new("input is not bound and no Default is set"))?
        }
    };
    Ok(ModuleResult::new().output("Result", v))
}

pub(crate) fn external_output_spec(kind: &str, ty: PortType) -> ModuleSpec {
    ModuleSpec::new(kind, &format!("Exposes port Result as a flow-level {ty} output."))
        .input(PortSpec::input("Input", ty.clone()))
        .output(PortSpec::output("Result", ty).note("bind with extern output"))
}

pub(crate) fn exec_passthrough(call: &ModuleCall) -> Result<ModuleResult, ModuleError> {
    let v = call.input("Input").cloned().ok_or_else(|| ModuleError::new("Input has no value"))?;
    Ok(ModuleResult::new().output("Result", v))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CalcError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("result is not a finite number")]
    NotFinite,
    #[error("unknown operator '{0}'")]
    UnknownOperator(String),
    #[error("{0} mode needs {0} operands")]
    Operand(&'static str),
}

/// Arithmetic on two operands. `mode` is "Int" or "Real"; Int division
/// truncates toward zero.
pub fn eval_calculator(op: &str, a: &Value, b: &Value, mode: &str) -> Result<Value, CalcError> {
    if mode == "Int" {
        let (Some(a), Some(b)) = (a.as_int(), b.as_int()) else {
            return Err(CalcError::Operand("Int"));
        };
        let r = match op {
            "+" => a.checked_add(b),
            "-" => a.checked_sub(b),
            "*" => a.checked_mul(b),
            "/" if b == 0 => return Err(CalcError::DivisionByZero),
            "/" => a.checked_div(b),
            other => return Err(CalcError::UnknownOperator(other.into())),
        };
        return r.map(Value::Int).ok_or(CalcError::Overflow);
    }
    let real = |v: &Value| match v {
        Value::Int(i) => Some(*i as f64),
        Value::Real(r) => Some(*r),
        _ => None,
    };
    let (Some(a), Some(b)) = (real(a), real(b)) else {
        return Err(CalcError::Operand("Real"));
    };
    let r = match op {
        "+" => a + b,
        "-" => a - b,
        "*" => a * b,
        "/" if b == 0.0 => return Err(CalcError::DivisionByZero),
        "/" => a / b,
        other => return Err(CalcError::UnknownOperator(other.into())),
    };
    if r.is_finite() {
        Ok(Value::Real(r))
    } else {
        Err(CalcError::NotFinite)
    }
}

pub(crate) fn calculator_spec() -> ModuleSpec {
    ModuleSpec::new("Calculator", "Applies + - * / to Param1 and Param2.")
        .param(ParamSpec::with_default("Operator", ParamKind::Text, "+", "Arithmetic operator").choices(&["+", "-", "*", "/"]))
        .param(ParamSpec::with_default("Mode", ParamKind::Text, "Int", "Number type of ports and result").choices(&["Int", "Real"]))
        .input(PortSpec::input("Param1", PortType::Int))
        .input(PortSpec::input("Param2", PortType::Int))
        .output(PortSpec::output("Result", PortType::Int))
}

pub(crate) fn resolve_calculator(spec: &ModuleSpec, params: &ParamMap, _: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    let ty = match params.get("Mode").and_then(ParamValue::as_text) {
        Some("Real") => PortType::Real,
        _ => PortType::Int,
    };
    let mut out = spec.clone();
    for p in out.inputs.iter_mut().chain(out.outputs.iter_mut()) {
        p.ty = ty.clone();
    }
    Ok(out)
}

pub(crate) fn exec_calculator(call: &ModuleCall) -> Result<ModuleResult, ModuleError> {
    let a = call.input("Param1").ok_or_else(|| ModuleError::new("Param1 has no value"))?;
    let b = call.input("Param2").ok_or_else(|| ModuleError::new("Param2 has no value"))?;
    let r = eval_calculator(call.param_text("Operator"), a, b, call.param_text("Mode")).map_err(|e| ModuleError::new(e.to_string()))?;
    Ok(ModuleResult::new().output("Result", r))
}

pub fn make_key_value(key: &str, value: &str) -> Result<KeyValue, crate::ValueError> {
    KeyValue::new(key, value)
}

pub(crate) fn key_value_spec() -> ModuleSpec {
    ModuleSpec::new("KeyValuePair", "Builds a key/value pair, e.g. an HTTP header.")
        .param(ParamSpec::required("Key", ParamKind::Text, "Key; ${VAR} references are expanded"))
        .param(ParamSpec::with_default("Value", ParamKind::Text, "", "Value; ${VAR} references are expanded"))
        .input(PortSpec::optional_input("ValueIn", PortType::Text).note("overrides the Value param"))
        .output(PortSpec::output("Result", PortType::KeyValue))
}

pub(crate) fn resolve_key_value(spec: &ModuleSpec, params: &ParamMap, _: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    if params.get("Key").and_then(ParamValue::as_text).is_some_and(str::is_empty) {
        return Err(ResolveError::invalid_param("Key must not be empty"));
    }
    Ok(spec.clone())
}

pub(crate) fn exec_key_value(call: &ModuleCall) -> Result<ModuleResult, ModuleError> {
    let value = match call.input_text("ValueIn") {
        Some(v) => v,
        None => call.expanded_param("Value"),
    };
    let kv = make_key_value(&call.expanded_param("Key"), &value).map_err(|e| ModuleError::new(e.to_string()))?;
    Ok(ModuleResult::new().output("Result", Value::KeyValue(kv)))
}

pub(crate) fn formatter_spec() -> ModuleSpec {
    ModuleSpec::new("StringFormatter", "Fills {0}, {1}, ... in Template from inputs Arg0, Arg1, ...")
        .param(ParamSpec::required("Template", ParamKind::Text, "Template; {{ and }} are literal braces, ${VAR} is expanded"))
        .param(ParamSpec::with_default("ArgCount", ParamKind::Int, 1i64, "Number of Arg inputs"))
        .param(ParamSpec::with_default("EscapeMode", ParamKind::Text, "none", "Escaping applied to arguments").choices(&["none", "json"]))
        .output(PortSpec::output("Result", PortType::Text))
}

pub(crate) fn resolve_formatter(spec: &ModuleSpec, params: &ParamMap, _: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    let n = arity(params, "ArgCount")?;
    let template = params.get("Template").and_then(ParamValue::as_text).unwrap_or_default();
    text::check_template(template, n).map_err(|e| ResolveError::invalid_param(format!("Template: {e}")))?;
    let mut out = spec.clone();
    out.inputs = (0..n).map(|i| PortSpec::input(format!("Arg{i}"), PortType::Text)).collect();
    Ok(out)
}

pub(crate) fn exec_formatter(call: &ModuleCall) -> Result<ModuleResult, ModuleError> {
    let n = call.param_int("ArgCount").clamp(0, MAX_ARITY as i64) as usize;
    let args: Vec<String> = (0..n).map(|i| call.input(&format!("Arg{i}")).map(value_text).unwrap_or_default()).collect();
    let mode: EscapeMode = call.param_text("EscapeMode").parse().map_err(ModuleError::new)?;
    let out = text::format_template(call.param_text("Template"), &args, mode, Some(&call.ctx.vars))
        .map_err(|e| ModuleError::new(e.to_string()))?;
    Ok(ModuleResult::new().output("Result", Value::Text(out)))
}

pub(crate) fn jsonpath_spec() -> ModuleSpec {
    ModuleSpec::new("JSONPathQuery", "Extracts a value from a JSON document ($, .field, [n], ['name']).")
        .param(ParamSpec::required("Path", ParamKind::Text, "JSONPath expression"))
        .input(PortSpec::input("Document", PortType::Text))
        .output(PortSpec::output("Result", PortType::Text).note("strings unquoted, other values as compact JSON"))
}

pub(crate) fn resolve_jsonpath(spec: &ModuleSpec, params: &ParamMap, _: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    let path = params.get("Path").and_then(ParamValue::as_text).unwrap_or_default();
    text::check_jsonpath(path).map_err(|e| ResolveError::invalid_param(e.to_string()))?;
    Ok(spec.clone())
}

pub(crate) fn exec_jsonpath(call: &ModuleCall) -> Result<ModuleResult, ModuleError> {
    let doc = call.input_text("Document").ok_or_else(|| ModuleError::new("Document has no value"))?;
    let out = text::query_jsonpath(&doc, call.param_text("Path")).map_err(|e| ModuleError::new(e.to_string()))?;
    Ok(ModuleResult::new().output("Result", Value::Text(out)))
}

pub(crate) fn regex_spec() -> ModuleSpec {
    ModuleSpec::new("RegexReplace", "Replaces every match of Pattern in Input; no match passes Input through.")
        .param(ParamSpec::required("Pattern", ParamKind::Text, "Regular expression"))
        .param(ParamSpec::with_default("Replacement", ParamKind::Text, "", "Replacement text; $1 refers to group 1"))
        .input(PortSpec::input("Input", PortType::Text))
        .output(PortSpec::output("Result", PortType::Text))
}

pub(crate) fn resolve_regex(spec: &ModuleSpec, params: &ParamMap, _: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    let pattern = params.get("Pattern").and_then(ParamValue::as_text).unwrap_or_default();
    regex::Regex::new(pattern).map_err(|e| ResolveError::invalid_param(format!("invalid pattern: {e}")))?;
    Ok(spec.clone())
}

pub(crate) fn exec_regex(call: &ModuleCall) -> Result<ModuleResult, ModuleError> {
    let input = call.input_text("Input").ok_or_else(|| ModuleError::new("Input has no value"))?;
    let out = text::replace_regex(&input, call.param_text("Pattern"), call.param_text("Replacement"))
        .map_err(|e| ModuleError::new(format!("invalid pattern: {e}")))?;
    Ok(ModuleResult::new().output("Result", Value::Text(out)))
}
