//! Code executors: generated code runs as a subprocess of the configured
//! interpreter inside a private temporary directory.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Stdio;
use std::time::Instant;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{value_text, InterpreterConfig, ModuleCall, ModuleError, ModuleExecutor, ModuleResult};
use crate::model::{
    ModuleSpec, ParamKind, ParamMap, ParamSpec, ParamValue, PortSpec, PortType, ResolveEnv, ResolveError, Table, Value,
};
use crate::stdlib::arity;
use crate::stdlib::csv::{parse_csv, write_csv};

/// One finished interpreter invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScriptInvocation {
    pub interpreter_command: String,
    pub script_path: PathBuf,
    pub argv: Vec<String>,
    pub workdir: PathBuf,
    pub timeout_secs: f64,
    pub stdout: String,
    pub stderr: String,
    /// `None` when the process was killed by a signal.
    pub exit_code: Option<i32>,
    pub duration_ms: u64,
}

impl ScriptInvocation {
    pub fn succeeded(&self) -> bool {
        self.exit_code == Some(0)
    }

    fn trace_detail(&self) -> serde_json::Value {
        json!({
            "workdir": self.workdir,
            "argv": self.argv,
            "exitCode": self.exit_code,
            "stderr": self.stderr,
            "durationMs": self.duration_ms,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScriptError {
    #[error("interpreter '{command}' could not be started: {reason}")]
    InterpreterMissing { command: String, reason: String },

    #[error("script timed out after {seconds} s")]
    Timeout { seconds: f64, workdir: PathBuf },

    #[error("workdir setup failed: {0}")]
    Io(String),
}

/// The invocation plus any requested files read back from the workdir
/// before it was removed.
#[derive(Debug, Clone)]
pub struct ScriptOutcome {
    pub invocation: ScriptInvocation,
    pub files: BTreeMap<String, String>,
}

/// Writes `code` and `inputs` into a fresh temp dir, runs the interpreter
/// with `argv`, then reads back the files named in `collect`.
///
/// The child sees only `PATH` and `JITFLOW_RUN_ID`.
pub async fn run_script(
    cfg: &InterpreterConfig,
    run_id: &str,
    code: &str,
    argv: &[String],
    inputs: &[(String, String)],
    collect: &[&str],
) -> Result<ScriptOutcome, ScriptError> {
    let dir = tempfile::Builder::new().prefix("jitflow-").tempdir().map_err(|e| ScriptError::Io(e.to_string()))?;
    let workdir = dir.path().to_path_buf();
    let script_path = workdir.join(format!("script.{}", cfg.extension));
    std::fs::write(&script_path, code).map_err(|e| ScriptError::Io(e.to_string()))?;
    for (name, content) in inputs {
        std::fs::write(workdir.join(name), content).map_err(|e| ScriptError::Io(e.to_string()))?;
    }
    let mut cmd = tokio::process::Command::new(&cfg.command);
    cmd.args(&cfg.args)
        .arg(&script_path)
        .args(argv)
        .current_dir(&workdir)
        .env_clear()
        .env("PATH", std::env::var("PATH").unwrap_or_else(|_| "/usr/local/bin:/usr/bin:/bin".into()))
        .env("JITFLOW_RUN_ID", run_id)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .kill_on_drop(true);
    let started = Instant::now();
    let child = cmd
        .spawn()
        .map_err(|e| ScriptError::InterpreterMissing { command: cfg.command.clone(), reason: e.to_string() })?;
    let output = match tokio::time::timeout(cfg.timeout, child.wait_with_output()).await {
        Ok(out) => out.map_err(|e| ScriptError::Io(e.to_string()))?,
        Err(_) => return Err(ScriptError::Timeout { seconds: cfg.timeout.as_secs_f64(), workdir }),
    };
    let files = collect
        .iter()
        .filter_map(|name| std::fs::read_to_string(workdir.join(name)).ok().map(|c| (name.to_string(), c)))
        .collect();
    let invocation = ScriptInvocation {
        interpreter_command: cfg.command.clone(),
        script_path,
        argv: argv.to_vec(),
        workdir,
        timeout_secs: cfg.timeout.as_secs_f64(),
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        exit_code: output.status.code(),
        duration_ms: started.elapsed().as_millis() as u64,
    };
    drop(dir);
    Ok(ScriptOutcome { invocation, files })
}

fn script_failure(e: ScriptError) -> ModuleError {
    let detail = match &e {
        ScriptError::Timeout { workdir, .. } => json!({ "workdir": workdir }),
        _ => serde_json::Value::Null,
    };
    ModuleError::new(e.to_string()).with_detail(detail)
}

fn nonzero_exit(inv: &ScriptInvocation) -> ModuleError {
    let status = inv.exit_code.map_or("a signal".to_string(), |c| format!("exit code {c}"));
    let last = inv.stderr.trim().lines().last().unwrap_or("");
    ModuleError::new(format!("script ended with {status}: {last}")).with_detail(inv.trace_detail())
}

/// Parses interpreter output as `ty`: the whole trimmed text, or failing
/// that its last non-empty line.
pub fn parse_scalar_output(stdout: &str, ty: &PortType) -> Option<Value> {
    let parse = |s: &str| -> Option<Value> {
        let s = s.trim();
        match ty {
            PortType::Int => s.parse().ok().map(Value::Int),
            PortType::Real => s.parse::<f64>().ok().filter(|f| f.is_finite()).map(Value::Real),
            PortType::Bool => match s.to_ascii_lowercase().as_str() {
                "true" | "1" => Some(Value::Bool(true)),
                "false" | "0" => Some(Value::Bool(false)),
                _ => None,
            },
            PortType::Text => Some(Value::Text(s.to_string())),
            _ => None,
        }
    };
    if *ty == PortType::Text {
        return Some(Value::Text(stdout.trim_end_matches(['\n', '\r']).to_string()));
    }
    parse(stdout).or_else(|| stdout.lines().rev().find(|l| !l.trim().is_empty()).and_then(parse))
}

const SCALAR_TYPES: [&str; 4] = ["Int", "Real", "Bool", "Text"];

fn scalar_type(name: &str) -> Option<PortType> {
    SCALAR_TYPES.contains(&name).then(|| name.parse().unwrap())
}

fn parse_arg_types(s: &str) -> Result<Vec<PortType>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| scalar_type(t.trim()).ok_or_else(|| format!("'{}' is not one of Int, Real, Bool, Text", t.trim())))
        .collect()
}

fn has_code_param(params: &ParamMap) -> bool {
    params.get("Code").and_then(ParamValue::as_text).is_some_and(|c| !c.trim().is_empty())
}

fn code_of(call: &ModuleCall) -> Result<String, ModuleError> {
    let code = match call.input_text("Code") {
        Some(c) => c,
        None => call.param_text("Code").to_string(),
    };
    if code.trim().is_empty() {
        return Err(ModuleError::new("no code to run"));
    }
    Ok(code)
}

fn arg_text(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        other => value_text(other),
    }
}

/// Harness that defines the user's code, converts argv per `types`, calls
/// `function` and prints the result.
pub fn function_harness(code: &str, function: &str, types: &[PortType]) -> String {
    let types: Vec<String> = types.iter().map(|t| t.to_string()).collect();
    format!(
        r#"import sys as __jitflow_sys
{code}

def __jitflow_convert(kind, text):
    if kind == "Int":
        return int(text)
    if kind == "Real":
        return float(text)
    if kind == "Bool":
        return text.strip().lower() in ("true", "1")
    return text

__jitflow_types = {types}
__jitflow_result = {function}(*[__jitflow_convert(k, a) for k, a in zip(__jitflow_types, __jitflow_sys.argv[1:])])
if isinstance(__jitflow_result, bool):
    print("true" if __jitflow_result else "false")
else:
    print(__jitflow_result)
"#,
        types = serde_json::to_string(&types).unwrap()
    )
}

pub(crate) fn code_function_spec() -> ModuleSpec {
    ModuleSpec::new("CodeFunction", "Defines Code, calls FunctionName with the Arg inputs and returns its result.")
        .param(ParamSpec::optional("Code", ParamKind::Text, "Source defining the function (or feed the Code input)"))
        .param(ParamSpec::with_default("FunctionName", ParamKind::Text, "gptFunction", "Function to call"))
        .param(ParamSpec::with_default("ArgTypes", ParamKind::Text, "Int,Int", "Comma-separated argument types"))
        .param(ParamSpec::with_default("ResultType", ParamKind::Text, "Text", "Type of the result").choices(&SCALAR_TYPES))
        .input(PortSpec::optional_input("Code", PortType::Text))
        .output(PortSpec::output("Result", PortType::Text))
}

pub(crate) fn resolve_code_function(spec: &ModuleSpec, params: &ParamMap, _: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    let arg_types = parse_arg_types(params.get("ArgTypes").and_then(ParamValue::as_text).unwrap_or_default())
        .map_err(|e| ResolveError::invalid_param(format!("ArgTypes: {e}")))?;
    let name = params.get("FunctionName").and_then(ParamValue::as_text).unwrap_or_default();
    if !crate::model::is_identifier(name) {
        return Err(ResolveError::invalid_param(format!("FunctionName '{name}' is not an identifier")));
    }
    let result = scalar_type(params.get("ResultType").and_then(ParamValue::as_text).unwrap_or("Text")).unwrap_or(PortType::Text);
    let mut out = spec.clone();
    out.inputs[0].required = !has_code_param(params);
    out.inputs.extend(arg_types.into_iter().enumerate().map(|(i, t)| PortSpec::input(format!("Arg{i}"), t)));
    out.outputs[0].ty = result;
    Ok(out)
}

pub(crate) struct CodeFunctionExecutor;

#[async_trait]
impl ModuleExecutor for CodeFunctionExecutor {
    async fn execute(&self, call: ModuleCall) -> Result<ModuleResult, ModuleError> {
        let code = code_of(&call)?;
        let types = parse_arg_types(call.param_text("ArgTypes")).map_err(ModuleError::new)?;
        let argv: Vec<String> =
            (0..types.len()).map(|i| call.input(&format!("Arg{i}")).map(arg_text).unwrap_or_default()).collect();
        let harness = function_harness(&code, call.param_text("FunctionName"), &types);
        let out = run_script(&call.ctx.interpreter, &call.run_id, &harness, &argv, &[], &[])
            .await
            .map_err(script_failure)?;
        let inv = out.invocation;
        if !inv.succeeded() {
            return Err(nonzero_exit(&inv));
        }
        let ty = &call.spec.outputs[0].ty;
        let value = parse_scalar_output(&inv.stdout, ty).ok_or_else(|| {
            ModuleError::new(format!("function output {:?} is not a valid {ty}", inv.stdout.trim())).with_detail(inv.trace_detail())
        })?;
        Ok(ModuleResult::new().output("Result", value).with_detail(inv.trace_detail()))
    }
}

pub(crate) fn code_script_spec() -> ModuleSpec {
    ModuleSpec::new("CodeScript", "Runs Code as a script with the Arg inputs as command-line arguments.")
        .param(ParamSpec::optional("Code", ParamKind::Text, "Script source (or feed the Code input)"))
        .param(ParamSpec::with_default("ArgCount", ParamKind::Int, 1i64, "Number of Arg inputs"))
        .param(ParamSpec::with_default("StdoutType", ParamKind::Text, "Text", "Type Stdout is parsed as").choices(&SCALAR_TYPES))
        .param(ParamSpec::with_default("FailOnNonzero", ParamKind::Bool, true, "Treat a nonzero exit code as failure"))
        .input(PortSpec::optional_input("Code", PortType::Text))
        .output(PortSpec::output("Stdout", PortType::Text).note("trailing newline trimmed"))
        .output(PortSpec::output("ExitCode", PortType::Int))
}

pub(crate) fn resolve_code_script(spec: &ModuleSpec, params: &ParamMap, _: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    let n = arity(params, "ArgCount")?;
    let stdout_ty = scalar_type(params.get("StdoutType").and_then(ParamValue::as_text).unwrap_or("Text")).unwrap_or(PortType::Text);
    let mut out = spec.clone();
    out.inputs[0].required = !has_code_param(params);
    out.inputs.extend((0..n).map(|i| PortSpec::input(format!("Arg{i}"), PortType::Text)));
    out.outputs[0].ty = stdout_ty;
    Ok(out)
}

/// Runs a script with `argv`; returns the stdout and exit code.
pub async fn run_code_script(
    cfg: &InterpreterConfig,
    run_id: &str,
    code: &str,
    argv: &[String],
) -> Result<ScriptInvocation, ScriptError> {
    run_script(cfg, run_id, code, argv, &[], &[]).await.map(|o| o.invocation)
}

pub(crate) struct CodeScriptExecutor;

#[async_trait]
impl ModuleExecutor for CodeScriptExecutor {
    async fn execute(&self, call: ModuleCall) -> Result<ModuleResult, ModuleError> {
        let code = code_of(&call)?;
        let n = call.param_int("ArgCount").max(0);
        let argv: Vec<String> = (0..n).map(|i| call.input(&format!("Arg{i}")).map(arg_text).unwrap_or_default()).collect();
        let inv = run_code_script(&call.ctx.interpreter, &call.run_id, &code, &argv).await.map_err(script_failure)?;
        if call.param_bool("FailOnNonzero") && !inv.succeeded() {
            return Err(nonzero_exit(&inv));
        }
        let ty = &call.spec.outputs[0].ty;
        let stdout = parse_scalar_output(&inv.stdout, ty).ok_or_else(|| {
            ModuleError::new(format!("script output {:?} is not a valid {ty}", inv.stdout.trim())).with_detail(inv.trace_detail())
        })?;
        Ok(ModuleResult::new()
            .output("Stdout", stdout)
            .output("ExitCode", Value::Int(inv.exit_code.unwrap_or(-1) as i64))
            .with_detail(inv.trace_detail()))
    }
}

/// Loads each `in_<k>.csv` into the list `input_dfs`.
fn table_preamble(tables: &[Table]) -> String {
    if tables.is_empty() {
        return "input_dfs = []\n".into();
    }
    let mut out = String::from("import pandas as pd\ninput_dfs = [\n");
    for (k, t) in tables.iter().enumerate() {
        if t.columns().is_empty() {
            out.push_str("    pd.DataFrame(),\n");
        } else {
            out.push_str(&format!(
                "    pd.read_csv(\"in_{k}.csv\", keep_default_na=False, na_values=[\"\"], skip_blank_lines=False),\n"
            ));
        }
    }
    out.push_str("]\n");
    out
}

/// Writes `composable_table_out` to out.csv using the bridge's typing
/// convention: quoted text, bare numbers and booleans, empty for null.
const TABLE_POSTAMBLE: &str = r#"

def __jitflow_write_table(obj, path):
    import math, numbers
    try:
        import pandas as _pd
    except ImportError:
        _pd = None
    if _pd is not None:
        if not isinstance(obj, _pd.DataFrame):
            obj = _pd.DataFrame(obj)
        columns = [str(c) for c in obj.columns]
        rows = list(obj.itertuples(index=False, name=None))
    else:
        records = list(obj)
        columns = [str(c) for c in records[0].keys()] if records else []
        rows = [[r.get(c) for c in columns] for r in records]

    def quote(s):
        return '"' + s.replace('"', '""') + '"'

    def cell(v):
        if v is None or type(v).__name__ in ("NAType", "NaTType"):
            return ""
        if isinstance(v, bool) or type(v).__name__ == "bool_":
            return "true" if v else "false"
        if isinstance(v, numbers.Integral):
            return str(int(v))
        if isinstance(v, numbers.Real):
            f = float(v)
            if math.isnan(f):
                return ""
            if not math.isfinite(f):
                return quote(repr(f))
            if f.is_integer() and abs(f) < 1e15:
                return str(int(f))
            return repr(f)
        return quote(str(v))

    with open(path, "w", encoding="utf-8", newline="") as f:
        if not columns:
            return
        f.write(",".join(quote(c) for c in columns) + "\r\n")
        for row in rows:
            f.write(",".join(cell(v) for v in row) + "\r\n")

if "composable_table_out" in globals():
    __jitflow_write_table(composable_table_out, "out.csv")

# Tearing down a pandas interpreter costs more than the script itself.
import atexit as __jitflow_atexit, os as __jitflow_os, sys as __jitflow_sys
__jitflow_atexit._run_exitfuncs()
__jitflow_sys.stdout.flush()
__jitflow_sys.stderr.flush()
__jitflow_os._exit(0)
"#;

pub fn table_harness(code: &str, tables: &[Table]) -> String {
    format!("{}{code}\n{TABLE_POSTAMBLE}", table_preamble(tables))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TableRunError {
    #[error(transparent)]
    Script(#[from] ScriptError),

    #[error("script ended with exit code {code:?}")]
    Nonzero { code: Option<i32>, invocation: Box<ScriptInvocation> },

    #[error("the code never defined composable_table_out")]
    MissingOutput { invocation: Box<ScriptInvocation> },

    #[error("out.csv is not a valid table: {reason}")]
    BadOutput { reason: String, invocation: Box<ScriptInvocation> },
}

/// Runs table code against `tables`; returns the `composable_table_out`
/// table and the invocation.
pub async fn run_code_table(
    cfg: &InterpreterConfig,
    run_id: &str,
    code: &str,
    tables: &[Table],
) -> Result<(Table, ScriptInvocation), TableRunError> {
    let inputs: Vec<(String, String)> = tables.iter().enumerate().map(|(k, t)| (format!("in_{k}.csv"), write_csv(t))).collect();
    let out = run_script(cfg, run_id, &table_harness(code, tables), &[], &inputs, &["out.csv"]).await?;
    let inv = out.invocation;
    if !inv.succeeded() {
        return Err(TableRunError::Nonzero { code: inv.exit_code, invocation: Box::new(inv) });
    }
    let Some(text) = out.files.get("out.csv") else {
        return Err(TableRunError::MissingOutput { invocation: Box::new(inv) });
    };
    match parse_csv(text) {
        Ok(t) => Ok((t, inv)),
        Err(e) => Err(TableRunError::BadOutput { reason: e.to_string(), invocation: Box::new(inv) }),
    }
}

pub(crate) fn code_table_spec() -> ModuleSpec {
    ModuleSpec::new("CodeTable", "Runs Code with tables loaded as input_dfs; returns composable_table_out.")
        .param(ParamSpec::optional("Code", ParamKind::Text, "Source (or feed the Code input)"))
        .param(ParamSpec::with_default("TableCount", ParamKind::Int, 0i64, "Number of Table inputs"))
        .input(PortSpec::optional_input("Code", PortType::Text))
        .output(PortSpec::output("Result", PortType::Table))
        .output(PortSpec::output("Stdout", PortType::Text))
}

pub(crate) fn resolve_code_table(spec: &ModuleSpec, params: &ParamMap, _: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    let n = arity(params, "TableCount")?;
    let mut out = spec.clone();
    out.inputs[0].required = !has_code_param(params);
    out.inputs.extend((0..n).map(|i| PortSpec::input(format!("Table{i}"), PortType::Table)));
    Ok(out)
}

pub(crate) struct CodeTableExecutor;

#[async_trait]
impl ModuleExecutor for CodeTableExecutor {
    async fn execute(&self, call: ModuleCall) -> Result<ModuleResult, ModuleError> {
        let code = code_of(&call)?;
        let tables: Vec<Table> = (0..call.param_int("TableCount").max(0))
            .map(|i| match call.input(&format!("Table{i}")) {
                Some(Value::Table(t)) => Ok(t.clone()),
                _ => Err(ModuleError::new(format!("Table{i} has no value"))),
            })
            .collect::<Result<_, _>>()?;
        match run_code_table(&call.ctx.interpreter, &call.run_id, &code, &tables).await {
            Ok((table, inv)) => Ok(ModuleResult::new()
                .output("Result", Value::Table(table))
                .output("Stdout", Value::Text(inv.stdout.trim_end_matches(['\n', '\r']).to_string()))
                .with_detail(inv.trace_detail())),
            Err(TableRunError::Script(e)) => Err(script_failure(e)),
            Err(TableRunError::Nonzero { invocation, .. }) => Err(nonzero_exit(&invocation)),
            Err(e @ (TableRunError::MissingOutput { .. } | TableRunError::BadOutput { .. })) => {
                let detail = match &e {
                    TableRunError::MissingOutput { invocation } | TableRunError::BadOutput { invocation, .. } => invocation.trace_detail(),
                    _ => unreachable!(),
                };
                Err(ModuleError::new(e.to_string()).with_detail(detail))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_output_parsing() {
        assert_eq!(parse_scalar_output("7\n", &PortType::Int), Some(Value::Int(7)));
        assert_eq!(parse_scalar_output("debug\n7\n", &PortType::Int), Some(Value::Int(7)));
        assert_eq!(parse_scalar_output("True\n", &PortType::Bool), Some(Value::Bool(true)));
        assert_eq!(parse_scalar_output("x\n", &PortType::Int), None);
        assert_eq!(parse_scalar_output("31 is prime!\n", &PortType::Text), Some(Value::Text("31 is prime!".into())));
    }

    #[test]
    fn arg_types() {
        assert_eq!(parse_arg_types("Int, Real").unwrap(), vec![PortType::Int, PortType::Real]);
        assert!(parse_arg_types("").unwrap().is_empty());
        assert!(parse_arg_types("Int,Table").is_err());
    }

    #[test]
    fn preamble_only_imports_pandas_with_tables() {
        assert_eq!(table_preamble(&[]), "input_dfs = []\n");
        let t = Table::new(vec!["a".into()], vec![]).unwrap();
        assert!(table_preamble(&[t]).contains("in_0.csv"));
    }
}
