//! The `jitflow` command line. Every command is a thin shell over the
//! library crates.

use std::collections::BTreeMap;
use std::io::{self, BufRead, IsTerminal, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use jitflow_core::dsl::{flow_file_text, read_flow_file, FlowFileError};
use jitflow_core::engine::{
    bind_json_inputs, execute_run, plan_run, resume_run, EventKind, GateDecision, GatePolicy, PlanError, ResumeError,
    RunState,
};
use jitflow_core::jit::{generate_code, synthesize_flow, DEFAULT_MAX_ATTEMPTS};
use jitflow_core::model::{validate_flow, FlowSource, ValidationReport};
use jitflow_llm::{serve_mock, Cassette, LlmError};
use jitflow_service::{FlowStore, Runtime, ServiceConfig, ServiceError};
use serde_json::{json, Map, Value as Json};

#[derive(Debug, Parser)]
#[command(name = "jitflow", version, about = "Typed dataflows with just-in-time LLM code generation")]
pub struct Cli {
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a .flow or .flow.json file.
    Validate { file: PathBuf },
    /// Run a flow and print its outputs as JSON.
    Run {
        file: PathBuf,
        /// External input binding; the value is read as JSON, else as text.
        #[arg(long = "input", short = 'i', value_name = "NAME=VALUE")]
        inputs: Vec<String>,
        /// Pause at gated modules and ask before running them.
        #[arg(long)]
        require_approval: bool,
        /// Approve every gate without asking.
        #[arg(long, short = 'y')]
        yes: bool,
        /// Write the run trace as JSON Lines.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        /// Resolve App Reference flow ids from this service data directory.
        #[arg(long, value_name = "DIR")]
        data_dir: Option<PathBuf>,
    },
    /// Generate code for a prompt and print the extracted code.
    Codegen {
        prompt: String,
        /// Text appended to the prompt.
        #[arg(long, default_value = "")]
        suffix: String,
    },
    /// Synthesize a flow from a prompt and print the validation report.
    Synth {
        prompt: String,
        /// Where to write the flow (.flow or .flow.json).
        #[arg(short, long, value_name = "FILE")]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
        max_attempts: usize,
    },
    /// Convert between the DSL (.flow) and JSON (.flow.json) forms.
    Convert { input: PathBuf, output: PathBuf },
    /// List the module kinds.
    Catalog,
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        #[arg(long, value_name = "DIR")]
        data_dir: Option<PathBuf>,
        /// Directory served at `/`.
        #[arg(long, value_name = "DIR")]
        static_dir: Option<PathBuf>,
    },
    /// Run the cassette-backed mock chat-completions server.
    ServeMock {
        #[arg(long)]
        cassette: PathBuf,
        #[arg(long, default_value_t = 8089)]
        port: u16,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Flow(#[from] FlowFileError),

    #[error("flow is invalid: {}", .0.error_codes().join(", "))]
    Invalid(ValidationReport),

    #[error("bad --input '{0}': expected NAME=VALUE")]
    BadInput(String),

    #[error(transparent)]
    Plan(#[from] PlanError),

    #[error(transparent)]
    Resume(#[from] ResumeError),

    #[error("run failed: {0}")]
    RunFailed(String),

    #[error("run rejected at gate '{0}'")]
    Rejected(String),

    #[error(transparent)]
    Llm(#[from] LlmError),

    #[error("synthesis failed after {attempts} attempt(s): {}", .report.error_codes().join(", "))]
    Synthesis { attempts: usize, report: ValidationReport },

    #[error(transparent)]
    Service(#[from] ServiceError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Flow(_) => "flow-file",
            CliError::Invalid(_) => "invalid-flow",
            CliError::BadInput(_) => "bad-input",
            CliError::Plan(e) => e.code(),
            CliError::Resume(e) => e.code(),
            CliError::RunFailed(_) => "run-failed",
            CliError::Rejected(_) => "rejected",
            CliError::Llm(e) => e.code(),
            CliError::Synthesis { .. } => "synthesis-failed",
            CliError::Service(_) => "service",
            CliError::Io { .. } => "io",
        }
    }

    /// The `{"error", "code"}` document printed on stderr.
    pub fn to_json(&self) -> Json {
        let mut doc = json!({ "error": self.to_string(), "code": self.code() });
        match self {
            CliError::Invalid(report) | CliError::Synthesis { report, .. } => {
                doc["report"] = serde_json::to_value(report).unwrap();
            }
            CliError::Plan(PlanError::Invalid(report)) => doc["report"] = serde_json::to_value(report).unwrap(),
            _ => {}
        }
        doc
    }
}

/// Decides gates for `run --require-approval`.
pub trait Approver {
    /// `detail` is the `run_paused` event detail (resolved code and inputs).
    fn decide(&mut self, module_id: &str, detail: &Json) -> GateDecision;
}

/// Approves everything.
pub struct AutoApprove;

impl Approver for AutoApprove {
    fn decide(&mut self, _module_id: &str, _detail: &Json) -> GateDecision {
        GateDecision::Approve
    }
}

/// Shows the code on stderr and reads `y`/`n` from stdin.
pub struct PromptApprover;

impl Approver for PromptApprover {
    fn decide(&mut self, module_id: &str, detail: &Json) -> GateDecision {
        let mut err = io::stderr().lock();
        let _ = writeln!(err, "gate '{module_id}' is about to run:");
        if let Some(code) = detail["code"].as_str() {
            let _ = writeln!(err, "{code}");
        }
        let _ = writeln!(err, "inputs: {}", detail["inputs"]);
        let _ = write!(err, "approve? [y/N] ");
        let _ = err.flush();
        let mut line = String::new();
        let _ = io::stdin().lock().read_line(&mut line);
        if !io::stdin().is_terminal() {
            let _ = writeln!(err);
        }
        if matches!(line.trim().to_ascii_lowercase().as_str(), "y" | "yes") {
            GateDecision::Approve
        } else {
            GateDecision::Reject
        }
    }
}

/// Splits `NAME=VALUE`; the value is JSON when it parses, text otherwise.
pub fn parse_input(arg: &str) -> Result<(String, Json), CliError> {
    let (name, raw) = arg.split_once('=').ok_or_else(|| CliError::BadInput(arg.to_string()))?;
    if name.is_empty() {
        return Err(CliError::BadInput(arg.to_string()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Json::String(raw.to_string()));
    Ok((name.to_string(), value))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn print_json(out: &mut dyn Write, value: &Json) -> io::Result<()> {
    writeln!(out, "{}", serde_json::to_string(value).expect("JSON values serialize"))
}

fn env_vars() -> BTreeMap<String, String> {
    std::env::vars().collect()
}

async fn runtime(flows: Option<Arc<dyn FlowSource>>) -> Result<Runtime, CliError> {
    Ok(Runtime::from_vars(flows, env_vars()).await?)
}

fn gateway(rt: &Runtime) -> Result<&jitflow_llm::Gateway, CliError> {
    rt.gateway.as_deref().map_err(|reason| CliError::Llm(LlmError::Config(reason.clone())))
}

/// Runs one command, writing results to `out`.
pub async fn execute(cli: &Cli, out: &mut dyn Write, approver: &mut dyn Approver) -> Result<(), CliError> {
    let io_err = |source| CliError::Io { path: PathBuf::from("<stdout>"), source };
    match &cli.command {
        Command::Validate { file } => {
            let flow = read_flow_file(file)?;
            let rt = runtime(None).await?;
            let report = validate_flow(&flow, &rt.ctx.catalog);
            if cli.json {
                print_json(out, &serde_json::to_value(&report).unwrap()).map_err(io_err)?;
            } else {
                write!(out, "{report}").map_err(io_err)?;
            }
            if !report.ok {
                return Err(CliError::Invalid(report));
            }
        }
        Command::Run { file, inputs, require_approval, yes, trace, data_dir } => {
            let flow = read_flow_file(file)?;
            let flows: Option<Arc<dyn FlowSource>> = match data_dir {
                Some(dir) => Some(Arc::new(
                    FlowStore::open(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?,
                )),
                None => None,
            };
            let rt = runtime(flows).await?;
            let mut bound = Map::new();
            for arg in inputs {
                let (name, value) = parse_input(arg)?;
                bound.insert(name, value);
            }
            let values = bind_json_inputs(&flow, &rt.ctx.catalog, &bound)?;
            let plan = plan_run(&flow, &rt.ctx.catalog, values)?;
            let policy = if *require_approval { GatePolicy::Require } else { GatePolicy::Auto };
            let ctx = Arc::new(rt.ctx.clone().with_gate_policy(policy));
            let mut run = execute_run(plan, ctx.clone()).await;
            while run.state == RunState::PausedForApproval {
                let gate = run.paused_at.clone().expect("paused runs name their gate");
                let detail = run
                    .trace
                    .iter()
                    .rev()
                    .find(|e| e.event == EventKind::RunPaused)
                    .map(|e| e.detail.clone())
                    .unwrap_or_default();
                let decision = if *yes { AutoApprove.decide(&gate, &detail) } else { approver.decide(&gate, &detail) };
                run = resume_run(run, &gate, decision, ctx.clone()).await?;
            }
            if let Some(path) = trace {
                write_file(path, &run.trace_jsonl())?;
            }
            match run.state {
                RunState::Completed => print_json(out, &Json::Object(run.plain_outputs())).map_err(io_err)?,
                RunState::Rejected => {
                    let gate = run.gate_decisions.iter().find(|(_, d)| **d == GateDecision::Reject);
                    return Err(CliError::Rejected(gate.map(|(m, _)| m.clone()).unwrap_or_default()));
                }
                _ => return Err(CliError::RunFailed(run.error.unwrap_or_else(|| "unknown error".into()))),
            }
        }
        Command::Codegen { prompt, suffix } => {
            let rt = runtime(None).await?;
            let res = generate_code(gateway(&rt)?, prompt, suffix).await?;
            if cli.json {
                let doc = json!({ "code": res.code, "raw": res.raw_response, "statusCode": res.status_code });
                print_json(out, &doc).map_err(io_err)?;
            } else {
                writeln!(out, "{}", res.code).map_err(io_err)?;
            }
        }
        Command::Synth { prompt, output, max_attempts } => {
            let rt = runtime(None).await?;
            let res = synthesize_flow(prompt, &rt.ctx.catalog, gateway(&rt)?, *max_attempts).await?;
            if let (Some(path), Some(flow)) = (output, &res.flow) {
                write_file(path, &flow_file_text(path, flow))?;
            }
            if cli.json {
                print_json(out, &serde_json::to_value(&res).unwrap()).map_err(io_err)?;
            } else {
                write!(out, "{}", res.report).map_err(io_err)?;
                writeln!(out, "attempts: {}", res.attempt_count).map_err(io_err)?;
            }
            if res.flow.is_none() {
                return Err(CliError::Synthesis { attempts: res.attempt_count, report: res.report });
            }
        }
        Command::Convert { input, output } => {
            let flow = read_flow_file(input)?;
            write_file(output, &flow_file_text(output, &flow))?;
            if cli.json {
                let doc = json!({ "input": input, "output": output, "modules": flow.modules.len() });
                print_json(out, &doc).map_err(io_err)?;
            }
        }
        Command::Catalog => {
            let rt = runtime(None).await?;
            if cli.json {
                print_json(out, &json!(rt.ctx.catalog.specs().collect::<Vec<_>>())).map_err(io_err)?;
            } else {
                for spec in rt.ctx.catalog.specs() {
                    writeln!(out, "{:<22} {}", spec.kind, spec.description).map_err(io_err)?;
                }
            }
        }
        Command::Serve { port, bind, data_dir, static_dir } => {
            let vars = env_vars();
            let mut cfg = ServiceConfig::from_vars(&vars);
            cfg.bind = SocketAddr::new(*bind, *port);
            if let Some(dir) = data_dir {
                cfg.data_dir = dir.clone();
            }
            if static_dir.is_some() {
                cfg.static_dir = static_dir.clone();
            }
            jitflow_service::serve(&cfg, vars).await?;
        }
        Command::ServeMock { cassette, port } => {
            let server = serve_mock(Cassette::load(cassette)?, *port).await?;
            writeln!(out, "mock LLM server on {}", server.base_url()).map_err(io_err)?;
            out.flush().map_err(io_err)?;
            tokio::signal::ctrl_c().await.map_err(io_err)?;
            server.shutdown().await;
        }
    }
    Ok(())
}
