//! Module specifications and the catalog that type-checks against them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::model::{FlowDefinition, ParamMap, ParamValue, PortType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Text,
    Int,
    Real,
    Bool,
}

impl ParamKind {
    pub fn accepts(&self, value: &ParamValue) -> bool {
        matches!(
            (self, value),
            (ParamKind::Text, ParamValue::Text(_))
                | (ParamKind::Int, ParamValue::Int(_))
                | (ParamKind::Real, ParamValue::Int(_) | ParamValue::Real(_))
                | (ParamKind::Bool, ParamValue::Bool(_))
        )
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<ParamValue>,
    /// Allowed values for text parameters; empty means unrestricted.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
    pub doc: String,
}

impl ParamSpec {
    pub fn required(name: &str, kind: ParamKind, doc: &str) -> Self {
        Self { name: name.into(), kind, required: true, default: None, choices: Vec::new(), doc: doc.into() }
    }

    pub fn optional(name: &str, kind: ParamKind, doc: &str) -> Self {
        Self { required: false, ..Self::required(name, kind, doc) }
    }

    pub fn with_default(name: &str, kind: ParamKind, default: impl Into<ParamValue>, doc: &str) -> Self {
        Self { default: Some(default.into()), ..Self::optional(name, kind, doc) }
    }

    pub fn choices(mut self, choices: &[&str]) -> Self {
        self.choices = choices.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PortSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: PortType,
    /// Only meaningful for inputs.
    pub required: bool,
    /// Human-readable note, e.g. which parameter picks the type.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl PortSpec {
    pub fn input(name: impl Into<String>, ty: PortType) -> Self {
        Self { name: name.into(), ty, required: true, note: None }
    }

    pub fn optional_input(name: impl Into<String>, ty: PortType) -> Self {
        Self { required: false, ..Self::input(name, ty) }
    }

    pub fn output(name: impl Into<String>, ty: PortType) -> Self {
        Self { required: false, ..Self::input(name, ty) }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Declared shape of a module kind. Catalog entries hold a template; the
/// concrete ports of an instance come from [`ModuleCatalog::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModuleSpec {
    pub kind: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub inputs: Vec<PortSpec>,
    pub outputs: Vec<PortSpec>,
}

impl ModuleSpec {
    pub fn new(kind: &str, description: &str) -> Self {
        Self { kind: kind.into(), description: description.into(), params: vec![], inputs: vec![], outputs: vec![] }
    }

    pub fn param(mut self, p: ParamSpec) -> Self {
        self.params.push(p);
        self
    }

    pub fn input(mut self, p: PortSpec) -> Self {
        self.inputs.push(p);
        self
    }

    pub fn output(mut self, p: PortSpec) -> Self {
        self.outputs.push(p);
        self
    }

    pub fn input_port(&self, name: &str) -> Option<&PortSpec> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output_port(&self, name: &str) -> Option<&PortSpec> {
        self.outputs.iter().find(|p| p.name == name)
    }

    pub fn param_spec(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Provided params plus declared defaults for the rest.
    pub fn effective_params(&self, provided: &ParamMap) -> ParamMap {
        let mut out = provided.clone();
        for p in &self.params {
            if let Some(d) = &p.default {
                out.entry(p.name.clone()).or_insert_with(|| d.clone());
            }
        }
        out
    }

    fn check_unique_ports(&self) -> Result<(), String> {
        let mut seen = std::collections::BTreeSet::new();
        for p in self.inputs.iter().chain(&self.outputs) {
            if !seen.insert(p.name.as_str()) {
                return Err(format!("{}: port '{}' declared twice", self.kind, p.name));
            }
        }
        Ok(())
    }
}

/// A problem found while resolving one module instance against the catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolveError {
    pub code: &'static str,
    pub message: String,
}

impl ResolveError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn invalid_param(message: impl Into<String>) -> Self {
        Self::new("invalid-param", message)
    }
}

/// Where App Reference modules find the flows they call.
pub trait FlowSource: Send + Sync {
    fn load_flow(&self, id: &str) -> Option<FlowDefinition>;
}

/// In-memory flow source.
#[derive(Default)]
pub struct MemoryFlows {
    flows: RwLock<HashMap<String, FlowDefinition>>,
}

impl MemoryFlows {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, id: impl Into<String>, flow: FlowDefinition) {
        self.flows.write().unwrap().insert(id.into(), flow);
    }
}

impl FlowSource for MemoryFlows {
    fn load_flow(&self, id: &str) -> Option<FlowDefinition> {
        self.flows.read().unwrap().get(id).cloned()
    }
}

/// Tries each source in order.
pub struct LayeredFlows(pub Vec<Arc<dyn FlowSource>>);

impl FlowSource for LayeredFlows {
    fn load_flow(&self, id: &str) -> Option<FlowDefinition> {
        self.0.iter().find_map(|s| s.load_flow(id))
    }
}

/// Context handed to spec resolvers.
pub struct ResolveEnv<'a> {
    pub catalog: &'a ModuleCatalog,
    /// App Reference nesting depth of the flow being resolved.
    pub depth: usize,
}

/// Computes an instance's concrete spec from the template and the
/// instance's effective parameters (defaults applied, kinds checked).
pub type SpecResolver = fn(&ModuleSpec, &ParamMap, &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError>;

fn identity_resolver(spec: &ModuleSpec, _: &ParamMap, _: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    Ok(spec.clone())
}

#[derive(Clone)]
struct CatalogEntry {
    spec: ModuleSpec,
    resolver: SpecResolver,
}

/// Registry of module kinds; the authority for validation.
#[derive(Clone, Default)]
pub struct ModuleCatalog {
    entries: BTreeMap<String, CatalogEntry>,
    flows: Option<Arc<dyn FlowSource>>,
}

impl fmt::Debug for ModuleCatalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModuleCatalog").field("kinds", &self.entries.keys().collect::<Vec<_>>()).finish()
    }
}

impl ModuleCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a kind with fixed ports.
    pub fn register(&mut self, spec: ModuleSpec) -> Result<(), String> {
        self.register_with(spec, identity_resolver)
    }

    /// Registers a kind whose ports depend on its parameters.
    pub fn register_with(&mut self, spec: ModuleSpec, resolver: SpecResolver) -> Result<(), String> {
        spec.check_unique_ports()?;
        if self.entries.contains_key(&spec.kind) {
            return Err(format!("module kind '{}' registered twice", spec.kind));
        }
        self.entries.insert(spec.kind.clone(), CatalogEntry { spec, resolver });
        Ok(())
    }

    pub fn with_flows(mut self, flows: Arc<dyn FlowSource>) -> Self {
        self.flows = Some(flows);
        self
    }

    pub fn set_flows(&mut self, flows: Arc<dyn FlowSource>) {
        self.flows = Some(flows);
    }

    pub fn flows(&self) -> Option<&Arc<dyn FlowSource>> {
        self.flows.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, kind: &str) -> Option<&ModuleSpec> {
        self.entries.get(kind).map(|e| &e.spec)
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.entries.contains_key(kind)
    }

    /// Template specs in kind order.
    pub fn specs(&self) -> impl Iterator<Item = &ModuleSpec> {
        self.entries.values().map(|e| &e.spec)
    }

    /// Resolves an instance of `kind` with `params` at nesting `depth`.
    /// Reports every parameter problem rather than stopping at the first.
    pub fn resolve(&self, kind: &str, params: &ParamMap, depth: usize) -> Result<ModuleSpec, Vec<ResolveError>> {
        let entry = self
            .entries
            .get(kind)
            .ok_or_else(|| vec![ResolveError::new("unknown-kind", format!("unknown module kind '{kind}'"))])?;
        let spec = &entry.spec;
        let mut errors = Vec::new();
        for (name, value) in params {
            match spec.param_spec(name) {
                None => errors.push(ResolveError::new("unknown-param", format!("{kind} has no parameter '{name}'"))),
                Some(p) if !p.kind.accepts(value) => errors.push(ResolveError::invalid_param(format!(
                    "parameter '{name}' expects {}",
                    p.kind
                ))),
                Some(p) if !p.choices.is_empty() && !value.as_text().is_some_and(|v| p.choices.iter().any(|c| c == v)) => {
                    errors.push(ResolveError::invalid_param(format!(
                        "parameter '{name}' must be one of {}",
                        p.choices.join(", ")
                    )))
                }
                Some(_) => {}
            }
        }
        for p in &spec.params {
            if p.required && !params.contains_key(&p.name) {
                errors.push(ResolveError::new("missing-param", format!("required parameter '{}' is not set", p.name)));
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let effective = spec.effective_params(params);
        (entry.resolver)(spec, &effective, &ResolveEnv { catalog: self, depth }).map_err(|e| vec![e])
    }

    /// One line per kind with its ports, for prompts and `catalog` output.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for spec in self.specs() {
            let ports = |ports: &[PortSpec], with_req: bool| {
                ports
                    .iter()
                    .map(|p| {
                        let mut s = format!("{}: {}", p.name, p.ty);
                        if with_req && !p.required {
                            s.push('?');
                        }
                        if let Some(n) = &p.note {
                            s.push_str(&format!(" ({n})"));
                        }
                        s
                    })
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let params = spec
                .params
                .iter()
                .map(|p| {
                    let mut s = format!("{}: {}", p.name, p.kind);
                    if !p.choices.is_empty() {
                        s.push_str(&format!(" [{}]", p.choices.join("|")));
                    }
                    match (&p.default, p.required) {
                        (Some(d), _) => s.push_str(&format!(" = {}", serde_json::to_string(d).unwrap_or_default())),
                        (None, false) => s.push('?'),
                        (None, true) => {}
                    }
                    s
                })
                .collect::<Vec<_>>()
                .join(", ");
            out.push_str(&format!(
                "- {}: {}\n    params: {}\n    inputs: {}\n    outputs: {}\n",
                spec.kind,
                spec.description,
                if params.is_empty() { "none".into() } else { params },
                if spec.inputs.is_empty() { "none".into() } else { ports(&spec.inputs, true) },
                if spec.outputs.is_empty() { "none".into() } else { ports(&spec.outputs, false) },
            ));
        }
        out
    }
}
