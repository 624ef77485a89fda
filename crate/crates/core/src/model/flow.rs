//! The flow definition: module instances, connections and external bindings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::FlowParseError;

/// `[A-Za-z_][A-Za-z0-9_]*`, the syntax for module ids, kinds and port names.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A module parameter literal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ParamValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ParamValue::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl From<&str> for ParamValue {
    fn from(s: &str) -> Self {
        ParamValue::Text(s.to_string())
    }
}

impl From<String> for ParamValue {
    fn from(s: String) -> Self {
        ParamValue::Text(s)
    }
}

impl From<i64> for ParamValue {
    fn from(i: i64) -> Self {
        ParamValue::Int(i)
    }
}

impl From<bool> for ParamValue {
    fn from(b: bool) -> Self {
        ParamValue::Bool(b)
    }
}

impl From<f64> for ParamValue {
    fn from(r: f64) -> Self {
        ParamValue::Real(r)
    }
}

pub type ParamMap = BTreeMap<String, ParamValue>;

/// `moduleId.portName`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub module: String,
    pub port: String,
}

impl Endpoint {
    pub fn new(module: impl Into<String>, port: impl Into<String>) -> Self {
        Self { module: module.into(), port: port.into() }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.module, self.port)
    }
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (module, port) = s
            .split_once('.')
            .ok_or_else(|| format!("endpoint '{s}' is not of the form module.port"))?;
        if !is_identifier(module) || !is_identifier(port) {
            return Err(format!("endpoint '{s}' is not of the form module.port"));
        }
        Ok(Endpoint::new(module, port))
    }
}

impl Serialize for Endpoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleInstance {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub params: ParamMap,
    #[serde(default)]
    pub gated: bool,
}

impl ModuleInstance {
    pub fn new(id: impl Into<String>, kind: impl Into<String>) -> Self {
        Self { id: id.into(), kind: kind.into(), params: ParamMap::new(), gated: false }
    }

    pub fn param(mut self, name: impl Into<String>, value: impl Into<ParamValue>) -> Self {
        self.params.insert(name.into(), value.into());
        self
    }

    pub fn gated(mut self) -> Self {
        self.gated = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Connection {
    pub from: Endpoint,
    pub to: Endpoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalInput {
    pub name: String,
    pub target: Endpoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalOutput {
    pub name: String,
    pub source: Endpoint,
}

/// A named, versioned dataflow graph.
///
/// Equality ignores the order of modules, connections and external
/// bindings: two flows are equal when their canonical forms are.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct FlowDefinition {
    pub name: String,
    pub version: i64,
    pub modules: Vec<ModuleInstance>,
    pub connections: Vec<Connection>,
    pub external_inputs: Vec<ExternalInput>,
    pub external_outputs: Vec<ExternalOutput>,
}

impl PartialEq for FlowDefinition {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = (self.canonical(), other.canonical());
        a.name == b.name
            && a.version == b.version
            && a.modules == b.modules
            && a.connections == b.connections
            && a.external_inputs == b.external_inputs
            && a.external_outputs == b.external_outputs
    }
}

impl FlowDefinition {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            version: 1,
            modules: Vec::new(),
            connections: Vec::new(),
            external_inputs: Vec::new(),
            external_outputs: Vec::new(),
        }
    }

    pub fn module(mut self, module: ModuleInstance) -> Self {
        self.modules.push(module);
        self
    }

    /// Adds a connection; panics on malformed endpoint text.
    pub fn connect(mut self, from: &str, to: &str) -> Self {
        self.connections.push(Connection {
            from: from.parse().expect("valid endpoint"),
            to: to.parse().expect("valid endpoint"),
        });
        self
    }

    pub fn input(mut self, name: impl Into<String>, target: &str) -> Self {
        self.external_inputs.push(ExternalInput { name: name.into(), target: target.parse().expect("valid endpoint") });
        self
    }

    pub fn output(mut self, name: impl Into<String>, source: &str) -> Self {
        self.external_outputs.push(ExternalOutput { name: name.into(), source: source.parse().expect("valid endpoint") });
        self
    }

    pub fn get_module(&self, id: &str) -> Option<&ModuleInstance> {
        self.modules.iter().find(|m| m.id == id)
    }

    /// Sorts modules by id, connections lexicographically and external
    /// bindings by name.
    pub fn canonicalize(&mut self) {
        self.modules.sort_by(|a, b| a.id.cmp(&b.id));
        self.connections.sort();
        self.external_inputs.sort_by(|a, b| (&a.name, &a.target).cmp(&(&b.name, &b.target)));
        self.external_outputs.sort_by(|a, b| (&a.name, &a.source).cmp(&(&b.name, &b.source)));
    }

    pub fn canonical(&self) -> FlowDefinition {
        let mut f = self.clone();
        f.canonicalize();
        f
    }

    /// Structural invariants that hold independently of any catalog:
    /// identifier syntax, unique module ids, unique external names and
    /// finite parameter literals.
    pub fn check_structure(&self) -> Result<(), FlowParseError> {
        let mut ids = BTreeSet::new();
        for (i, m) in self.modules.iter().enumerate() {
            if !is_identifier(&m.id) {
                return Err(FlowParseError::schema(format!("modules[{i}].id"), format!("'{}' is not an identifier", m.id)));
            }
            if !is_identifier(&m.kind) {
                return Err(FlowParseError::schema(format!("modules[{i}].kind"), format!("'{}' is not an identifier", m.kind)));
            }
            if !ids.insert(m.id.as_str()) {
                return Err(FlowParseError::schema(format!("modules[{i}].id"), format!("duplicate module id '{}'", m.id)));
            }
            for (name, value) in &m.params {
                if !is_identifier(name) {
                    return Err(FlowParseError::schema(
                        format!("modules[{i}].params"),
                        format!("parameter name '{name}' is not an identifier"),
                    ));
                }
                if matches!(value, ParamValue::Real(r) if !r.is_finite()) {
                    return Err(FlowParseError::schema(
                        format!("modules[{i}].params.{name}"),
                        "real literals must be finite",
                    ));
                }
            }
        }
        let mut names = BTreeSet::new();
        for (i, e) in self.external_inputs.iter().enumerate() {
            if e.name.is_empty() || !names.insert(e.name.as_str()) {
                return Err(FlowParseError::schema(
                    format!("externalInputs[{i}].name"),
                    format!("external input name '{}' is empty or duplicated", e.name),
                ));
            }
        }
        names.clear();
        for (i, e) in self.external_outputs.iter().enumerate() {
            if e.name.is_empty() || !names.insert(e.name.as_str()) {
                return Err(FlowParseError::schema(
                    format!("externalOutputs[{i}].name"),
                    format!("external output name '{}' is empty or duplicated", e.name),
                ));
            }
        }
        Ok(())
    }
}
