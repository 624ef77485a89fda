//! Textual flow language.
//!
//! ```text
//! flow "add" {
//!   module a: ExternalIntInput
//!   module c: Calculator { Mode = "Int", Operator = "+" }
//!   connect a.Result -> c.Param1
//!   extern input a.Input as "x"
//! }
//! ```

mod lexer;
mod parser;
mod render;

use serde::{Deserialize, Serialize};

use crate::model::FlowDefinition;

/// Grammar summary handed to the LLM during flow synthesis.
pub const GRAMMAR: &str = r#"flow     := 'flow' STRING ('version' INT)? '{' item* '}'
item     := 'module' IDENT ':' IDENT ('{' (IDENT '=' literal ','?)* '}')? 'gated'?
          | 'connect' endpoint '->' endpoint
          | 'extern' 'input' endpoint 'as' STRING
          | 'extern' 'output' endpoint 'as' STRING
endpoint := IDENT '.' IDENT
literal  := STRING | INT | REAL | 'true' | 'false'
comments run from '#' to the end of the line"#;

/// A parse failure with a 1-based position in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseDiagnostic {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self { line, column, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DslOrigin {
    File,
    Llm,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DslSource {
    pub text: String,
    pub origin: DslOrigin,
}

impl DslSource {
    pub fn new(text: impl Into<String>, origin: DslOrigin) -> Self {
        Self { text: text.into(), origin }
    }

    pub fn parse(&self) -> Result<FlowDefinition, ParseDiagnostic> {
        parse_dsl(&self.text)
    }
}

/// Parses flow DSL text. Fails fast with a single diagnostic.
pub fn parse_dsl(text: &str) -> Result<FlowDefinition, ParseDiagnostic> {
    parser::parse(text)
}

/// Canonical rendering: modules by id, then sorted connections, then
/// external inputs and outputs by name; two-space indent.
pub fn render_dsl(flow: &FlowDefinition) -> String {
    render::render(flow)
}

#[derive(Debug, thiserror::Error)]
pub enum FlowFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{path}: {source}")]
    Json { path: String, source: crate::FlowParseError },

    #[error("{path}: {source}")]
    Dsl { path: String, source: ParseDiagnostic },
}

/// True for paths written in the DSL (`.flow`); everything else is JSON.
pub fn is_dsl_path(path: &std::path::Path) -> bool {
    path.extension().is_some_and(|e| e == "flow")
}

/// Parses flow text in the format implied by `path`.
pub fn parse_flow_text(path: &std::path::Path, text: &str) -> Result<FlowDefinition, FlowFileError> {
    let p = path.display().to_string();
    if is_dsl_path(path) {
        parse_dsl(text).map_err(|source| FlowFileError::Dsl { path: p, source })
    } else {
        crate::model::parse_flow_document(text).map_err(|source| FlowFileError::Json { path: p, source })
    }
}

pub fn read_flow_file(path: &std::path::Path) -> Result<FlowDefinition, FlowFileError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| FlowFileError::Io { path: path.display().to_string(), source })?;
    parse_flow_text(path, &text)
}

/// Canonical text of `flow` in the format implied by `path`.
pub fn flow_file_text(path: &std::path::Path, flow: &FlowDefinition) -> String {
    if is_dsl_path(path) {
        render_dsl(flow)
    } else {
        crate::model::serialize_flow(flow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModuleInstance, ParamValue};

    fn add_flow() -> FlowDefinition {
        FlowDefinition::new("add")
            .module(ModuleInstance::new("a", "ExternalIntInput"))
            .module(ModuleInstance::new("b", "ExternalIntInput"))
            .module(ModuleInstance::new("c", "Calculator").param("Operator", "+").param("Mode", "Int"))
            .module(ModuleInstance::new("o", "ExternalIntOutput"))
            .connect("a.Result", "c.Param1")
            .connect("b.Result", "c.Param2")
            .connect("c.Result", "o.Input")
            .input("x", "a.Input")
            .input("y", "b.Input")
            .output("sum", "o.Result")
    }

    #[test]
    fn empty_flow() {
        let f = parse_dsl("flow \"x\" { }").unwrap();
        assert_eq!(f, FlowDefinition::new("x"));
        assert_eq!(render_dsl(&FlowDefinition::new("e")), "flow \"e\" {\n}\n");
    }

    #[test]
    fn module_outside_flow() {
        let d = parse_dsl("module a: Calculator").unwrap_err();
        assert_eq!(d.line, 1);
        assert!(d.message.contains("'flow'"), "{d}");
    }

    #[test]
    fn add_flow_round_trip() {
        let text = render_dsl(&add_flow());
        assert_eq!(
            text,
            "flow \"add\" {\n  module a: ExternalIntInput\n  module b: ExternalIntInput\n  \
             module c: Calculator { Mode = \"Int\", Operator = \"+\" }\n  module o: ExternalIntOutput\n  \
             connect a.Result -> c.Param1\n  connect b.Result -> c.Param2\n  connect c.Result -> o.Input\n  \
             extern input a.Input as \"x\"\n  extern input b.Input as \"y\"\n  extern output o.Result as \"sum\"\n}\n"
        );
        assert_eq!(parse_dsl(&text).unwrap(), add_flow());
    }

    #[test]
    fn literals_version_gated_comments() {
        let src = r#"
            # leading comment
            flow "t" version 3 {
              module m: K { A = -2 B = 0.5, C = true, D = "q\"\n" } gated  # trailing
            }"#;
        let f = parse_dsl(src).unwrap();
        assert_eq!(f.version, 3);
        let m = &f.modules[0];
        assert!(m.gated);
        assert_eq!(m.params["A"], ParamValue::Int(-2));
        assert_eq!(m.params["B"], ParamValue::Real(0.5));
        assert_eq!(m.params["C"], ParamValue::Bool(true));
        assert_eq!(m.params["D"], ParamValue::Text("q\"\n".into()));
        assert_eq!(parse_dsl(&render_dsl(&f)).unwrap(), f);
    }

    #[test]
    fn diagnostics_point_at_problem() {
        let d = parse_dsl("flow \"f\" {\n  module a: K\n  module a: K\n}").unwrap_err();
        assert_eq!((d.line, d.column), (3, 10));
        let d = parse_dsl("flow \"f\" {\n  connect a.X => b.Y\n}").unwrap_err();
        assert_eq!(d.line, 2);
        let d = parse_dsl("flow \"f\" {\n  extern input a.X as \"x\"\n  extern input b.X as \"x\"\n}").unwrap_err();
        assert_eq!(d.line, 3);
        assert!(parse_dsl("flow \"f\" { } trailing").is_err());
        assert!(parse_dsl("flow \"f\" { module m: K { A = B } }").is_err());
    }
}
