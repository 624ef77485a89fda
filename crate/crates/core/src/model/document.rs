//! The `.flow.json` document form.

use crate::error::FlowParseError;
use crate::model::FlowDefinition;

/// Parses a flow JSON document. Unknown fields are rejected.
pub fn parse_flow_document(text: &str) -> Result<FlowDefinition, FlowParseError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let flow: FlowDefinition = match serde_path_to_error::deserialize(&mut de) {
        Ok(f) => f,
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            return Err(match inner.classify() {
                serde_json::error::Category::Data => FlowParseError::Schema {
                    field: path,
                    reason: strip_position(&inner.to_string()),
                },
                _ => FlowParseError::Syntax {
                    line: inner.line(),
                    column: inner.column(),
                    message: strip_position(&inner.to_string()),
                },
            });
        }
    };
    de.end().map_err(|e| FlowParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })?;
    flow.check_structure()?;
    Ok(flow)
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Canonical text: fixed key order, modules sorted by id, connections and
/// bindings sorted, two-space indentation, trailing LF.
pub fn serialize_flow(flow: &FlowDefinition) -> String {
    let mut text = serde_json::to_string_pretty(&flow.canonical()).expect("flow serializes");
    text.push('\n');
    text
}
