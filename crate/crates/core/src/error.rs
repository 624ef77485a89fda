use crate::model::PortType;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValueError {
    #[error("unknown port type '{0}'")]
    UnknownType(String),

    #[error("port type {0} nests lists too deeply")]
    TooDeep(String),

    #[error("{0}")]
    Shape(String),

    #[error("invalid table: {0}")]
    Table(String),

    #[error("key must not be empty")]
    EmptyKey,

    #[error("expected {expected}, found {found}")]
    Mismatch { expected: PortType, found: String },
}

/// Failure to read a flow JSON document.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FlowParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("schema violation at '{field}': {reason}")]
    Schema { field: String, reason: String },
}

impl FlowParseError {
    pub(crate) fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        FlowParseError::Schema { field: field.into(), reason: reason.into() }
    }
}
