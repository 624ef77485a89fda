//! Flow data model: port types, values, flow definitions, the module
//! catalog and static validation.

mod catalog;
mod document;
mod flow;
mod types;
mod validate;

pub use catalog::{
    FlowSource, LayeredFlows, MemoryFlows, ModuleCatalog, ModuleSpec, ParamKind, ParamSpec, PortSpec, ResolveEnv,
    ResolveError, SpecResolver,
};
pub use document::{parse_flow_document, serialize_flow};
pub use flow::{
    is_identifier, Connection, Endpoint, ExternalInput, ExternalOutput, FlowDefinition, ModuleInstance, ParamMap,
    ParamValue,
};
pub use types::{assignable, format_real, Cell, KeyValue, PortType, Table, Value, MAX_LIST_DEPTH};
pub use validate::{topological_order, validate_at_depth, validate_flow, Issue, ResolvedSpecs, Severity, ValidationReport};
