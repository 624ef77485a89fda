//! Flow model, DSL, execution engine, standard module library and
//! LLM-driven code and flow synthesis.

pub mod dsl;
pub mod engine;
pub mod error;
pub mod jit;
pub mod model;
pub mod stdlib;

pub use error::{FlowParseError, ValueError};
