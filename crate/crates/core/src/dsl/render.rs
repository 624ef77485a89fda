use std::fmt::Write;

use crate::model::{FlowDefinition, ParamValue};

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{{{:x}}}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn literal(v: &ParamValue) -> String {
    match v {
        ParamValue::Bool(b) => b.to_string(),
        ParamValue::Int(i) => i.to_string(),
        ParamValue::Real(r) => format!("{r:?}"),
        ParamValue::Text(s) => quote(s),
    }
}

pub(crate) fn render(flow: &FlowDefinition) -> String {
    let f = flow.canonical();
    let mut out = format!("flow {}", quote(&f.name));
    if f.version != 1 {
        let _ = write!(out, " version {}", f.version);
    }
    out.push_str(" {\n");
    for m in &f.modules {
        let _ = write!(out, "  module {}: {}", m.id, m.kind);
        if !m.params.is_empty() {
            let params: Vec<String> = m.params.iter().map(|(k, v)| format!("{k} = {}", literal(v))).collect();
            let _ = write!(out, " {{ {} }}", params.join(", "));
        }
        if m.gated {
            out.push_str(" gated");
        }
        out.push('\n');
    }
    for c in &f.connections {
        let _ = writeln!(out, "  connect {} -> {}", c.from, c.to);
    }
    for e in &f.external_inputs {
        let _ = writeln!(out, "  extern input {} as {}", e.target, quote(&e.name));
    }
    for e in &f.external_outputs {
        let _ = writeln!(out, "  extern output {} as {}", e.source, quote(&e.name));
    }
    out.push_str("}\n");
    out
}
