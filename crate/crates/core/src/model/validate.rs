//! Static checks: structure, port types and acyclicity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{assignable, Endpoint, FlowDefinition, ModuleCatalog, ModuleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub code: String,
    pub location: String,
    pub message: String,
}

impl Issue {
    pub fn error(code: &str, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, code: code.into(), location: location.into(), message: message.into() }
    }

    pub fn warning(code: &str, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, ..Self::error(code, location, message) }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}] {}: {}", self.code, self.location, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn from_issues(mut issues: Vec<Issue>) -> Self {
        issues.sort_by(|a, b| {
            (&a.location, &a.code, a.severity, &a.message).cmp(&(&b.location, &b.code, b.severity, &b.message))
        });
        issues.dedup();
        let ok = !issues.iter().any(|i| i.severity == Severity::Error);
        Self { ok, issues }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn error_codes(&self) -> Vec<&str> {
        self.errors().map(|i| i.code.as_str()).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return writeln!(f, "ok");
        }
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        if self.ok {
            writeln!(f, "ok (with warnings)")
        } else {
            writeln!(f, "{} error(s)", self.errors().count())
        }
    }
}

/// Module ids mapped to their concrete specs.
pub type ResolvedSpecs = BTreeMap<String, ModuleSpec>;

/// Validates `flow` against `catalog`. Problems are reported, never raised.
pub fn validate_flow(flow: &FlowDefinition, catalog: &ModuleCatalog) -> ValidationReport {
    validate_at_depth(flow, catalog, 0).0
}

/// Validation for a flow reached through `depth` App Reference hops. Also
/// returns the specs that resolved.
pub fn validate_at_depth(flow: &FlowDefinition, catalog: &ModuleCatalog, depth: usize) -> (ValidationReport, ResolvedSpecs) {
    let mut issues = Vec::new();
    if let Err(e) = flow.check_structure() {
        issues.push(Issue::error("schema", "flow", e.to_string()));
        return (ValidationReport::from_issues(issues), ResolvedSpecs::new());
    }

    let module_ids: BTreeSet<&str> = flow.modules.iter().map(|m| m.id.as_str()).collect();
    let mut specs = ResolvedSpecs::new();
    for m in &flow.modules {
        match catalog.resolve(&m.kind, &m.params, depth) {
            Ok(spec) => {
                specs.insert(m.id.clone(), spec);
            }
            Err(errs) => {
                for e in errs {
                    issues.push(Issue::error(e.code, &m.id, e.message));
                }
            }
        }
    }

    // Incoming sources per input endpoint, for fan-in and required checks.
    let mut feeds: BTreeMap<Endpoint, Vec<String>> = BTreeMap::new();

    for c in &flow.connections {
        let loc = format!("{}->{}", c.from, c.to);
        let mut endpoints_ok = true;
        for ep in [&c.from, &c.to] {
            if !module_ids.contains(ep.module.as_str()) {
                issues.push(Issue::error("unknown-module", &loc, format!("no module '{}'", ep.module)));
                endpoints_ok = false;
            }
        }
        if !endpoints_ok {
            continue;
        }
        let src = specs.get(&c.from.module).map(|s| s.output_port(&c.from.port));
        let dst = specs.get(&c.to.module).map(|s| s.input_port(&c.to.port));
        if let Some(None) = src {
            issues.push(Issue::error("unknown-port", c.from.to_string(), format!("no output port '{}'", c.from.port)));
        }
        if let Some(None) = dst {
            issues.push(Issue::error("unknown-port", c.to.to_string(), format!("no input port '{}'", c.to.port)));
        }
        if let (Some(Some(s)), Some(Some(d))) = (src, dst) {
            if !assignable(&s.ty, &d.ty) {
                issues.push(Issue::error(
                    "type-mismatch",
                    c.to.to_string(),
                    format!("{} produces {} but {} expects {}", c.from, s.ty, c.to, d.ty),
                ));
            }
        }
        feeds.entry(c.to.clone()).or_default().push(c.from.to_string());
    }

    for e in &flow.external_inputs {
        let loc = format!("input:{}", e.name);
        match specs.get(&e.target.module) {
            _ if !module_ids.contains(e.target.module.as_str()) => issues.push(Issue::error(
                "dangling-binding",
                loc,
                format!("target module '{}' does not exist", e.target.module),
            )),
            Some(spec) if spec.input_port(&e.target.port).is_none() => issues.push(Issue::error(
                "dangling-binding",
                loc,
                format!("'{}' is not an input port", e.target),
            )),
            _ => {}
        }
        feeds.entry(e.target.clone()).or_default().push(format!("external input '{}'", e.name));
    }

    for e in &flow.external_outputs {
        let loc = format!("output:{}", e.name);
        match specs.get(&e.source.module) {
            _ if !module_ids.contains(e.source.module.as_str()) => issues.push(Issue::error(
                "dangling-binding",
                loc,
                format!("source module '{}' does not exist", e.source.module),
            )),
            Some(spec) if spec.output_port(&e.source.port).is_none() => issues.push(Issue::error(
                "dangling-binding",
                loc,
                format!("'{}' is not an output port", e.source),
            )),
            _ => {}
        }
    }

    for (ep, sources) in &mut feeds {
        sources.sort();
        if sources.len() > 1 {
            issues.push(Issue::error(
                "fan-in",
                ep.to_string(),
                format!("input fed by {} sources: {}", sources.len(), sources.join(", ")),
            ));
        }
    }

    for (id, spec) in &specs {
        for port in spec.inputs.iter().filter(|p| p.required) {
            let ep = Endpoint::new(id.clone(), port.name.clone());
            if !feeds.contains_key(&ep) {
                issues.push(Issue::error(
                    "missing-input",
                    ep.to_string(),
                    format!("required input {ep} ({}) is neither connected nor bound", port.ty),
                ));
            }
        }
    }

    if let Some(cycle) = find_cycle_members(flow) {
        issues.push(Issue::error(
            "cycle",
            cycle[0].clone(),
            format!("modules form a cycle: {}", cycle.join(", ")),
        ));
    }

    let consumed: BTreeSet<&str> = flow
        .connections
        .iter()
        .map(|c| c.from.module.as_str())
        .chain(flow.external_outputs.iter().map(|e| e.source.module.as_str()))
        .collect();
    for (id, spec) in &specs {
        if !spec.outputs.is_empty() && !consumed.contains(id.as_str()) {
            issues.push(Issue::warning("unused-output", id.clone(), "no output of this module is used"));
        }
    }

    (ValidationReport::from_issues(issues), specs)
}

/// Deterministic topological order over module ids (smallest ready id
/// first). `Err` carries the ids that could not be ordered.
pub fn topological_order(flow: &FlowDefinition) -> Result<Vec<String>, Vec<String>> {
    let ids: BTreeSet<&str> = flow.modules.iter().map(|m| m.id.as_str()).collect();
    let mut indegree: BTreeMap<&str, usize> = ids.iter().map(|id| (*id, 0)).collect();
    let mut succ: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for c in &flow.connections {
        let (a, b) = (c.from.module.as_str(), c.to.module.as_str());
        if ids.contains(a) && ids.contains(b) && succ.entry(a).or_default().insert(b) {
            *indegree.get_mut(b).unwrap() += 1;
        }
    }
    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(id) = ready.pop_first() {
        order.push(id.to_string());
        for next in succ.get(id).into_iter().flatten() {
            let d = indegree.get_mut(next).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(next);
            }
        }
    }
    if order.len() == ids.len() {
        Ok(order)
    } else {
        let placed: BTreeSet<&str> = order.iter().map(String::as_str).collect();
        Err(ids.difference(&placed).map(|s| s.to_string()).collect())
    }
}

/// Modules on a cycle, sorted; `None` for a DAG. Modules merely downstream
/// of a cycle are excluded.
fn find_cycle_members(flow: &FlowDefinition) -> Option<Vec<String>> {
    let stuck = topological_order(flow).err()?;
    // Peel off stuck modules with no stuck successors until only cycles remain.
    let mut members: BTreeSet<String> = stuck.into_iter().collect();
    loop {
        let has_succ: BTreeSet<&String> = flow
            .connections
            .iter()
            .filter(|c| members.contains(&c.from.module) && members.contains(&c.to.module))
            .map(|c| &c.from.module)
            .collect();
        let sinks: Vec<String> = members.iter().filter(|m| !has_succ.contains(m)).cloned().collect();
        if sinks.is_empty() {
            break;
        }
        for s in sinks {
            members.remove(&s);
        }
    }
    Some(members.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModuleInstance, ModuleSpec, ParamKind, ParamSpec, PortSpec, PortType};

    fn catalog() -> ModuleCatalog {
        let mut c = ModuleCatalog::new();
        c.register(
            ModuleSpec::new("Src", "")
                .input(PortSpec::optional_input("In", PortType::Int))
                .output(PortSpec::output("Out", PortType::Int)),
        )
        .unwrap();
        c.register(
            ModuleSpec::new("Op", "")
                .param(ParamSpec::optional("Note", ParamKind::Text, ""))
                .input(PortSpec::input("In", PortType::Real))
                .output(PortSpec::output("Out", PortType::Real)),
        )
        .unwrap();
        c.register(ModuleSpec::new("Sink", "").input(PortSpec::input("T", PortType::Table))).unwrap();
        c
    }

    #[test]
    fn widening_connection_is_fine() {
        let f = FlowDefinition::new("f")
            .module(ModuleInstance::new("a", "Src"))
            .module(ModuleInstance::new("b", "Op"))
            .connect("a.Out", "b.In")
            .output("r", "b.Out");
        let r = validate_flow(&f, &catalog());
        assert!(r.ok, "{r}");
        assert!(r.issues.is_empty());
    }

    #[test]
    fn type_mismatch_reported_at_destination() {
        let f = FlowDefinition::new("f")
            .module(ModuleInstance::new("a", "Src"))
            .module(ModuleInstance::new("s", "Sink"))
            .connect("a.Out", "s.T");
        let r = validate_flow(&f, &catalog());
        assert_eq!(r.error_codes(), ["type-mismatch"]);
        assert_eq!(r.errors().next().unwrap().location, "s.T");
    }

    #[test]
    fn cycle_reported_once() {
        let f = FlowDefinition::new("f")
            .module(ModuleInstance::new("m1", "Op"))
            .module(ModuleInstance::new("m2", "Op"))
            .module(ModuleInstance::new("m3", "Op"))
            .connect("m1.Out", "m2.In")
            .connect("m2.Out", "m1.In")
            .connect("m2.Out", "m3.In")
            .output("r", "m3.Out");
        let r = validate_flow(&f, &catalog());
        assert_eq!(r.error_codes(), ["cycle"]);
        let issue = r.errors().next().unwrap();
        assert_eq!(issue.location, "m1");
        assert!(issue.message.contains("m1, m2") && !issue.message.contains("m3"));
    }

    #[test]
    fn fan_in_counts_bindings_too() {
        let f = FlowDefinition::new("f")
            .module(ModuleInstance::new("a", "Src"))
            .module(ModuleInstance::new("b", "Op"))
            .connect("a.Out", "b.In")
            .input("x", "b.In")
            .output("r", "b.Out");
        assert_eq!(validate_flow(&f, &catalog()).error_codes(), ["fan-in"]);
    }

    #[test]
    fn missing_and_dangling() {
        let f = FlowDefinition::new("f")
            .module(ModuleInstance::new("b", "Op"))
            .input("x", "zz.In")
            .output("r", "b.In")
            .output("q", "b.Out");
        let r = validate_flow(&f, &catalog());
        assert_eq!(r.error_codes(), ["missing-input", "dangling-binding", "dangling-binding"]);
    }

    #[test]
    fn unknown_kind_and_port() {
        let f = FlowDefinition::new("f")
            .module(ModuleInstance::new("a", "Src"))
            .module(ModuleInstance::new("z", "Frob"))
            .module(ModuleInstance::new("b", "Op"))
            .connect("a.Nope", "b.In")
            .connect("a.Out", "z.In")
            .output("r", "b.Out");
        let r = validate_flow(&f, &catalog());
        assert_eq!(r.error_codes(), ["unknown-port", "unknown-kind"]);
    }

    #[test]
    fn report_independent_of_declaration_order() {
        let f = FlowDefinition::new("f")
            .module(ModuleInstance::new("a", "Src"))
            .module(ModuleInstance::new("s", "Sink"))
            .module(ModuleInstance::new("b", "Op").param("Bad", 1i64))
            .connect("a.Out", "s.T")
            .connect("a.Out", "b.In");
        let mut g = f.clone();
        g.modules.reverse();
        g.connections.reverse();
        assert_eq!(validate_flow(&f, &catalog()), validate_flow(&g, &catalog()));
    }
}
