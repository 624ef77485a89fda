#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use jitflow_core::dsl::read_flow_file;
use jitflow_core::engine::{execute_run, plan_run, EventKind, ExecutionContext, Run};
use jitflow_core::model::{Cell, Connection, Endpoint, ExternalInput, ExternalOutput, FlowDefinition, ModuleInstance, ParamValue, Table, Value};
use jitflow_core::stdlib::standard_context;
use jitflow_llm::{serve_mock, Cassette, Gateway, MockProvider, MockServerHandle};
use proptest::prelude::*;

pub const API_KEY: &str = "sk-test-0123456789";

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(rel: &str) -> PathBuf {
    root().join("fixtures").join(rel)
}

pub fn flow(rel: &str) -> FlowDefinition {
    read_flow_file(&fixture(&format!("flows/{rel}"))).unwrap()
}

pub fn listing(name: &str) -> String {
    std::fs::read_to_string(fixture(&format!("listings/{name}"))).unwrap()
}

pub fn cassette() -> Cassette {
    Cassette::load(fixture("cassettes/worked-examples.json")).unwrap()
}

pub fn prompt_of(flow: &FlowDefinition) -> String {
    flow.get_module("prompt").unwrap().params["Default"].as_text().unwrap().to_string()
}

pub fn ctx() -> ExecutionContext {
    standard_context(None)
}

pub fn mock_gateway(cassette: Cassette) -> Gateway {
    Gateway::new(Arc::new(MockProvider::new(cassette)), "gpt-3.5-turbo")
}

/// Standard context whose JIT flow talks to a local mock server.
pub async fn mock_ctx(cassette: Cassette) -> (ExecutionContext, MockServerHandle) {
    let server = serve_mock(cassette, 0).await.unwrap();
    let ctx = ctx().with_var("JITFLOW_LLM_BASE_URL", server.base_url()).with_var("JITFLOW_LLM_API_KEY", API_KEY);
    (ctx, server)
}

pub fn inputs(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

pub async fn run_flow(flow: &FlowDefinition, inputs: BTreeMap<String, Value>, ctx: &Arc<ExecutionContext>) -> Run {
    let plan = plan_run(flow, &ctx.catalog, inputs).unwrap();
    execute_run(plan, ctx.clone()).await
}

/// A random DAG of integer Calculators over `n_inputs` external inputs.
#[derive(Debug, Clone)]
pub struct RandomDag {
    pub n_inputs: usize,
    /// (operator, param1 source, param2 source); sources index earlier
    /// nodes, inputs first.
    pub nodes: Vec<(char, usize, usize)>,
    /// Node indexes exposed as outputs.
    pub outputs: Vec<usize>,
    pub gated: Vec<bool>,
}

impl RandomDag {
    fn id(&self, i: usize) -> String {
        if i < self.n_inputs {
            format!("in{i}")
        } else {
            format!("calc{}", i - self.n_inputs)
        }
    }

    pub fn flow(&self) -> FlowDefinition {
        let mut f = FlowDefinition::new("random-dag");
        for i in 0..self.n_inputs {
            f = f.module(ModuleInstance::new(self.id(i), "ExternalIntInput")).input(format!("x{i}"), &format!("in{i}.Input"));
        }
        for (k, (op, a, b)) in self.nodes.iter().enumerate() {
            let id = self.id(self.n_inputs + k);
            let mut m = ModuleInstance::new(&id, "Calculator").param("Operator", op.to_string());
            m.gated = self.gated[k];
            f = f
                .module(m)
                .connect(&format!("{}.Result", self.id(*a)), &format!("{id}.Param1"))
                .connect(&format!("{}.Result", self.id(*b)), &format!("{id}.Param2"));
        }
        for (j, node) in self.outputs.iter().enumerate() {
            f = f
                .module(ModuleInstance::new(format!("out{j}"), "ExternalIntOutput"))
                .connect(&format!("{}.Result", self.id(*node)), &format!("out{j}.Input"))
                .output(format!("y{j}"), &format!("out{j}.Result"));
        }
        f
    }

    /// Direct evaluation, independent of the engine.
    pub fn evaluate(&self, xs: &[i64]) -> BTreeMap<String, i64> {
        let mut vals: Vec<i64> = xs.to_vec();
        for (op, a, b) in &self.nodes {
            let (a, b) = (vals[*a], vals[*b]);
            vals.push(match op {
                '+' => a + b,
                '-' => a - b,
                _ => unreachable!(),
            });
        }
        self.outputs.iter().enumerate().map(|(j, n)| (format!("y{j}"), vals[*n])).collect()
    }

    /// Module ids reachable from `id` along connections, including `id`.
    pub fn downstream(&self, flow: &FlowDefinition, id: &str) -> Vec<String> {
        let mut seen = vec![id.to_string()];
        let mut i = 0;
        while i < seen.len() {
            let cur = seen[i].clone();
            for c in flow.connections.iter().filter(|c| c.from.module == cur) {
                if !seen.contains(&c.to.module) {
                    seen.push(c.to.module.clone());
                }
            }
            i += 1;
        }
        seen
    }
}

pub fn arb_dag() -> impl Strategy<Value = RandomDag> {
    (1usize..4, 1usize..12).prop_flat_map(|(n_inputs, n_nodes)| {
        let nodes = (0..n_nodes)
            .map(|k| (prop::sample::select(vec!['+', '-']), 0..n_inputs + k, 0..n_inputs + k))
            .collect::<Vec<_>>();
        let total = n_inputs + n_nodes;
        (
            Just(n_inputs),
            nodes,
            prop::collection::vec(n_inputs..total, 1..4),
            prop::collection::vec(prop::bool::weighted(0.2), n_nodes),
        )
            .prop_map(|(n_inputs, nodes, outputs, gated)| RandomDag { n_inputs, nodes, outputs, gated })
    })
}

pub fn arb_dag_inputs() -> impl Strategy<Value = (RandomDag, Vec<i64>)> {
    arb_dag().prop_flat_map(|d| {
        let n = d.n_inputs;
        (Just(d), prop::collection::vec(-1000i64..1000, n))
    })
}

pub fn arb_ident() -> impl Strategy<Value = String> {
    "[a-zA-Z_][a-zA-Z0-9_]{0,7}"
}

pub fn arb_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[ -~]{0,12}",
        "[a-z\"\\\n\t{}#$é✓\r]{0,12}",
        Just("${JITFLOW_LLM_MODEL:-gpt}".to_string()),
    ]
}

pub fn arb_param() -> impl Strategy<Value = ParamValue> {
    prop_oneof![
        any::<i64>().prop_map(ParamValue::Int),
        any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(ParamValue::Real),
        any::<bool>().prop_map(ParamValue::Bool),
        arb_text().prop_map(ParamValue::Text),
    ]
}

/// Structurally valid flows over arbitrary kinds and ports.
pub fn arb_flow() -> impl Strategy<Value = FlowDefinition> {
    let module = (arb_ident(), prop::collection::btree_map(arb_ident(), arb_param(), 0..4), any::<bool>());
    (
        arb_text(),
        1i64..5,
        prop::collection::btree_map(arb_ident(), module, 0..7),
    )
        .prop_flat_map(|(name, version, modules)| {
            let ids: Vec<String> = modules.keys().cloned().collect();
            let endpoint = if ids.is_empty() {
                Just(Endpoint::new("m", "p")).boxed()
            } else {
                (prop::sample::select(ids.clone()), arb_ident()).prop_map(|(m, p)| Endpoint::new(m, p)).boxed()
            };
            let n = if ids.is_empty() { 0 } else { 6 };
            (
                Just((name, version, modules)),
                prop::collection::vec((endpoint.clone(), endpoint.clone()), 0..=n),
                prop::collection::btree_map(arb_text().prop_filter("non-empty", |s| !s.is_empty()), endpoint.clone(), 0..=n.min(3)),
                prop::collection::btree_map(arb_text().prop_filter("non-empty", |s| !s.is_empty()), endpoint, 0..=n.min(3)),
            )
        })
        .prop_map(|((name, version, modules), conns, ins, outs)| {
            let mut f = FlowDefinition::new(name);
            f.version = version;
            for (id, (kind, params, gated)) in modules {
                let mut m = ModuleInstance::new(id, kind);
                m.params = params;
                m.gated = gated;
                f.modules.push(m);
            }
            f.connections = conns.into_iter().map(|(from, to)| Connection { from, to }).collect();
            f.external_inputs = ins.into_iter().map(|(name, target)| ExternalInput { name, target }).collect();
            f.external_outputs = outs.into_iter().map(|(name, source)| ExternalOutput { name, source }).collect();
            f
        })
}

/// Rows that equal some row at a smaller index, in order.
pub fn duplicate_oracle(t: &Table) -> Table {
    let rows = t.rows().iter().enumerate().filter(|(i, r)| t.rows()[..*i].contains(r)).map(|(_, r)| r.clone()).collect();
    Table::new(t.columns().to_vec(), rows).unwrap()
}

fn arb_cell() -> impl Strategy<Value = Cell> {
    prop_oneof![
        Just(Cell::Null),
        any::<bool>().prop_map(Cell::Bool),
        (-1_000_000i64..1_000_000).prop_map(|i| Cell::Number(i as f64)),
        any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(Cell::Number),
        "[a-z ,\"\n\r'0-9.]{0,8}".prop_map(Cell::Text),
        Just(Cell::Text("true".into())),
        Just(Cell::Text(String::new())),
    ]
}

/// Arbitrary tables for CSV round trips.
pub fn arb_csv_table() -> impl Strategy<Value = Table> {
    (1usize..5, 0usize..12).prop_flat_map(|(ncols, nrows)| {
        (
            prop::collection::vec("[a-zA-Z ,\"_]{1,6}", ncols).prop_filter("unique columns", |c| {
                c.iter().collect::<std::collections::BTreeSet<_>>().len() == c.len()
            }),
            prop::collection::vec(prop::collection::vec(arb_cell(), ncols), nrows),
        )
            .prop_map(|(columns, rows)| Table::new(columns, rows).unwrap())
    })
}

/// Tables pandas reads back unchanged: each column holds small integers
/// (with optional nulls) or short alphabetic text. Rows are drawn from a
/// small pool so duplicates are common.
pub fn arb_dup_table() -> impl Strategy<Value = Table> {
    (1usize..=4, 1usize..=20).prop_flat_map(|(ncols, nrows)| {
        let column = prop::bool::ANY.prop_flat_map(|numeric| {
            let cell = if numeric {
                prop_oneof![4 => (0i64..3).prop_map(|i| Cell::Number(i as f64)), 1 => Just(Cell::Null)].boxed()
            } else {
                prop::sample::select(vec!["a", "b", "cat"]).prop_map(|s| Cell::Text(s.into())).boxed()
            };
            prop::collection::vec(cell, 3)
        });
        (prop::collection::vec(column, ncols), prop::collection::vec((0usize..3, 0usize..3), nrows))
    })
    .prop_map(|(pools, picks)| {
        let ncols = pools.len();
        let columns = (0..ncols).map(|c| format!("col{c}")).collect();
        let rows = picks
            .into_iter()
            .map(|(row, jitter)| (0..ncols).map(|c| pools[c][if c == 0 { jitter } else { row }].clone()).collect())
            .collect();
        Table::new(columns, rows).unwrap()
    })
}

fn event_index(run: &Run, id: &str, kind: EventKind) -> Option<(usize, u64)> {
    run.trace.iter().enumerate().find(|(_, e)| e.event == kind && e.module_id.as_deref() == Some(id)).map(|(i, e)| (i, e.ts))
}

/// Every module starts at most once, only after all its producers
/// completed, and trace timestamps never go backwards.
pub fn check_delivery(run: &Run, flow: &FlowDefinition) -> Result<(), String> {
    for m in &flow.modules {
        let starts = run.events_for(&m.id).filter(|e| e.event == EventKind::ModuleStarted).count();
        if starts > 1 {
            return Err(format!("{} started {starts} times", m.id));
        }
    }
    for c in &flow.connections {
        if let Some((si, sts)) = event_index(run, &c.to.module, EventKind::ModuleStarted) {
            let (ci, cts) = event_index(run, &c.from.module, EventKind::ModuleCompleted)
                .ok_or_else(|| format!("{} started before {} completed", c.to.module, c.from.module))?;
            if ci > si || cts > sts {
                return Err(format!("{} started before {} completed", c.to.module, c.from.module));
            }
        }
    }
    if run.trace.windows(2).any(|w| w[0].ts > w[1].ts) {
        return Err("trace timestamps decrease".into());
    }
    Ok(())
}
