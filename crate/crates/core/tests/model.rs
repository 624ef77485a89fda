mod support;

use jitflow_core::dsl::{parse_dsl, render_dsl};
use jitflow_core::jit::builtin_jit_flow;
use jitflow_core::model::{assignable, parse_flow_document, serialize_flow, validate_flow, FlowDefinition, PortType};
use jitflow_core::stdlib::standard_catalog;
use jitflow_core::FlowParseError;
use proptest::prelude::*;
use support::*;

#[test]
fn add_flow_document_shape() {
    let f = flow("add.flow.json");
    assert_eq!(f.modules.len(), 4);
    assert_eq!(f.connections.len(), 3);
    let report = validate_flow(&f, &standard_catalog());
    assert!(report.ok, "{report}");
}

#[test]
fn duplicate_module_id_is_schema_error() {
    let text = r#"{"name":"d","version":1,"modules":[{"id":"m1","kind":"K"},{"id":"m1","kind":"K"}],
        "connections":[],"externalInputs":[],"externalOutputs":[]}"#;
    assert!(matches!(parse_flow_document(text), Err(FlowParseError::Schema { .. })));
}

#[test]
fn module_order_does_not_change_canonical_text() {
    let f = flow("add.flow.json");
    let mut reversed = f.clone();
    reversed.modules.reverse();
    reversed.connections.reverse();
    assert_eq!(serialize_flow(&f), serialize_flow(&reversed));
}

#[test]
fn add_flow_dsl_and_json_agree() {
    let f = flow("add.flow.json");
    let dsl = render_dsl(&f);
    let back = parse_dsl(&dsl).unwrap();
    assert_eq!(back, f);
    assert_eq!(serialize_flow(&back), serialize_flow(&f));
    let kinds: Vec<(&str, &str)> = back.modules.iter().map(|m| (m.id.as_str(), m.kind.as_str())).collect();
    assert_eq!(
        kinds,
        [("a", "ExternalIntInput"), ("b", "ExternalIntInput"), ("c", "Calculator"), ("o", "ExternalIntOutput")]
    );
}

#[test]
fn three_input_chain_renders_and_reparses() {
    let f = flow("three-input-add.flow");
    let back = parse_dsl(&render_dsl(&f)).unwrap();
    assert_eq!(back.modules.len(), 6);
    assert_eq!(back.connections.len(), 5);
    assert_eq!(back, f);
}

#[test]
fn assignability_table_is_exhaustive() {
    use PortType::*;
    let scalars = [Int, Real, Bool, Text, Json, Table, KeyValue];
    for src in &scalars {
        for dst in &scalars {
            let expected = src == dst
                || (*src == Int && *dst == Real)
                || (*dst == Text && matches!(src, Int | Real | Bool));
            assert_eq!(assignable(src, dst), expected, "{src} -> {dst}");
            let (ls, ld) = (PortType::list(src.clone()).unwrap(), PortType::list(dst.clone()).unwrap());
            assert_eq!(assignable(&ls, &ld), expected, "List({src}) -> List({dst})");
            assert!(!assignable(&ls, dst), "List({src}) -> {dst}");
            assert!(!assignable(src, &ld), "{src} -> List({dst})");
        }
    }
    assert!(assignable(&Int, &Real));
    assert!(!assignable(&Int, &Table));
    assert!(assignable(&PortType::list(Int).unwrap(), &PortType::list(Real).unwrap()));
}

#[test]
fn seeded_invalid_flows_report_one_code_each() {
    let catalog = standard_catalog();
    for (file, code) in [
        ("unknown-kind", "unknown-kind"),
        ("type-mismatch", "type-mismatch"),
        ("cycle", "cycle"),
        ("fan-in", "fan-in"),
        ("unbound-input", "missing-input"),
    ] {
        let report = validate_flow(&flow(&format!("invalid/{file}.flow.json")), &catalog);
        assert!(!report.ok);
        assert_eq!(report.error_codes(), vec![code], "{file}: {report}");
    }
}

#[test]
fn builtin_jit_flow_validates() {
    let report = validate_flow(&builtin_jit_flow(), &standard_catalog());
    assert!(report.ok, "{report}");
}

#[test]
fn validation_is_deterministic_under_reordering() {
    let catalog = standard_catalog();
    for file in ["invalid/cycle.flow.json", "invalid/fan-in.flow.json", "add.flow.json"] {
        let f = flow(file);
        let mut g = f.clone();
        g.modules.reverse();
        g.connections.reverse();
        assert_eq!(validate_flow(&f, &catalog), validate_flow(&g, &catalog), "{file}");
    }
}

fn round_trips(f: &FlowDefinition) -> Result<(), TestCaseError> {
    let json = serialize_flow(f);
    let from_json = parse_flow_document(&json).map_err(|e| TestCaseError::fail(format!("{e}\n{json}")))?;
    prop_assert_eq!(&from_json, f);
    let dsl = render_dsl(f);
    let from_dsl = parse_dsl(&dsl).map_err(|e| TestCaseError::fail(format!("{e}\n{dsl}")))?;
    prop_assert_eq!(&from_dsl, f);
    prop_assert_eq!(serialize_flow(&from_dsl), json);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn arbitrary_flows_round_trip(f in arb_flow()) {
        round_trips(&f)?;
    }

    #[test]
    fn random_valid_dags_round_trip(d in arb_dag()) {
        let f = d.flow();
        let report = validate_flow(&f, &standard_catalog());
        prop_assert!(report.ok, "{}", report);
        round_trips(&f)?;
    }
}
