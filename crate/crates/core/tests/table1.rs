use std::path::PathBuf;

use qrewrite::partition::{build_edge_list, partition_table, PartitionConstraints};
use qrewrite::qasm::emit_qasm;
use qrewrite::store::{load_native_file, save_native};
use qrewrite::{CircuitTable, GateId, GateOp, GateType, PortRef, Postfix};

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/table1.csv")
}

fn fixture() -> CircuitTable {
    load_native_file(&fixture_path()).expect("fixture loads")
}

#[test]
fn loads_with_three_wires() {
    let t = fixture();
    assert_eq!(t.label(), "hyp_circ");
    assert_eq!(t.num_qubits(), 3);
    assert_eq!(t.gate_count(), 3);
    let report = t.audit().unwrap();
    assert_eq!((report.rows, report.gates, report.qubits), (9, 3, 3));
}

#[test]
fn cnot_row_links_to_both_hadamards() {
    let t = fixture();
    let cnot = t.select_by_id(GateId(1)).unwrap();
    assert_eq!(cnot.gate_type, GateType::Cnot);
    assert!(cnot.switch);
    assert_eq!(cnot.next[0], Some(PortRef::new(GateId(2), Postfix::Control)));
    assert_eq!(cnot.next[1], Some(PortRef::new(GateId(3), Postfix::Control)));
    assert_eq!(cnot.next[2], None);
    for h in [2, 3] {
        let rec = t.select_by_id(GateId(h)).unwrap();
        assert_eq!(rec.gate_type, GateType::H);
        assert!(!rec.switch);
        assert_eq!(rec.prev[0].map(|p| p.gate()), Some(GateId(1)));
    }
}

#[test]
fn reconstructs_to_the_pictured_circuit() {
    let r = fixture().reconstruct().unwrap();
    assert_eq!(r.num_qubits, 3);
    assert_eq!(r.ops, vec![GateOp::cnot(0, 1), GateOp::single(GateType::H, 0), GateOp::single(GateType::H, 1)]);
    assert!(r.per_wire()[2].is_empty());
}

#[test]
fn save_is_byte_exact() {
    let mut out = Vec::new();
    save_native(&fixture(), &mut out).unwrap();
    assert_eq!(out, std::fs::read(fixture_path()).unwrap());
}

#[test]
fn emits_qasm_in_table_order() {
    let text = emit_qasm(&fixture()).unwrap();
    let body: Vec<&str> = text.lines().skip(3).collect();
    assert_eq!(body, vec!["cx q[0],q[1];", "h q[0];", "h q[1];"]);
}

#[test]
fn edge_list_runs_from_cnot_to_hadamards() {
    let edges = build_edge_list(&fixture()).unwrap();
    let pairs: Vec<(u64, u64)> = edges.iter().map(|e| (e.from.gate().0, e.to.gate().0)).collect();
    assert_eq!(pairs, vec![(4, 1), (5, 1), (6, 9), (1, 2), (1, 3), (2, 7), (3, 8)]);
}

#[test]
fn deleting_the_cnot_hangs_hadamards_from_inputs() {
    let t = fixture();
    let mut txn = t.begin();
    txn.lock_gates(&[GateId(1), GateId(2), GateId(3), GateId(4), GateId(5)]).unwrap();
    txn.delete_gate(GateId(1)).unwrap();
    txn.commit().unwrap();
    t.audit().unwrap();
    assert_eq!(t.select_by_id(GateId(2)).unwrap().prev[0], Some(PortRef::new(GateId(4), Postfix::Control)));
    assert_eq!(t.select_by_id(GateId(3)).unwrap().prev[0], Some(PortRef::new(GateId(5), Postfix::Control)));
    assert_eq!(t.reconstruct().unwrap().ops, vec![GateOp::single(GateType::H, 0), GateOp::single(GateType::H, 1)]);
}

#[test]
fn one_partition_when_unbounded() {
    let t = fixture();
    let parts = partition_table(&t, PartitionConstraints::unbounded(), 2).unwrap();
    assert_eq!(parts.len(), 1);
    assert_eq!(parts[0].members, vec![GateId(1), GateId(2), GateId(3)]);
    assert_eq!((parts[0].gates, parts[0].depth), (3, 2));
    let qubits: Vec<u32> = parts[0].wires.iter().map(|w| w.qubit).collect();
    assert_eq!(qubits, vec![0, 1]);
}
