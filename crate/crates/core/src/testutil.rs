use qrewrite_oracle::{Op, Unitary};

use crate::gate::{GateOp, GateType};
use crate::store::CircuitTable;

pub(crate) fn to_oracle(op: &GateOp) -> Op {
    let qs: Vec<usize> = op.qubits().iter().map(|&q| q as usize).collect();
    let name = match op.gate_type {
        GateType::Cnot => "cx",
        GateType::Toffoli => "ccx",
        other => return Op::from_name(&other.name().to_lowercase(), &qs, op.param).expect("known gate"),
    };
    Op::from_name(name, &qs, op.param).expect("known gate")
}

pub(crate) fn unitary_of(table: &CircuitTable) -> Unitary {
    let r = table.reconstruct().expect("reconstructs");
    let ops: Vec<Op> = r.ops.iter().map(to_oracle).collect();
    Unitary::of(r.num_qubits, &ops)
}

pub(crate) fn unitary_of_ops(n: usize, ops: &[GateOp]) -> Unitary {
    let ops: Vec<Op> = ops.iter().map(to_oracle).collect();
    Unitary::of(n, &ops)
}
