#![allow(dead_code)]

use std::f64::consts::PI;

use qrewrite::{CircuitTable, GateOp, GateType};
use qrewrite_oracle::{Op, Unitary};
use rand::Rng;

pub fn to_oracle(op: &GateOp) -> Op {
    let qs: Vec<usize> = op.qubits().iter().map(|&q| q as usize).collect();
    let name = match op.gate_type {
        GateType::Cnot => "cx".to_string(),
        GateType::Toffoli => "ccx".to_string(),
        other => other.name().to_lowercase(),
    };
    Op::from_name(&name, &qs, op.param).expect("oracle knows every gate")
}

pub fn unitary_of_ops(n: usize, ops: &[GateOp]) -> Unitary {
    let ops: Vec<Op> = ops.iter().map(to_oracle).collect();
    Unitary::of(n, &ops)
}

pub fn unitary_of(table: &CircuitTable) -> Unitary {
    let r = table.reconstruct().expect("table reconstructs");
    unitary_of_ops(r.num_qubits, &r.ops)
}

/// Gate kinds a random circuit may draw from.
#[derive(Clone, Copy, Debug)]
pub struct Mix {
    pub rotations: bool,
    pub three_qubit: bool,
}

impl Mix {
    pub const ALL: Mix = Mix { rotations: true, three_qubit: true };
    pub const CLIFFORD_T: Mix = Mix { rotations: false, three_qubit: false };
    pub const WITH_ROTATIONS: Mix = Mix { rotations: true, three_qubit: false };
}

fn distinct<R: Rng + ?Sized>(rng: &mut R, n: u32, k: usize) -> Vec<u32> {
    rand::seq::index::sample(rng, n as usize, k).into_iter().map(|q| q as u32).collect()
}

pub fn random_op<R: Rng + ?Sized>(rng: &mut R, n: u32, mix: Mix) -> GateOp {
    let singles = [GateType::H, GateType::X, GateType::Z, GateType::S, GateType::Sdg, GateType::T, GateType::Tdg];
    loop {
        let pick = rng.gen_range(0..14);
        let op = match pick {
            0..=6 => GateOp::single(singles[pick], rng.gen_range(0..n)),
            7 | 8 if mix.rotations => {
                let t = if pick == 7 { GateType::Rx } else { GateType::Rz };
                GateOp::rotation(t, rng.gen_range(0..n), rng.gen_range(-PI..PI))
            }
            9..=11 if n >= 2 => {
                let q = distinct(rng, n, 2);
                GateOp::cnot(q[0], q[1])
            }
            12 | 13 if mix.three_qubit && n >= 3 => {
                let q = distinct(rng, n, 3);
                if pick == 12 {
                    GateOp::toffoli(q[0], q[1], q[2])
                } else {
                    GateOp::cswap(q[0], q[1], q[2])
                }
            }
            _ => continue,
        };
        return op;
    }
}

pub fn random_ops<R: Rng + ?Sized>(rng: &mut R, n: u32, len: usize, mix: Mix) -> Vec<GateOp> {
    (0..len).map(|_| random_op(rng, n, mix)).collect()
}

/// A short op sequence containing a site for the named template.
pub fn pattern<R: Rng + ?Sized>(rng: &mut R, name: &str, n: u32) -> Vec<GateOp> {
    use GateType::*;
    let q = distinct(rng, n, 3.min(n as usize));
    let angle = rng.gen_range(-PI..PI);
    let pick = |rng: &mut R, from: &[GateType]| from[rng.gen_range(0..from.len())];
    match name {
        "a" => {
            let u = pick(rng, &[H, X, Z, S, Sdg, T, Tdg]);
            vec![GateOp::single(u, q[0]), GateOp::single(u.adjoint(), q[0])]
        }
        "b" => vec![GateOp::cnot(q[0], q[1]); 2],
        "c" => {
            let d = pick(rng, &[Z, S, Sdg, T, Tdg, Rz]);
            vec![GateOp::new(d, &[q[0]], if d == Rz { angle } else { 0.0 }), GateOp::cnot(q[0], q[1])]
        }
        "d" => {
            let x = pick(rng, &[X, Rx]);
            vec![GateOp::new(x, &[q[1]], if x == Rx { angle } else { 0.0 }), GateOp::cnot(q[0], q[1])]
        }
        "e" => vec![GateOp::rotation(Rx, q[0], angle), GateOp::rotation(Rx, q[0], rng.gen_range(-PI..PI))],
        "f" => vec![GateOp::rotation(Rz, q[0], angle), GateOp::rotation(Rz, q[0], rng.gen_range(-PI..PI))],
        "g" => vec![
            GateOp::single(H, q[0]),
            GateOp::single(H, q[1]),
            GateOp::cnot(q[0], q[1]),
            GateOp::single(H, q[0]),
            GateOp::single(H, q[1]),
        ],
        "a-rev" => vec![random_op(rng, n, Mix::ALL)],
        "b-rev" | "g-rev" => vec![GateOp::cnot(q[0], q[1])],
        "c-rev" => {
            let d = pick(rng, &[Z, S, Sdg, T, Tdg, Rz]);
            vec![GateOp::cnot(q[0], q[1]), GateOp::new(d, &[q[0]], if d == Rz { angle } else { 0.0 })]
        }
        "d-rev" => {
            let x = pick(rng, &[X, Rx]);
            vec![GateOp::cnot(q[0], q[1]), GateOp::new(x, &[q[1]], if x == Rx { angle } else { 0.0 })]
        }
        "e-rev" => vec![GateOp::rotation(Rx, q[0], angle)],
        "f-rev" => vec![GateOp::rotation(Rz, q[0], angle)],
        "toffoli" => vec![GateOp::toffoli(q[0], q[1], q[2])],
        "cswap" => vec![GateOp::cswap(q[0], q[1], q[2])],
        other => panic!("no pattern for {other}"),
    }
}

/// Random background of `len` gates with the pattern for `name` spliced in
/// at a random position.
pub fn planted<R: Rng + ?Sized>(rng: &mut R, name: &str, n: u32, len: usize) -> Vec<GateOp> {
    let mut ops = random_ops(rng, n, len, Mix::ALL);
    let at = rng.gen_range(0..=ops.len());
    let pat = pattern(rng, name, n);
    ops.splice(at..at, pat);
    ops
}
