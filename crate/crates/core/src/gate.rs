//! Gate vocabulary shared by every layer of the engine.

use std::f64::consts::PI;
use std::fmt;
use std::num::NonZeroU64;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateType {
    In,
    Out,
    H,
    X,
    Z,
    S,
    Sdg,
    T,
    Tdg,
    Rx,
    Rz,
    Cnot,
    Toffoli,
    Cswap,
}

impl GateType {
    pub const COUNT: usize = 14;

    pub const ALL: [GateType; GateType::COUNT] = [
        GateType::In,
        GateType::Out,
        GateType::H,
        GateType::X,
        GateType::Z,
        GateType::S,
        GateType::Sdg,
        GateType::T,
        GateType::Tdg,
        GateType::Rx,
        GateType::Rz,
        GateType::Cnot,
        GateType::Toffoli,
        GateType::Cswap,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn arity(self) -> usize {
        match self {
            GateType::Cnot => 2,
            GateType::Toffoli | GateType::Cswap => 3,
            _ => 1,
        }
    }

    /// In and Out are wire boundaries, not gates.
    pub fn is_boundary(self) -> bool {
        matches!(self, GateType::In | GateType::Out)
    }

    pub fn is_parametric(self) -> bool {
        matches!(self, GateType::Rx | GateType::Rz)
    }

    /// Counted towards T-count.
    pub fn is_t_like(self) -> bool {
        matches!(self, GateType::T | GateType::Tdg)
    }

    /// Single-qubit gates that are diagonal in the computational basis and
    /// therefore commute with a CNOT control.
    pub fn is_diagonal(self) -> bool {
        matches!(
            self,
            GateType::Z | GateType::S | GateType::Sdg | GateType::T | GateType::Tdg | GateType::Rz
        )
    }

    /// Gate type of the adjoint (parameters are negated separately).
    pub fn adjoint(self) -> GateType {
        match self {
            GateType::S => GateType::Sdg,
            GateType::Sdg => GateType::S,
            GateType::T => GateType::Tdg,
            GateType::Tdg => GateType::T,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateType::In => "In",
            GateType::Out => "Out",
            GateType::H => "H",
            GateType::X => "X",
            GateType::Z => "Z",
            GateType::S => "S",
            GateType::Sdg => "Sdg",
            GateType::T => "T",
            GateType::Tdg => "Tdg",
            GateType::Rx => "Rx",
            GateType::Rz => "Rz",
            GateType::Cnot => "CNOT",
            GateType::Toffoli => "Toffoli",
            GateType::Cswap => "CSWAP",
        }
    }

    pub fn from_name(name: &str) -> Option<GateType> {
        GateType::ALL.iter().copied().find(|t| t.name() == name)
    }

    /// Role code of the wire attached to `slot`.
    ///
    /// Single-qubit gates use 0. CNOT: control 0, target 1. Toffoli and CSWAP:
    /// slot 0 is 0, slot 1 (second control / first swap wire) is 2 and slot 2
    /// is 1.
    pub fn postfix_of_slot(self, slot: usize) -> Postfix {
        debug_assert!(slot < self.arity());
        match (self.arity(), slot) {
            (_, 0) => Postfix::Control,
            (2, 1) => Postfix::Target,
            (3, 1) => Postfix::Control2,
            (3, 2) => Postfix::Target,
            _ => unreachable!("slot {slot} out of range for {self}"),
        }
    }

    pub fn slot_of_postfix(self, postfix: Postfix) -> Option<usize> {
        match (self.arity(), postfix) {
            (_, Postfix::Control) => Some(0),
            (2, Postfix::Target) => Some(1),
            (3, Postfix::Control2) => Some(1),
            (3, Postfix::Target) => Some(2),
            _ => None,
        }
    }
}

impl fmt::Display for GateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Role of the wire a link attaches to on the neighbouring gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Postfix {
    /// Sole wire of a single-qubit gate or first control.
    Control = 0,
    Target = 1,
    /// Second control of a three-qubit gate.
    Control2 = 2,
}

impl Postfix {
    pub fn from_code(code: u64) -> Option<Postfix> {
        match code {
            0 => Some(Postfix::Control),
            1 => Some(Postfix::Target),
            2 => Some(Postfix::Control2),
            _ => None,
        }
    }

    pub fn code(self) -> u64 {
        self as u64
    }
}

/// Unique row identifier inside one circuit table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GateId(pub u64);

impl fmt::Display for GateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A directed link target: neighbour gate plus the role of the wire on it.
///
/// Packed as `id * 3 + postfix + 1` so `Option<PortRef>` costs eight bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef(NonZeroU64);

impl PortRef {
    pub fn new(gate: GateId, postfix: Postfix) -> PortRef {
        let raw = gate.0 * 3 + postfix.code() + 1;
        PortRef(NonZeroU64::new(raw).expect("nonzero"))
    }

    pub fn gate(self) -> GateId {
        GateId((self.0.get() - 1) / 3)
    }

    pub fn postfix(self) -> Postfix {
        Postfix::from_code((self.0.get() - 1) % 3).expect("postfix in range")
    }

    /// Integer form used by the tabular text format: `id * 3 + postfix`.
    pub fn encode(self) -> u64 {
        self.0.get() - 1
    }

    pub fn decode(value: u64) -> Option<PortRef> {
        value.checked_add(1).and_then(NonZeroU64::new).map(PortRef)
    }
}

impl fmt::Debug for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.gate(), self.postfix().code())
    }
}

/// One row of a circuit table.
#[derive(Clone, Debug, PartialEq)]
pub struct GateRecord {
    pub id: GateId,
    pub gate_type: GateType,
    pub param: f64,
    /// Opaque flag carried through storage untouched.
    pub switch: bool,
    pub prev: [Option<PortRef>; 3],
    pub next: [Option<PortRef>; 3],
}

impl GateRecord {
    pub fn new(id: GateId, gate_type: GateType, param: f64) -> GateRecord {
        GateRecord {
            id,
            gate_type,
            param,
            switch: false,
            prev: [None; 3],
            next: [None; 3],
        }
    }

    pub fn arity(&self) -> usize {
        self.gate_type.arity()
    }

    /// Port naming this gate's wire in `slot`.
    pub fn port(&self, slot: usize) -> PortRef {
        PortRef::new(self.id, self.gate_type.postfix_of_slot(slot))
    }

    pub fn slot_of(&self, postfix: Postfix) -> Option<usize> {
        self.gate_type.slot_of_postfix(postfix)
    }
}

/// A gate placed on numbered qubits; the interchange form used by parsers,
/// generators, reconstruction and batch streaming.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateOp {
    pub gate_type: GateType,
    pub param: f64,
    qubits: [u32; 3],
}

impl GateOp {
    /// Panics if the qubit count does not match the gate arity.
    pub fn new(gate_type: GateType, qubits: &[u32], param: f64) -> GateOp {
        assert_eq!(
            qubits.len(),
            gate_type.arity(),
            "{gate_type} takes {} qubits",
            gate_type.arity()
        );
        let mut q = [0; 3];
        q[..qubits.len()].copy_from_slice(qubits);
        GateOp { gate_type, param, qubits: q }
    }

    pub fn single(gate_type: GateType, q: u32) -> GateOp {
        GateOp::new(gate_type, &[q], 0.0)
    }

    pub fn rotation(gate_type: GateType, q: u32, angle: f64) -> GateOp {
        GateOp::new(gate_type, &[q], angle)
    }

    pub fn cnot(control: u32, target: u32) -> GateOp {
        GateOp::new(GateType::Cnot, &[control, target], 0.0)
    }

    pub fn toffoli(c1: u32, c2: u32, target: u32) -> GateOp {
        GateOp::new(GateType::Toffoli, &[c1, c2, target], 0.0)
    }

    pub fn cswap(control: u32, a: u32, b: u32) -> GateOp {
        GateOp::new(GateType::Cswap, &[control, a, b], 0.0)
    }

    pub fn qubits(&self) -> &[u32] {
        &self.qubits[..self.gate_type.arity()]
    }

    pub fn with_qubits(mut self, qubits: &[u32]) -> GateOp {
        assert_eq!(qubits.len(), self.gate_type.arity());
        self.qubits[..qubits.len()].copy_from_slice(qubits);
        self
    }

    pub fn max_qubit(&self) -> u32 {
        self.qubits().iter().copied().max().unwrap_or(0)
    }

    pub fn adjoint(&self) -> GateOp {
        GateOp {
            gate_type: self.gate_type.adjoint(),
            param: if self.gate_type.is_parametric() { -self.param } else { 0.0 },
            qubits: self.qubits,
        }
    }

    /// Same gate on the same qubits with equal parameters.
    pub fn same_as(&self, other: &GateOp) -> bool {
        self.gate_type == other.gate_type
            && self.qubits() == other.qubits()
            && (!self.gate_type.is_parametric()
                || angles_equal(self.param, other.param))
    }
}

const FOUR_PI: f64 = 4.0 * PI;

/// Angle tolerance used by cancellation and merge decisions.
pub const ANGLE_EPS: f64 = 1e-12;

/// Reduces an angle into `(-2pi, 2pi]`. Rotations are 4pi-periodic, so this
/// keeps the unitary exact.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(FOUR_PI);
    if t > 2.0 * PI {
        t -= FOUR_PI;
    }
    t
}

pub fn angle_is_zero(theta: f64) -> bool {
    let t = normalize_angle(theta);
    t.abs() <= ANGLE_EPS || (FOUR_PI - t.abs()).abs() <= ANGLE_EPS
}

pub fn angles_equal(a: f64, b: f64) -> bool {
    angle_is_zero(a - b)
}
