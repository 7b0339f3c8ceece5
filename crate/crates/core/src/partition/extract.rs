use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Result, StoreError};
use crate::gate::{GateId, GateOp, PortRef};
use crate::store::{CircuitTable, TableView};

use super::stream::{Partition, PartitionConstraints};

fn check_fresh(view: &TableView<'_>, part: &Partition) -> Result<()> {
    for &id in &part.members {
        match view.get(id) {
            Some(r) if !r.gate_type.is_boundary() => {}
            _ => return Err(StoreError::Stale),
        }
    }
    for w in &part.wires {
        for e in [w.entry, w.exit] {
            let linked = view
                .get(e.to.gate())
                .and_then(|r| r.slot_of(e.to.postfix()).map(|s| r.prev[s]))
                .flatten();
            if linked != Some(e.from) {
                return Err(StoreError::Stale);
            }
        }
    }
    Ok(())
}

/// Gates of `part` in topological order, on local qubits `0..wires.len()`
/// numbered in interface order.
pub fn partition_ops(table: &CircuitTable, part: &Partition) -> Result<Vec<GateOp>> {
    let view = table.view();
    check_fresh(&view, part)?;
    let members: HashSet<GateId> = part.members.iter().copied().collect();
    let mut positions: Vec<Option<PortRef>> = part.wires.iter().map(|w| Some(w.entry.to)).collect();
    let mut ready: VecDeque<usize> = (0..positions.len()).collect();
    let mut waiting: HashMap<GateId, [u32; 3]> = HashMap::new();
    let mut ops = Vec::with_capacity(part.members.len());
    while let Some(q) = ready.pop_front() {
        let Some(port) = positions[q] else { continue };
        if !members.contains(&port.gate()) {
            positions[q] = None;
            continue;
        }
        let rec = view.get(port.gate()).ok_or(StoreError::Stale)?;
        let slot = rec.slot_of(port.postfix()).ok_or(StoreError::Stale)?;
        let arrived = waiting.entry(rec.id).or_insert([u32::MAX; 3]);
        arrived[slot] = q as u32;
        let arity = rec.arity();
        if arrived[..arity].iter().all(|&a| a != u32::MAX) {
            let qubits = waiting.remove(&rec.id).expect("present");
            ops.push(GateOp::new(rec.gate_type, &qubits[..arity], rec.param));
            for (s, &local) in qubits[..arity].iter().enumerate() {
                positions[local as usize] = rec.next[s];
                ready.push_back(local as usize);
            }
        }
    }
    if ops.len() != part.members.len() || !waiting.is_empty() {
        return Err(StoreError::integrity(part.members.clone(), "partition is not closed under its interface"));
    }
    Ok(ops)
}

/// Copies a partition into a standalone circuit with one fresh `In`/`Out`
/// pair per interface wire.
pub fn extract_partition(table: &CircuitTable, part: &Partition, label: &str) -> Result<CircuitTable> {
    let ops = partition_ops(table, part)?;
    CircuitTable::from_ops(label, part.wires.len(), &ops)
}

/// Reassembles extracted partitions, given in id order with their interface
/// qubits, into one circuit on `num_qubits` wires.
pub fn stitch<'a>(
    label: &str,
    num_qubits: usize,
    parts: impl IntoIterator<Item = (&'a [u32], &'a CircuitTable)>,
) -> Result<CircuitTable> {
    let mut ops = Vec::new();
    for (qubits, circuit) in parts {
        if circuit.num_qubits() != qubits.len() {
            return Err(StoreError::InvalidGate(format!(
                "partition `{}` has {} wires but {} interface qubits",
                circuit.label(),
                circuit.num_qubits(),
                qubits.len()
            )));
        }
        for op in circuit.reconstruct()?.ops {
            let global: Vec<u32> = op.qubits().iter().map(|&l| qubits[l as usize]).collect();
            ops.push(op.with_qubits(&global));
        }
    }
    CircuitTable::from_ops(label, num_qubits, &ops)
}

/// Interface wire as written to a manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestWire {
    pub qubit: u32,
    pub entry_from: u64,
    pub exit_to: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u32,
    pub file: String,
    pub gates: u32,
    pub t_gates: u32,
    pub depth: u32,
    pub wires: Vec<ManifestWire>,
}

impl ManifestEntry {
    pub fn new(part: &Partition, file: impl Into<String>) -> Self {
        ManifestEntry {
            id: part.id,
            file: file.into(),
            gates: part.gates,
            t_gates: part.t_gates,
            depth: part.depth,
            wires: part
                .wires
                .iter()
                .map(|w| ManifestWire { qubit: w.qubit, entry_from: w.entry.from.gate().0, exit_to: w.exit.to.gate().0 })
                .collect(),
        }
    }

    pub fn qubits(&self) -> Vec<u32> {
        self.wires.iter().map(|w| w.qubit).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub label: String,
    pub num_qubits: usize,
    pub max_gates: Option<u32>,
    pub max_t_gates: Option<u32>,
    pub max_depth: Option<u32>,
    pub partitions: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(label: &str, num_qubits: usize, constraints: PartitionConstraints) -> Self {
        Manifest {
            label: label.to_string(),
            num_qubits,
            max_gates: constraints.max_gates,
            max_t_gates: constraints.max_t_gates,
            max_depth: constraints.max_depth,
            partitions: Vec::new(),
        }
    }
}

/// Number of T-like gates among `ops`.
pub fn t_count(ops: &[GateOp]) -> usize {
    ops.iter().filter(|op| op.gate_type.is_t_like()).count()
}

/// Longest gate chain among `ops` listed in topological order.
pub fn depth_of(ops: &[GateOp]) -> u32 {
    let mut level: HashMap<u32, u32> = HashMap::new();
    let mut depth = 0;
    for op in ops {
        if op.gate_type.is_boundary() {
            continue;
        }
        let d = op.qubits().iter().map(|q| level.get(q).copied().unwrap_or(0)).max().unwrap_or(0) + 1;
        for &q in op.qubits() {
            level.insert(q, d);
        }
        depth = depth.max(d);
    }
    depth
}
