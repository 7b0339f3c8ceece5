use std::collections::{HashMap, VecDeque};

use crate::error::{Result, StoreError};
use crate::gate::{GateId, GateOp, GateRecord, GateType, PortRef};

use super::{CircuitTable, GateSource, TableState};

#[derive(Clone, Copy, Debug)]
struct Arrival {
    qubits: [u32; 3],
    arrived: u8,
    layer: u32,
}

/// Qubit-propagating walk over the link structure.
///
/// Every wire carries its qubit number forward from its `In` row; a gate is
/// emitted once all of its wires have reached it. Memory is proportional to
/// the number of wires plus the gates currently waiting for a wire.
#[derive(Clone, Debug)]
pub(crate) struct Walk {
    positions: Vec<Option<PortRef>>,
    layers: Vec<u32>,
    waiting: HashMap<GateId, Arrival>,
    ready: VecDeque<u32>,
    pub(crate) emitted: u64,
}

impl Walk {
    pub(crate) fn start(state: &TableState) -> Result<Walk> {
        let mut positions = Vec::with_capacity(state.wires.len());
        for w in &state.wires {
            let input = state
                .get(w.input)
                .ok_or_else(|| StoreError::integrity(vec![w.input], "missing In row"))?;
            positions.push(Some(input.next[0].ok_or_else(|| {
                StoreError::integrity(vec![w.input], "In row without successor")
            })?));
        }
        let n = positions.len();
        Ok(Walk {
            positions,
            layers: vec![0; n],
            waiting: HashMap::new(),
            ready: (0..n as u32).collect(),
            emitted: 0,
        })
    }

    /// Emits up to `limit` gates through `sink` as `(record, op, layer)`.
    /// Returns `false` once the walk is exhausted.
    pub(crate) fn advance(
        &mut self,
        state: &TableState,
        limit: usize,
        mut sink: impl FnMut(&GateRecord, GateOp, u32),
    ) -> Result<bool> {
        let mut produced = 0usize;
        while produced < limit {
            let Some(q) = self.ready.pop_front() else {
                if !self.waiting.is_empty() {
                    let mut ids: Vec<GateId> = self.waiting.keys().copied().collect();
                    ids.sort();
                    return Err(StoreError::integrity(ids, "gates never reached on all wires"));
                }
                return Ok(false);
            };
            let Some(port) = self.positions[q as usize] else { continue };
            let rec = state
                .get(port.gate())
                .ok_or_else(|| StoreError::integrity(vec![port.gate()], "link to missing gate"))?;
            match rec.gate_type {
                GateType::Out => {
                    self.positions[q as usize] = None;
                    continue;
                }
                GateType::In => {
                    return Err(StoreError::integrity(vec![rec.id], "wire runs into an In row"));
                }
                _ => {}
            }
            let slot = rec
                .slot_of(port.postfix())
                .ok_or_else(|| StoreError::integrity(vec![rec.id], "link role not on gate"))?;
            let arity = rec.arity();
            let entry = self.waiting.entry(rec.id).or_insert(Arrival {
                qubits: [u32::MAX; 3],
                arrived: 0,
                layer: 0,
            });
            if entry.qubits[slot] != u32::MAX {
                return Err(StoreError::integrity(vec![rec.id], "two wires enter the same slot"));
            }
            entry.qubits[slot] = q;
            entry.arrived += 1;
            entry.layer = entry.layer.max(self.layers[q as usize]);
            if entry.arrived as usize == arity {
                let arrival = self.waiting.remove(&rec.id).expect("present");
                let layer = arrival.layer + 1;
                let qubits = &arrival.qubits[..arity];
                let op = GateOp::new(rec.gate_type, qubits, rec.param);
                for (s, &wire) in qubits.iter().enumerate() {
                    let next = rec.next[s]
                        .ok_or_else(|| StoreError::integrity(vec![rec.id], "dangling next link"))?;
                    self.positions[wire as usize] = Some(next);
                    self.layers[wire as usize] = layer;
                    self.ready.push_back(wire);
                }
                sink(rec, op, layer);
                self.emitted += 1;
                produced += 1;
            }
        }
        Ok(true)
    }
}

/// Ordered gate list with qubit assignments, recovered from the links alone.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub num_qubits: usize,
    /// Gates ordered by (layer, lowest qubit): a canonical topological order.
    pub ops: Vec<GateOp>,
}

impl Reconstruction {
    /// Gates touching each qubit, in wire order.
    pub fn per_wire(&self) -> Vec<Vec<GateOp>> {
        let mut wires = vec![Vec::new(); self.num_qubits];
        for op in &self.ops {
            for &q in op.qubits() {
                wires[q as usize].push(*op);
            }
        }
        wires
    }

    pub fn to_table(&self, label: &str) -> Result<CircuitTable> {
        CircuitTable::from_ops(label, self.num_qubits, &self.ops)
    }
}

pub(crate) fn reconstruct_state(state: &TableState) -> Result<(Reconstruction, Vec<GateId>)> {
    let mut walk = Walk::start(state)?;
    let mut layered: Vec<(u32, u32, GateId, GateOp)> = Vec::with_capacity(state.live);
    walk.advance(state, usize::MAX, |rec, op, layer| {
        let low = op.qubits().iter().copied().min().unwrap_or(0);
        layered.push((layer, low, rec.id, op));
    })?;
    let gates = state.live - 2 * state.wires.len();
    if layered.len() != gates {
        let seen: std::collections::HashSet<GateId> = layered.iter().map(|x| x.2).collect();
        let orphans: Vec<GateId> = state
            .iter()
            .filter(|r| !r.gate_type.is_boundary() && !seen.contains(&r.id))
            .map(|r| r.id)
            .collect();
        return Err(StoreError::integrity(orphans, "gates unreachable from any In row"));
    }
    layered.sort_by_key(|x| (x.0, x.1));
    let ids = layered.iter().map(|x| x.2).collect();
    let ops = layered.into_iter().map(|x| x.3).collect();
    Ok((Reconstruction { num_qubits: state.wires.len(), ops }, ids))
}

impl GateSource for TableState {
    fn gate(&self, id: GateId) -> Option<GateRecord> {
        self.get(id).cloned()
    }
}

impl CircuitTable {
    /// Visits every gate (not `In`/`Out`) in a topological order of the
    /// links, under one read latch.
    pub fn for_each_topological(&self, mut f: impl FnMut(&dyn GateSource, &GateRecord, &GateOp)) -> Result<()> {
        let state = self.state().read();
        let mut walk = Walk::start(&state)?;
        walk.advance(&state, usize::MAX, |rec, op, _| f(&*state, rec, &op))?;
        Ok(())
    }

    /// Recovers the circuit: qubit `k` is the wire of the `k`-th `In` row by
    /// id, propagated along the links.
    pub fn reconstruct(&self) -> Result<Reconstruction> {
        reconstruct_state(&self.state().read()).map(|(r, _)| r)
    }

    /// Like [`CircuitTable::reconstruct`], also returning the row id of each op.
    pub fn reconstruct_with_ids(&self) -> Result<(Reconstruction, Vec<GateId>)> {
        reconstruct_state(&self.state().read())
    }
}
