use std::collections::VecDeque;

use crate::error::{Result, StoreError};
use crate::gate::{GateId, GateType};

use super::{CircuitTable, TableState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuditReport {
    pub rows: usize,
    pub gates: usize,
    pub qubits: usize,
}

struct Findings {
    ids: Vec<GateId>,
    messages: Vec<String>,
}

impl Findings {
    fn add(&mut self, id: GateId, msg: String) {
        if self.messages.len() < 16 {
            self.messages.push(msg);
        }
        self.ids.push(id);
    }
}

impl CircuitTable {
    /// Full consistency check of committed state: slot nullity, In/Out
    /// boundary rules, bidirectional links, index mirror, wire counts and
    /// acyclicity.
    pub fn audit(&self) -> Result<AuditReport> {
        audit_state(&self.state().read())
    }
}

pub(crate) fn audit_state(state: &TableState) -> Result<AuditReport> {
    let mut f = Findings { ids: Vec::new(), messages: Vec::new() };
    let mut inputs = 0usize;
    let mut outputs = 0usize;

    for rec in state.iter() {
        let arity = rec.arity();
        for slot in arity..3 {
            if rec.prev[slot].is_some() || rec.next[slot].is_some() {
                f.add(rec.id, format!("{} uses slot {slot} beyond arity {arity}", rec.id));
            }
        }
        match rec.gate_type {
            GateType::In => {
                inputs += 1;
                if rec.prev[0].is_some() || rec.next[0].is_none() {
                    f.add(rec.id, format!("In {} must have only a next link", rec.id));
                }
            }
            GateType::Out => {
                outputs += 1;
                if rec.next[0].is_some() || rec.prev[0].is_none() {
                    f.add(rec.id, format!("Out {} must have only a prev link", rec.id));
                }
            }
            _ => {
                for slot in 0..arity {
                    if rec.prev[slot].is_none() || rec.next[slot].is_none() {
                        f.add(rec.id, format!("{} {} has a null link in slot {slot}", rec.gate_type, rec.id));
                    }
                }
            }
        }
        for slot in 0..arity {
            let own = rec.port(slot);
            if let Some(to) = rec.next[slot] {
                let back = state
                    .get(to.gate())
                    .and_then(|b| b.slot_of(to.postfix()).map(|s| b.prev[s]));
                if back != Some(Some(own)) {
                    f.add(rec.id, format!("{}.next[{slot}] -> {to:?} is not mirrored", rec.id));
                }
            }
            if let Some(from) = rec.prev[slot] {
                let back = state
                    .get(from.gate())
                    .and_then(|a| a.slot_of(from.postfix()).map(|s| a.next[s]));
                if back != Some(Some(own)) {
                    f.add(rec.id, format!("{}.prev[{slot}] -> {from:?} is not mirrored", rec.id));
                }
            }
        }
        if !state.index.contains(rec.id, rec.gate_type) {
            f.add(rec.id, format!("{} missing from the {} index", rec.id, rec.gate_type));
        }
    }

    let indexed: usize = GateType::ALL.iter().map(|t| state.index.of(*t).len()).sum();
    if indexed != state.live {
        f.messages.push(format!("index holds {indexed} ids for {} rows", state.live));
    }
    if inputs != outputs || inputs != state.wires.len() {
        f.messages.push(format!(
            "{inputs} In rows, {outputs} Out rows, {} wires",
            state.wires.len()
        ));
    }

    if f.messages.is_empty() {
        // Kahn over the whole table; anything left over sits on a cycle or is
        // unreachable from an In row.
        let bound = state.rows.len();
        let mut indegree = vec![0u8; bound];
        let mut queue = VecDeque::new();
        for rec in state.iter() {
            let d = rec.prev.iter().flatten().count() as u8;
            indegree[rec.id.0 as usize] = d;
            if d == 0 {
                queue.push_back(rec.id);
            }
        }
        let mut visited = 0usize;
        while let Some(id) = queue.pop_front() {
            visited += 1;
            let rec = state.get(id).expect("live row");
            for to in rec.next.iter().flatten() {
                let d = &mut indegree[to.gate().0 as usize];
                *d -= 1;
                if *d == 0 {
                    queue.push_back(to.gate());
                }
            }
        }
        if visited != state.live {
            for rec in state.iter() {
                if indegree[rec.id.0 as usize] != 0 {
                    f.add(rec.id, format!("{} is on a cycle or unreachable", rec.id));
                }
            }
        }
    }

    if f.messages.is_empty() {
        Ok(AuditReport {
            rows: state.live,
            gates: state.live - inputs - outputs,
            qubits: inputs,
        })
    } else {
        f.ids.sort();
        f.ids.dedup();
        Err(StoreError::Integrity { ids: f.ids, message: f.messages.join("; ") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::{GateOp, Postfix, PortRef};

    #[test]
    fn detects_one_sided_link() {
        let t = CircuitTable::from_ops("c", 1, &[GateOp::single(GateType::H, 0)]).unwrap();
        let h = t.ids_of_type(GateType::H)[0];
        let wire = t.wires()[0];
        let out = wire.output;
        t.state().write().get_mut(out).unwrap().prev[0] = Some(PortRef::new(wire.input, Postfix::Control));
        let err = t.audit().unwrap_err();
        match err {
            StoreError::Integrity { ids, .. } => assert!(ids.contains(&h) || ids.contains(&out)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn detects_extra_slot() {
        let t = CircuitTable::from_ops("c", 1, &[GateOp::single(GateType::H, 0)]).unwrap();
        let h = t.ids_of_type(GateType::H)[0];
        t.state().write().get_mut(h).unwrap().next[2] = Some(PortRef::new(h, Postfix::Control));
        assert!(t.audit().is_err());
    }
}
