use std::collections::{BTreeSet, HashMap};

use crate::error::{Result, StoreError};
use crate::gate::{GateId, GateRecord, GateType, PortRef};

use super::{CircuitTable, GateSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxnId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LogOp {
    Insert(GateId),
    Update(GateId),
    Delete(GateId),
}

/// One step of a [`Rewire`] plan, listed in wire order.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    /// Reuse an existing pattern row. `wires[slot]` names the plan wire the
    /// slot attaches to; `param` optionally overwrites the parameter.
    Keep { id: GateId, wires: Vec<usize>, param: Option<f64> },
    /// Create a fresh row.
    New { gate_type: GateType, param: f64, wires: Vec<usize> },
}

/// Replacement of a convex pattern by a new gate sequence.
///
/// Each plan wire is bounded by the outgoing port of the gate just before the
/// pattern and the incoming port of the gate just after it. Steps are threaded
/// along the wires in order; pattern rows listed in `remove` are deleted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rewire {
    pub wires: Vec<(PortRef, PortRef)>,
    pub remove: Vec<GateId>,
    pub steps: Vec<Step>,
}

impl Rewire {
    /// Rows the plan mutates: pattern rows plus every boundary neighbour.
    pub fn touched(&self) -> Vec<GateId> {
        let mut ids: Vec<GateId> = self
            .wires
            .iter()
            .flat_map(|(a, b)| [a.gate(), b.gate()])
            .chain(self.remove.iter().copied())
            .chain(self.steps.iter().filter_map(|s| match s {
                Step::Keep { id, .. } => Some(*id),
                Step::New { .. } => None,
            }))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// A unit of work against one [`CircuitTable`].
///
/// Locks are try-locks: [`Transaction::lock_gates`] either takes every
/// requested row or none, and never blocks. Writes are buffered and become
/// visible together on [`Transaction::commit`]. Dropping an uncommitted
/// transaction aborts it.
pub struct Transaction<'t> {
    table: &'t CircuitTable,
    id: TxnId,
    held: BTreeSet<GateId>,
    writes: HashMap<GateId, Option<GateRecord>>,
    log: Vec<LogOp>,
    finished: bool,
}

impl<'t> Transaction<'t> {
    pub(super) fn new(table: &'t CircuitTable, id: TxnId) -> Self {
        Transaction {
            table,
            id,
            held: BTreeSet::new(),
            writes: HashMap::new(),
            log: Vec::new(),
            finished: false,
        }
    }

    pub fn id(&self) -> TxnId {
        self.id
    }

    pub fn table(&self) -> &'t CircuitTable {
        self.table
    }

    pub fn holds(&self, id: GateId) -> bool {
        self.held.contains(&id)
    }

    pub fn held_locks(&self) -> impl Iterator<Item = &GateId> {
        self.held.iter()
    }

    pub fn op_count(&self) -> usize {
        self.log.len()
    }

    /// All-or-nothing try-lock over `ids`, in ascending id order.
    ///
    /// Fails with [`StoreError::LockConflict`] if another live transaction
    /// holds any of them, or [`StoreError::NotFound`] if a row no longer
    /// exists. On failure nothing new is held.
    pub fn lock_gates(&mut self, ids: &[GateId]) -> Result<()> {
        let mut wanted: Vec<GateId> = ids.iter().copied().filter(|id| !self.held.contains(id)).collect();
        wanted.sort();
        wanted.dedup();
        if wanted.is_empty() {
            return Ok(());
        }
        {
            let mut locks = self.table.lock_table().lock();
            if let Some(id) = wanted.iter().find(|id| locks.contains_key(id)) {
                return Err(StoreError::LockConflict(*id));
            }
            for id in &wanted {
                locks.insert(*id, self.id);
            }
        }
        let missing = {
            let state = self.table.state().read();
            wanted.iter().copied().find(|id| state.get(*id).is_none())
        };
        if let Some(id) = missing {
            let mut locks = self.table.lock_table().lock();
            for id in &wanted {
                locks.remove(id);
            }
            return Err(StoreError::NotFound(id));
        }
        self.held.extend(wanted);
        Ok(())
    }

    /// Current row as seen by this transaction (own writes first).
    pub fn get(&self, id: GateId) -> Option<GateRecord> {
        match self.writes.get(&id) {
            Some(w) => w.clone(),
            None => self.table.state().read().get(id).cloned(),
        }
    }

    fn require_locked(&self, id: GateId) -> Result<()> {
        if self.held.contains(&id) {
            Ok(())
        } else {
            Err(StoreError::LockNotHeld(id))
        }
    }

    fn fetch(&self, id: GateId) -> Result<GateRecord> {
        self.require_locked(id)?;
        self.get(id).ok_or(StoreError::NotFound(id))
    }

    /// Overwrites an existing locked row.
    pub fn update(&mut self, record: GateRecord) -> Result<()> {
        self.require_locked(record.id)?;
        if self.get(record.id).is_none() {
            return Err(StoreError::NotFound(record.id));
        }
        self.log.push(LogOp::Update(record.id));
        self.writes.insert(record.id, Some(record));
        Ok(())
    }

    /// Points `from`'s outgoing link at `to` and `to`'s incoming link back.
    pub fn link(&mut self, from: PortRef, to: PortRef) -> Result<()> {
        let no_role = |p: PortRef| StoreError::InvalidGate(format!("{p:?} has no such role"));
        let mut a = self.fetch(from.gate())?;
        let sa = a.slot_of(from.postfix()).ok_or_else(|| no_role(from))?;
        if a.next[sa] != Some(to) {
            a.next[sa] = Some(to);
            self.log.push(LogOp::Update(a.id));
            self.writes.insert(a.id, Some(a));
        }
        let mut b = self.fetch(to.gate())?;
        let sb = b.slot_of(to.postfix()).ok_or_else(|| no_role(to))?;
        if b.prev[sb] != Some(from) {
            b.prev[sb] = Some(from);
            self.log.push(LogOp::Update(b.id));
            self.writes.insert(b.id, Some(b));
        }
        Ok(())
    }

    fn create(&mut self, gate_type: GateType, param: f64, switch: bool) -> GateId {
        let id = self.table.allocate_id();
        self.table.lock_table().lock().insert(id, self.id);
        self.held.insert(id);
        let mut record = GateRecord::new(id, gate_type, param);
        record.switch = switch;
        self.log.push(LogOp::Insert(id));
        self.writes.insert(id, Some(record));
        id
    }

    fn check_adjacent(&self, from: PortRef, to: PortRef) -> Result<()> {
        let not_adjacent = || StoreError::NotAdjacent { from: format!("{from:?}"), to: format!("{to:?}") };
        let a = self.fetch(from.gate())?;
        let b = self.fetch(to.gate())?;
        let sa = a.slot_of(from.postfix()).ok_or_else(not_adjacent)?;
        let sb = b.slot_of(to.postfix()).ok_or_else(not_adjacent)?;
        if a.next[sa] == Some(to) && b.prev[sb] == Some(from) {
            Ok(())
        } else {
            Err(not_adjacent())
        }
    }

    /// Splices a new gate into the wires named by `splice_points`, one pair
    /// per slot of the new gate, each pair an adjacent (predecessor port,
    /// successor port).
    pub fn insert_gate(
        &mut self,
        gate_type: GateType,
        param: f64,
        switch: bool,
        splice_points: &[(PortRef, PortRef)],
    ) -> Result<GateId> {
        if splice_points.len() != gate_type.arity() || gate_type.is_boundary() {
            return Err(StoreError::InvalidGate(format!(
                "{gate_type} needs {} splice points, got {}",
                gate_type.arity(),
                splice_points.len()
            )));
        }
        for &(a, b) in splice_points {
            self.check_adjacent(a, b)?;
        }
        let id = self.create(gate_type, param, switch);
        for (slot, &(a, b)) in splice_points.iter().enumerate() {
            let port = PortRef::new(id, gate_type.postfix_of_slot(slot));
            self.link(a, port)?;
            self.link(port, b)?;
        }
        Ok(id)
    }

    /// Removes a gate, joining its predecessor and successor on every wire.
    pub fn delete_gate(&mut self, id: GateId) -> Result<()> {
        let rec = self.fetch(id)?;
        if rec.gate_type.is_boundary() {
            return Err(StoreError::InvalidGate(format!("cannot delete boundary gate {id}")));
        }
        for slot in 0..rec.arity() {
            let p = rec.prev[slot].ok_or_else(|| StoreError::integrity(vec![id], "missing prev"))?;
            let n = rec.next[slot].ok_or_else(|| StoreError::integrity(vec![id], "missing next"))?;
            self.require_locked(p.gate())?;
            self.require_locked(n.gate())?;
        }
        for slot in 0..rec.arity() {
            let p = rec.prev[slot].expect("checked");
            let n = rec.next[slot].expect("checked");
            self.link(p, n)?;
        }
        self.log.push(LogOp::Delete(id));
        self.writes.insert(id, None);
        Ok(())
    }

    /// Applies a [`Rewire`] plan. Every row it touches must be locked.
    pub fn rewire(&mut self, plan: &Rewire) -> Result<Vec<GateId>> {
        for id in plan.touched() {
            self.require_locked(id)?;
        }
        let mut cursor: Vec<PortRef> = plan.wires.iter().map(|w| w.0).collect();
        let mut created = Vec::new();
        for step in &plan.steps {
            let (id, wires) = match step {
                Step::Keep { id, wires, param } => {
                    if let Some(p) = param {
                        let mut rec = self.fetch(*id)?;
                        rec.param = *p;
                        self.update(rec)?;
                    }
                    (*id, wires)
                }
                Step::New { gate_type, param, wires } => {
                    let id = self.create(*gate_type, *param, false);
                    created.push(id);
                    (id, wires)
                }
            };
            let gate_type = self.fetch(id)?.gate_type;
            if wires.len() != gate_type.arity() {
                return Err(StoreError::InvalidGate(format!("{gate_type} step with {} wires", wires.len())));
            }
            for (slot, &w) in wires.iter().enumerate() {
                let port = PortRef::new(id, gate_type.postfix_of_slot(slot));
                let from = *cursor
                    .get(w)
                    .ok_or_else(|| StoreError::InvalidGate(format!("plan wire {w} out of range")))?;
                self.link(from, port)?;
                cursor[w] = port;
            }
        }
        for (w, &(_, exit)) in plan.wires.iter().enumerate() {
            self.link(cursor[w], exit)?;
        }
        for &id in &plan.remove {
            self.require_locked(id)?;
            self.log.push(LogOp::Delete(id));
            self.writes.insert(id, None);
        }
        Ok(created)
    }

    /// Publishes all writes atomically and releases every lock.
    pub fn commit(mut self) -> Result<usize> {
        let writes = std::mem::take(&mut self.writes);
        let n = writes.len();
        if n > 0 {
            let mut state = self.table.state().write();
            for (id, w) in writes {
                match w {
                    Some(rec) => state.put(rec),
                    None => {
                        state.remove(id);
                    }
                }
            }
            state.version += 1;
        }
        self.release();
        Ok(n)
    }

    /// Discards all writes and releases every lock.
    pub fn abort(mut self) {
        self.writes.clear();
        self.release();
    }

    fn release(&mut self) {
        if !self.held.is_empty() {
            let mut locks = self.table.lock_table().lock();
            for id in &self.held {
                locks.remove(id);
            }
        }
        self.held.clear();
        self.log.clear();
        self.finished = true;
    }
}

impl GateSource for Transaction<'_> {
    fn gate(&self, id: GateId) -> Option<GateRecord> {
        self.get(id)
    }
}

impl Drop for Transaction<'_> {
    fn drop(&mut self) {
        if !self.finished {
            self.writes.clear();
            self.release();
        }
    }
}
