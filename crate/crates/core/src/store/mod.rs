//! Transactional gate table.
//!
//! A circuit is a set of [`GateRecord`] rows whose `prev`/`next` columns form
//! a doubly linked structure per wire. Every wire starts at an `In` row and
//! ends at an `Out` row. Rows are addressed by a monotone [`GateId`] that is
//! never reused, which keeps `id mod nproc` sharding stable.
//!
//! Committed state sits behind a short-lived latch. Writers go through
//! [`Transaction`], which takes non-blocking row locks, keeps its writes in a
//! private overlay and publishes them atomically on commit. Readers outside a
//! transaction only ever observe committed state.

mod audit;
mod batch;
mod native;
mod reconstruct;
mod txn;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock, RwLockReadGuard};
use rand::Rng;

use crate::error::{Result, StoreError};
use crate::gate::{GateId, GateOp, GateRecord, GateType, Postfix, PortRef};

pub use audit::AuditReport;
pub use batch::{BatchMeter, ExtractCursor};
pub use native::{
    load_native, load_native_file, read_snapshot, save_native, save_native_file, write_snapshot, NativeReader,
    NATIVE_HEADER,
};
pub use reconstruct::Reconstruction;
pub use txn::{Rewire, Step, Transaction, TxnId};

const NO_POSITION: u32 = u32::MAX;

/// Per-type membership lists with O(1) insert, remove and uniform sampling.
#[derive(Clone, Debug, Default)]
pub(crate) struct TypeIndex {
    members: [Vec<GateId>; GateType::COUNT],
    /// Position of each id inside its type's member list, indexed by id.
    position: Vec<u32>,
}

impl TypeIndex {
    fn insert(&mut self, id: GateId, t: GateType) {
        let slot = id.0 as usize;
        if self.position.len() <= slot {
            self.position.resize(slot + 1, NO_POSITION);
        }
        debug_assert_eq!(self.position[slot], NO_POSITION);
        let list = &mut self.members[t.index()];
        self.position[slot] = list.len() as u32;
        list.push(id);
    }

    fn remove(&mut self, id: GateId, t: GateType) {
        let slot = id.0 as usize;
        let pos = self.position[slot] as usize;
        let list = &mut self.members[t.index()];
        list.swap_remove(pos);
        if let Some(moved) = list.get(pos) {
            self.position[moved.0 as usize] = pos as u32;
        }
        self.position[slot] = NO_POSITION;
    }

    pub(crate) fn of(&self, t: GateType) -> &[GateId] {
        &self.members[t.index()]
    }

    fn contains(&self, id: GateId, t: GateType) -> bool {
        let slot = id.0 as usize;
        self.position
            .get(slot)
            .map(|&p| p != NO_POSITION && self.members[t.index()].get(p as usize) == Some(&id))
            .unwrap_or(false)
    }
}

/// Wire boundary rows, in qubit order (qubit k owns the k-th `In` by id).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireEnds {
    pub input: GateId,
    pub output: GateId,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct TableState {
    pub(crate) rows: Vec<Option<GateRecord>>,
    pub(crate) index: TypeIndex,
    pub(crate) wires: Vec<WireEnds>,
    pub(crate) live: usize,
    pub(crate) version: u64,
}

impl TableState {
    pub(crate) fn get(&self, id: GateId) -> Option<&GateRecord> {
        self.rows.get(id.0 as usize).and_then(Option::as_ref)
    }

    pub(crate) fn get_mut(&mut self, id: GateId) -> Option<&mut GateRecord> {
        self.rows.get_mut(id.0 as usize).and_then(Option::as_mut)
    }

    pub(crate) fn put(&mut self, record: GateRecord) {
        let slot = record.id.0 as usize;
        if self.rows.len() <= slot {
            self.rows.resize(slot + 1, None);
        }
        match self.rows[slot].take() {
            Some(old) if old.gate_type != record.gate_type => {
                self.index.remove(old.id, old.gate_type);
                self.index.insert(record.id, record.gate_type);
            }
            Some(_) => {}
            None => {
                self.index.insert(record.id, record.gate_type);
                self.live += 1;
            }
        }
        self.rows[slot] = Some(record);
    }

    pub(crate) fn remove(&mut self, id: GateId) -> Option<GateRecord> {
        let old = self.rows.get_mut(id.0 as usize)?.take()?;
        self.index.remove(id, old.gate_type);
        self.live -= 1;
        Some(old)
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = &GateRecord> {
        self.rows.iter().flatten()
    }

    /// Sets `from`'s outgoing link and `to`'s incoming link to each other.
    pub(crate) fn link(&mut self, from: PortRef, to: PortRef) {
        let a = self.get_mut(from.gate()).expect("link source exists");
        let slot = a.slot_of(from.postfix()).expect("valid source role");
        a.next[slot] = Some(to);
        let b = self.get_mut(to.gate()).expect("link target exists");
        let slot = b.slot_of(to.postfix()).expect("valid target role");
        b.prev[slot] = Some(from);
    }

    /// Walks each `In` row to its `Out` row and records the wire table.
    pub(crate) fn rebuild_wires(&mut self) -> Result<()> {
        let mut inputs: Vec<GateId> = self.index.of(GateType::In).to_vec();
        inputs.sort();
        let mut wires = Vec::with_capacity(inputs.len());
        let limit = self.live + 1;
        for input in inputs {
            let mut port = self
                .get(input)
                .and_then(|r| r.next[0])
                .ok_or_else(|| StoreError::integrity(vec![input], "In gate without successor"))?;
            let mut steps = 0usize;
            loop {
                let rec = self.get(port.gate()).ok_or_else(|| {
                    StoreError::integrity(vec![port.gate()], "link to missing gate")
                })?;
                if rec.gate_type == GateType::Out {
                    wires.push(WireEnds { input, output: rec.id });
                    break;
                }
                let slot = rec.slot_of(port.postfix()).ok_or_else(|| {
                    StoreError::integrity(vec![rec.id], "link role does not exist on gate")
                })?;
                port = rec.next[slot].ok_or_else(|| {
                    StoreError::integrity(vec![rec.id], "dangling next link")
                })?;
                steps += 1;
                if steps > limit {
                    return Err(StoreError::integrity(vec![input], "wire does not terminate"));
                }
            }
        }
        self.wires = wires;
        Ok(())
    }
}

/// Source of committed or transaction-local rows for pattern matching.
pub trait GateSource {
    fn gate(&self, id: GateId) -> Option<GateRecord>;
}

/// Read-only view of committed state; holds the read latch while alive.
pub struct TableView<'a> {
    state: RwLockReadGuard<'a, TableState>,
}

impl TableView<'_> {
    pub fn get(&self, id: GateId) -> Option<&GateRecord> {
        self.state.get(id)
    }

    pub fn ids_of_type(&self, t: GateType) -> &[GateId] {
        self.state.index.of(t)
    }

    pub fn len(&self) -> usize {
        self.state.live
    }

    pub fn is_empty(&self) -> bool {
        self.state.live == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &GateRecord> {
        self.state.iter()
    }

    pub fn wires(&self) -> &[WireEnds] {
        &self.state.wires
    }

    pub fn version(&self) -> u64 {
        self.state.version
    }

    /// Upper bound (exclusive) of ids ever stored.
    pub fn id_bound(&self) -> u64 {
        self.state.rows.len() as u64
    }
}

impl GateSource for TableView<'_> {
    fn gate(&self, id: GateId) -> Option<GateRecord> {
        self.state.get(id).cloned()
    }
}

/// One circuit: rows, indexes, row locks and id allocation.
pub struct CircuitTable {
    label: String,
    state: RwLock<TableState>,
    locks: Mutex<HashMap<GateId, TxnId>>,
    next_id: AtomicU64,
    next_txn: AtomicU64,
}

pub(crate) fn validate_label(label: &str) -> Result<()> {
    if label.is_empty() || label.contains([',', '\n', '\r']) {
        return Err(StoreError::InvalidLabel(label.to_string()));
    }
    Ok(())
}

impl CircuitTable {
    /// Empty circuit: `num_qubits` `In` rows each linked straight to an `Out` row.
    pub fn new(label: &str, num_qubits: usize) -> Result<CircuitTable> {
        validate_label(label)?;
        if num_qubits == 0 {
            return Err(StoreError::NoQubits);
        }
        let mut state = TableState::default();
        let n = num_qubits as u64;
        for q in 0..n {
            let input = GateId(q);
            let output = GateId(n + q);
            let mut rin = GateRecord::new(input, GateType::In, 0.0);
            let mut rout = GateRecord::new(output, GateType::Out, 0.0);
            rin.next[0] = Some(PortRef::new(output, Postfix::Control));
            rout.prev[0] = Some(PortRef::new(input, Postfix::Control));
            state.put(rin);
            state.put(rout);
            state.wires.push(WireEnds { input, output });
        }
        Ok(CircuitTable::from_state(label.to_string(), state))
    }

    /// Circuit on `num_qubits` wires holding `ops` in order.
    pub fn from_ops(label: &str, num_qubits: usize, ops: &[GateOp]) -> Result<CircuitTable> {
        let table = CircuitTable::new(label, num_qubits)?;
        table.insert_batch(ops)?;
        Ok(table)
    }

    pub(crate) fn from_state(label: String, state: TableState) -> CircuitTable {
        let next = state.rows.len() as u64;
        CircuitTable {
            label,
            state: RwLock::new(state),
            locks: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(next),
            next_txn: AtomicU64::new(1),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn num_qubits(&self) -> usize {
        self.state.read().wires.len()
    }

    /// Number of live rows, including `In`/`Out`.
    pub fn len(&self) -> usize {
        self.state.read().live
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of live non-boundary gates.
    pub fn gate_count(&self) -> usize {
        let s = self.state.read();
        s.live - 2 * s.wires.len()
    }

    pub fn count_of(&self, t: GateType) -> usize {
        self.state.read().index.of(t).len()
    }

    pub fn counts_by_type(&self) -> [usize; GateType::COUNT] {
        let s = self.state.read();
        let mut out = [0; GateType::COUNT];
        for t in GateType::ALL {
            out[t.index()] = s.index.of(t).len();
        }
        out
    }

    pub fn version(&self) -> u64 {
        self.state.read().version
    }

    pub fn view(&self) -> TableView<'_> {
        TableView { state: self.state.read() }
    }

    pub fn select_by_id(&self, id: GateId) -> Option<GateRecord> {
        self.state.read().get(id).cloned()
    }

    /// Uniformly random committed row of type `t`.
    pub fn select_random_by_type<R: Rng + ?Sized>(&self, t: GateType, rng: &mut R) -> Option<GateRecord> {
        let s = self.state.read();
        let list = s.index.of(t);
        if list.is_empty() {
            return None;
        }
        let id = list[rng.gen_range(0..list.len())];
        s.get(id).cloned()
    }

    pub fn ids_of_type(&self, t: GateType) -> Vec<GateId> {
        self.state.read().index.of(t).to_vec()
    }

    pub fn wires(&self) -> Vec<WireEnds> {
        self.state.read().wires.clone()
    }

    pub fn begin(&self) -> Transaction<'_> {
        let id = TxnId(self.next_txn.fetch_add(1, Ordering::Relaxed));
        Transaction::new(self, id)
    }

    pub(crate) fn allocate_id(&self) -> GateId {
        GateId(self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    /// Deep copy of the committed state under a new label.
    pub fn duplicate(&self, label: &str) -> Result<CircuitTable> {
        validate_label(label)?;
        let state = self.state.read().clone();
        let copy = CircuitTable::from_state(label.to_string(), state);
        copy.next_id.store(self.next_id.load(Ordering::Relaxed), Ordering::Relaxed);
        Ok(copy)
    }

    pub(crate) fn state(&self) -> &RwLock<TableState> {
        &self.state
    }

    pub(crate) fn lock_table(&self) -> &Mutex<HashMap<GateId, TxnId>> {
        &self.locks
    }
}

/// In-process collection of circuit tables keyed by label, optionally backed
/// by a snapshot directory.
#[derive(Default)]
pub struct Database {
    tables: RwLock<HashMap<String, Arc<CircuitTable>>>,
    dir: Option<PathBuf>,
}

impl Database {
    pub fn in_memory() -> Database {
        Database::default()
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Database> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Database { tables: RwLock::new(HashMap::new()), dir: Some(dir) })
    }

    fn snapshot_path(&self, label: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{label}.snap")))
    }

    fn exists_on_disk(&self, label: &str) -> bool {
        self.snapshot_path(label).map(|p| p.exists()).unwrap_or(false)
    }

    pub fn create_circuit(&self, label: &str, num_qubits: usize) -> Result<Arc<CircuitTable>> {
        let table = CircuitTable::new(label, num_qubits)?;
        self.insert(table)
    }

    /// Registers an existing table; fails if the label is taken.
    pub fn insert(&self, table: CircuitTable) -> Result<Arc<CircuitTable>> {
        let mut tables = self.tables.write();
        if tables.contains_key(table.label()) || self.exists_on_disk(table.label()) {
            return Err(StoreError::DuplicateLabel(table.label().to_string()));
        }
        let table = Arc::new(table);
        tables.insert(table.label().to_string(), table.clone());
        Ok(table)
    }

    pub fn get(&self, label: &str) -> Result<Arc<CircuitTable>> {
        if let Some(t) = self.tables.read().get(label) {
            return Ok(t.clone());
        }
        let path = self
            .snapshot_path(label)
            .filter(|p| p.exists())
            .ok_or_else(|| StoreError::UnknownLabel(label.to_string()))?;
        let table = Arc::new(native::load_snapshot_file(&path)?);
        self.tables.write().insert(label.to_string(), table.clone());
        Ok(table)
    }

    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.tables.read().keys().cloned().collect();
        labels.sort();
        labels
    }

    /// Writes the table's snapshot into the backing directory, if any.
    pub fn persist(&self, label: &str) -> Result<Option<PathBuf>> {
        let Some(path) = self.snapshot_path(label) else {
            return Ok(None);
        };
        let table = self.get(label)?;
        native::save_snapshot_file(&table, &path)?;
        Ok(Some(path))
    }

    pub fn drop_circuit(&self, label: &str) -> Result<()> {
        self.tables.write().remove(label);
        if let Some(path) = self.snapshot_path(label).filter(|p| p.exists()) {
            std::fs::remove_file(path)?;
        }
        Ok(())
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_circuit_links_in_to_out() {
        let t = CircuitTable::new("c", 3).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.count_of(GateType::In), 3);
        assert_eq!(t.count_of(GateType::Out), 3);
        for (k, w) in t.wires().iter().enumerate() {
            let input = t.select_by_id(w.input).unwrap();
            assert_eq!(input.next[0], Some(PortRef::new(w.output, Postfix::Control)), "wire {k}");
            assert_eq!(input.prev[0], None);
            let output = t.select_by_id(w.output).unwrap();
            assert_eq!(output.next[0], None);
        }
        t.audit().unwrap();
    }

    #[test]
    fn single_wire_circuit() {
        let t = CircuitTable::new("c", 1).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn zero_qubits_rejected() {
        assert!(matches!(CircuitTable::new("c", 0), Err(StoreError::NoQubits)));
    }

    #[test]
    fn duplicate_label_rejected() {
        let db = Database::in_memory();
        db.create_circuit("c", 2).unwrap();
        assert!(matches!(db.create_circuit("c", 2), Err(StoreError::DuplicateLabel(_))));
    }

    #[test]
    fn select_absent_and_deleted() {
        let t = CircuitTable::from_ops("c", 1, &[GateOp::single(GateType::H, 0)]).unwrap();
        assert!(t.select_by_id(GateId(999)).is_none());
        let h = t.ids_of_type(GateType::H)[0];
        let mut txn = t.begin();
        let rec = txn.get(h).unwrap();
        txn.lock_gates(&[h, rec.prev[0].unwrap().gate(), rec.next[0].unwrap().gate()]).unwrap();
        txn.delete_gate(h).unwrap();
        txn.commit().unwrap();
        assert!(t.select_by_id(h).is_none());
    }

    #[test]
    fn random_select_single_and_empty() {
        let t = CircuitTable::from_ops("c", 1, &[GateOp::single(GateType::H, 0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(t.select_random_by_type(GateType::H, &mut rng).unwrap().gate_type, GateType::H);
        }
        assert!(t.select_random_by_type(GateType::T, &mut rng).is_none());
    }

    #[test]
    fn random_select_is_deterministic_per_seed() {
        let ops: Vec<_> = (0..20).map(|_| GateOp::cnot(0, 1)).collect();
        let t = CircuitTable::from_ops("c", 2, &ops).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5).map(|_| t.select_random_by_type(GateType::Cnot, &mut rng).unwrap().id).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
    }

    #[test]
    fn type_index_swap_remove_keeps_positions() {
        let mut idx = TypeIndex::default();
        for i in 0..5 {
            idx.insert(GateId(i), GateType::H);
        }
        idx.remove(GateId(1), GateType::H);
        assert!(!idx.contains(GateId(1), GateType::H));
        for i in [0, 2, 3, 4] {
            assert!(idx.contains(GateId(i), GateType::H));
        }
        assert_eq!(idx.of(GateType::H).len(), 4);
    }
}
