//! Batched ingestion and extraction.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Result, StoreError};
use crate::gate::{GateId, GateOp, GateRecord, Postfix, PortRef};

use super::reconstruct::Walk;
use super::CircuitTable;

/// Counts gate records currently held in batch buffers and their high-water mark.
#[derive(Debug, Default)]
pub struct BatchMeter {
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl BatchMeter {
    pub fn new() -> BatchMeter {
        BatchMeter::default()
    }

    pub fn acquire(&self, n: usize) {
        let now = self.live.fetch_add(n, Ordering::SeqCst) + n;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    pub fn release(&self, n: usize) {
        self.live.fetch_sub(n, Ordering::SeqCst);
    }

    pub fn live(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

/// Resumable position of a streaming extraction.
#[derive(Clone, Debug)]
pub struct ExtractCursor {
    walk: Walk,
    version: u64,
    done: bool,
}

impl ExtractCursor {
    pub fn emitted(&self) -> u64 {
        self.walk.emitted
    }

    pub fn is_done(&self) -> bool {
        self.done
    }
}

impl CircuitTable {
    fn validate_op(&self, op: &GateOp, num_qubits: usize) -> Result<()> {
        if op.gate_type.is_boundary() {
            return Err(StoreError::InvalidGate(format!("{} cannot be inserted as a gate", op.gate_type)));
        }
        let qs = op.qubits();
        for (i, &q) in qs.iter().enumerate() {
            if q as usize >= num_qubits {
                return Err(StoreError::QubitOutOfRange { qubit: q, num_qubits });
            }
            if qs[..i].contains(&q) {
                return Err(StoreError::InvalidGate(format!("{} repeats qubit {q}", op.gate_type)));
            }
        }
        Ok(())
    }

    /// Appends `ops` at the end of their wires as one atomic unit.
    ///
    /// Row locks are taken on the affected `Out` rows and their current
    /// predecessors; if a rewrite holds one of them the call backs off and
    /// retries without holding anything.
    pub fn insert_batch(&self, ops: &[GateOp]) -> Result<usize> {
        if ops.is_empty() {
            return Ok(0);
        }
        let wires = self.wires();
        for op in ops {
            self.validate_op(op, wires.len())?;
        }
        let mut touched: Vec<bool> = vec![false; wires.len()];
        for op in ops {
            for &q in op.qubits() {
                touched[q as usize] = true;
            }
        }
        let mut txn;
        let mut attempts = 0u32;
        loop {
            let boundary: Vec<GateId> = {
                let view = self.view();
                wires
                    .iter()
                    .zip(&touched)
                    .filter(|(_, t)| **t)
                    .flat_map(|(w, _)| {
                        let pred = view.get(w.output).and_then(|r| r.prev[0]).map(|p| p.gate());
                        std::iter::once(w.output).chain(pred)
                    })
                    .collect()
            };
            txn = self.begin();
            match txn.lock_gates(&boundary) {
                Ok(()) => break,
                Err(StoreError::LockConflict(_)) | Err(StoreError::NotFound(_)) => {
                    drop(txn);
                    attempts += 1;
                    if attempts % 64 == 0 {
                        std::thread::sleep(std::time::Duration::from_micros(50));
                    } else {
                        std::thread::yield_now();
                    }
                }
                Err(e) => return Err(e),
            }
        }
        {
            let mut state = self.state().write();
            for op in ops {
                let id = self.allocate_id();
                state.put(GateRecord::new(id, op.gate_type, op.param));
                for (slot, &q) in op.qubits().iter().enumerate() {
                    let out = wires[q as usize].output;
                    let pred = state.get(out).and_then(|r| r.prev[0]).expect("Out has a predecessor");
                    let port = PortRef::new(id, op.gate_type.postfix_of_slot(slot));
                    state.link(pred, port);
                    state.link(port, PortRef::new(out, Postfix::Control));
                }
            }
            state.version += 1;
        }
        txn.abort();
        Ok(ops.len())
    }

    /// Inserts a stream of ops in fixed-size batches; only one batch is
    /// buffered at a time.
    pub fn insert_all<I>(&self, ops: I, batch_size: usize, meter: Option<&BatchMeter>) -> Result<usize>
    where
        I: IntoIterator<Item = GateOp>,
    {
        assert!(batch_size >= 1, "batch size must be positive");
        let mut total = 0;
        let mut buf = Vec::with_capacity(batch_size);
        let mut flush = |buf: &mut Vec<GateOp>| -> Result<()> {
            total += self.insert_batch(buf)?;
            if let Some(m) = meter {
                m.release(buf.len());
            }
            buf.clear();
            Ok(())
        };
        for op in ops {
            buf.push(op);
            if let Some(m) = meter {
                m.acquire(1);
            }
            if buf.len() == batch_size {
                flush(&mut buf)?;
            }
        }
        if !buf.is_empty() {
            flush(&mut buf)?;
        }
        Ok(total)
    }

    pub fn extract_cursor(&self) -> Result<ExtractCursor> {
        let state = self.state().read();
        Ok(ExtractCursor { walk: Walk::start(&state)?, version: state.version, done: false })
    }

    /// Next batch of gates in a topological order, resuming at `cursor`.
    /// Returns an empty batch once the circuit is exhausted.
    pub fn extract_batch(&self, cursor: &mut ExtractCursor, batch_size: usize) -> Result<Vec<GateOp>> {
        assert!(batch_size >= 1, "batch size must be positive");
        if cursor.done {
            return Ok(Vec::new());
        }
        let state = self.state().read();
        if state.version != cursor.version {
            return Err(StoreError::Stale);
        }
        let mut out = Vec::with_capacity(batch_size.min(state.live));
        let more = cursor.walk.advance(&state, batch_size, |_, op, _| out.push(op))?;
        if !more || out.len() < batch_size {
            cursor.done = !more || out.is_empty();
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::GateType;

    fn chain(n: usize) -> Vec<GateOp> {
        (0..n)
            .map(|i| match i % 3 {
                0 => GateOp::single(GateType::H, (i % 4) as u32),
                1 => GateOp::cnot((i % 4) as u32, ((i + 1) % 4) as u32),
                _ => GateOp::rotation(GateType::Rz, ((i + 2) % 4) as u32, i as f64 * 0.01),
            })
            .collect()
    }

    #[test]
    fn batch_larger_than_input_is_one_batch() {
        let t = CircuitTable::new("c", 4).unwrap();
        let ops = chain(10);
        let meter = BatchMeter::new();
        assert_eq!(t.insert_all(ops.clone(), 1000, Some(&meter)).unwrap(), 10);
        assert_eq!(meter.peak(), 10);
        assert_eq!(t.gate_count(), 10);
        t.audit().unwrap();
    }

    #[test]
    fn buffered_records_never_exceed_one_batch() {
        let t = CircuitTable::new("c", 4).unwrap();
        let meter = BatchMeter::new();
        t.insert_all(chain(10_000), 1_000, Some(&meter)).unwrap();
        assert_eq!(meter.peak(), 1_000);
        assert_eq!(meter.live(), 0);
    }

    #[test]
    fn cursor_resumes_where_it_stopped() {
        let ops = chain(100);
        let t = CircuitTable::from_ops("c", 4, &ops).unwrap();
        let mut all = Vec::new();
        let mut cursor = t.extract_cursor().unwrap();
        for _ in 0..3 {
            all.push(t.extract_batch(&mut cursor, 10).unwrap());
        }
        assert_eq!(cursor.emitted(), 30);
        let mut resumed = cursor.clone();
        let mut rest = Vec::new();
        loop {
            let b = t.extract_batch(&mut resumed, 10).unwrap();
            if b.is_empty() {
                break;
            }
            rest.push(b);
        }
        assert_eq!(rest.len(), 7);
        // a fresh full pass yields the same 10 batches
        let mut fresh = t.extract_cursor().unwrap();
        let mut whole = Vec::new();
        loop {
            let b = t.extract_batch(&mut fresh, 10).unwrap();
            if b.is_empty() {
                break;
            }
            whole.push(b);
        }
        all.extend(rest);
        assert_eq!(all, whole);
    }

    #[test]
    fn extraction_preserves_per_wire_order() {
        let ops = chain(300);
        let t = CircuitTable::from_ops("c", 4, &ops).unwrap();
        let mut cursor = t.extract_cursor().unwrap();
        let mut got = Vec::new();
        loop {
            let b = t.extract_batch(&mut cursor, 7).unwrap();
            if b.is_empty() {
                break;
            }
            got.extend(b);
        }
        let per_wire = |ops: &[GateOp]| {
            let mut w = vec![Vec::new(); 4];
            for op in ops {
                for &q in op.qubits() {
                    w[q as usize].push(*op);
                }
            }
            w
        };
        assert_eq!(per_wire(&got), per_wire(&ops));
    }

    #[test]
    fn stale_cursor_detected() {
        let t = CircuitTable::from_ops("c", 4, &chain(5)).unwrap();
        let mut cursor = t.extract_cursor().unwrap();
        t.insert_batch(&[GateOp::single(GateType::X, 0)]).unwrap();
        assert!(matches!(t.extract_batch(&mut cursor, 2), Err(StoreError::Stale)));
    }

    #[test]
    fn out_of_range_qubit_rejected() {
        let t = CircuitTable::new("c", 2).unwrap();
        let err = t.insert_batch(&[GateOp::cnot(0, 5)]).unwrap_err();
        assert!(matches!(err, StoreError::QubitOutOfRange { qubit: 5, .. }));
        assert_eq!(t.gate_count(), 0);
    }
}
