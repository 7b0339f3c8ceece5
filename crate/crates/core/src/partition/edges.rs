use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, StoreError};
use crate::gate::{GateType, PortRef};
use crate::store::CircuitTable;

/// One wire segment between two rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: PortRef,
    pub to: PortRef,
    /// Qubit the segment belongs to.
    pub qubit: u32,
    pub from_type: GateType,
    pub to_type: GateType,
}

const EDGE_BYTES: usize = 8 + 8 + 4 + 1 + 1;

impl Edge {
    fn encode(&self, buf: &mut [u8; EDGE_BYTES]) {
        buf[0..8].copy_from_slice(&self.from.encode().to_le_bytes());
        buf[8..16].copy_from_slice(&self.to.encode().to_le_bytes());
        buf[16..20].copy_from_slice(&self.qubit.to_le_bytes());
        buf[20] = self.from_type.index() as u8;
        buf[21] = self.to_type.index() as u8;
    }

    fn decode(buf: &[u8; EDGE_BYTES]) -> Option<Edge> {
        let u64_at = |i: usize| u64::from_le_bytes(buf[i..i + 8].try_into().expect("8 bytes"));
        Some(Edge {
            from: PortRef::decode(u64_at(0))?,
            to: PortRef::decode(u64_at(8))?,
            qubit: u32::from_le_bytes(buf[16..20].try_into().expect("4 bytes")),
            from_type: *GateType::ALL.get(buf[20] as usize)?,
            to_type: *GateType::ALL.get(buf[21] as usize)?,
        })
    }
}

/// Streams every edge of `table` to `sink`, ordered by the topological
/// position of the source row: `In` rows first, then gates in the order a
/// link walk reaches them. Edges leaving one row are contiguous.
pub fn for_each_edge(table: &CircuitTable, mut sink: impl FnMut(Edge) -> Result<()>) -> Result<()> {
    let view = table.view();
    for (q, w) in view.wires().iter().enumerate() {
        let input = view.get(w.input).expect("wire input exists");
        let to = input.next[0].ok_or_else(|| StoreError::integrity(vec![w.input], "In row without successor"))?;
        let to_type = view.get(to.gate()).map(|r| r.gate_type).ok_or(StoreError::NotFound(to.gate()))?;
        sink(Edge { from: input.port(0), to, qubit: q as u32, from_type: GateType::In, to_type })?;
    }
    drop(view);
    let mut failure = None;
    table.for_each_topological(|src, rec, op| {
        for (slot, &qubit) in op.qubits().iter().enumerate() {
            if failure.is_some() {
                return;
            }
            let Some(to) = rec.next[slot] else { continue };
            let edge = src.gate(to.gate()).ok_or(StoreError::NotFound(to.gate())).and_then(|target| {
                sink(Edge { from: rec.port(slot), to, qubit, from_type: rec.gate_type, to_type: target.gate_type })
            });
            if let Err(e) = edge {
                failure = Some(e);
            }
        }
    })?;
    failure.map_or(Ok(()), Err)
}

/// Topologically ordered edge list of the whole table.
pub fn build_edge_list(table: &CircuitTable) -> Result<Vec<Edge>> {
    let mut edges = Vec::with_capacity(table.len());
    for_each_edge(table, |e| {
        edges.push(e);
        Ok(())
    })?;
    Ok(edges)
}

/// Writes the edge list to `path`; returns the number of edges.
pub fn write_edge_file(table: &CircuitTable, path: &Path) -> Result<u64> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut n = 0u64;
    let mut buf = [0u8; EDGE_BYTES];
    for_each_edge(table, |e| {
        e.encode(&mut buf);
        w.write_all(&buf)?;
        n += 1;
        Ok(())
    })?;
    w.flush()?;
    Ok(n)
}

/// Reads a cached edge list in batches.
pub struct EdgeReader<R: Read> {
    input: R,
    read: u64,
}

impl EdgeReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(EdgeReader { input: BufReader::new(File::open(path)?), read: 0 })
    }
}

impl<R: Read> EdgeReader<R> {
    pub fn new(input: R) -> Self {
        EdgeReader { input, read: 0 }
    }

    /// Up to `batch_size` edges; empty at end of input.
    pub fn next_batch(&mut self, batch_size: usize) -> Result<Vec<Edge>> {
        let mut out = Vec::with_capacity(batch_size.min(1 << 20));
        let mut buf = [0u8; EDGE_BYTES];
        while out.len() < batch_size {
            match self.input.read_exact(&mut buf) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            self.read += 1;
            let edge = Edge::decode(&buf).ok_or_else(|| StoreError::Format {
                line: self.read as usize,
                message: "corrupt edge record".into(),
            })?;
            out.push(edge);
        }
        Ok(out)
    }
}
