use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Result, StoreError};
use crate::gate::{GateId, GateType};

use super::edges::Edge;
use super::union_find::UnionFind;

/// Upper bounds on a partition; `None` is unbounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PartitionConstraints {
    pub max_gates: Option<u32>,
    pub max_t_gates: Option<u32>,
    pub max_depth: Option<u32>,
}

impl PartitionConstraints {
    pub fn unbounded() -> Self {
        Self::default()
    }

    pub fn new(max_gates: Option<u32>, max_t_gates: Option<u32>, max_depth: Option<u32>) -> Result<Self> {
        if [max_gates, max_t_gates, max_depth].contains(&Some(0)) {
            return Err(StoreError::InvalidGate("partition bounds must be at least 1".into()));
        }
        Ok(PartitionConstraints { max_gates, max_t_gates, max_depth })
    }

    fn allows(&self, gates: u32, t_gates: u32, depth: u32) -> bool {
        self.max_gates.is_none_or(|m| gates <= m)
            && self.max_t_gates.is_none_or(|m| t_gates <= m)
            && self.max_depth.is_none_or(|m| depth <= m)
    }
}

/// One qubit's passage through a partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireCut {
    pub qubit: u32,
    /// Edge entering the partition on this qubit.
    pub entry: Edge,
    /// Edge leaving it.
    pub exit: Edge,
}

/// A convex group of gates.
///
/// Partition ids are a topological order of the partitions: every edge
/// between two partitions runs from the lower id to the higher.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub id: u32,
    pub members: Vec<GateId>,
    /// Interface, ordered by qubit.
    pub wires: Vec<WireCut>,
    pub gates: u32,
    pub t_gates: u32,
    pub depth: u32,
}

#[derive(Debug)]
struct Agg {
    index: u32,
    gates: u32,
    t_gates: u32,
    depth: u32,
    /// Out-edges whose target has not been placed yet.
    pending_out: u32,
    /// Out-edges already known to lead into another partition.
    ext_out: u32,
    members: Vec<GateId>,
    entries: Vec<Edge>,
    exits: Vec<Edge>,
}

impl Agg {
    fn absorb(&mut self, other: Agg) {
        self.index = self.index.max(other.index);
        self.gates += other.gates;
        self.t_gates += other.t_gates;
        self.depth = self.depth.max(other.depth);
        self.pending_out += other.pending_out;
        self.ext_out += other.ext_out;
        append_smaller(&mut self.members, other.members);
        append_smaller(&mut self.entries, other.entries);
        append_smaller(&mut self.exits, other.exits);
    }
}

fn append_smaller<T>(into: &mut Vec<T>, mut from: Vec<T>) {
    if from.len() > into.len() {
        std::mem::swap(into, &mut from);
    }
    into.append(&mut from);
}

#[derive(Clone, Copy, Debug)]
struct Incoming {
    /// Union-find node and longest in-partition chain of the source gate;
    /// `None` when the source is an `In` row.
    source: Option<(u32, u32)>,
    edge: Edge,
}

/// Consumes a topologically ordered edge stream and groups gates into
/// partitions within the configured bounds.
///
/// A gate is placed when its first outgoing edge arrives; by then all of its
/// incoming edges have been seen. It joins the highest-numbered partition
/// among its predecessors, together with any lower predecessor partitions
/// that have no edge into a third partition, as far as the bounds allow;
/// failing that it opens a new partition. A partition closes once every one
/// of its out-edges has reached a placed gate or an `Out` row.
pub struct Partitioner {
    constraints: PartitionConstraints,
    uf: UnionFind<Box<Agg>>,
    incoming: HashMap<GateId, Vec<Incoming>>,
    current: Option<(GateId, u32, u32)>,
    next_index: u32,
    touched: Vec<u32>,
    open: usize,
    peak_open: usize,
    peak_pending: usize,
}

impl Partitioner {
    pub fn new(constraints: PartitionConstraints) -> Self {
        Partitioner {
            constraints,
            uf: UnionFind::new(),
            incoming: HashMap::new(),
            current: None,
            next_index: 0,
            touched: Vec::new(),
            open: 0,
            peak_open: 0,
            peak_pending: 0,
        }
    }

    /// Partitions still accepting gates or waiting on out-edges.
    pub fn open_partitions(&self) -> usize {
        self.open
    }

    pub fn peak_open_partitions(&self) -> usize {
        self.peak_open
    }

    /// Largest number of gates ever waiting for their first out-edge.
    pub fn peak_pending_gates(&self) -> usize {
        self.peak_pending
    }

    pub fn union_find_bytes(&self) -> usize {
        self.uf.heap_bytes()
    }

    /// Feeds one batch; returns every partition closed by it.
    pub fn feed(&mut self, edges: &[Edge]) -> Result<Vec<Partition>> {
        for e in edges {
            self.edge(*e)?;
        }
        self.peak_pending = self.peak_pending.max(self.incoming.len());
        Ok(self.collect_closed())
    }

    /// Ends the stream; every partition must be closed by now.
    pub fn finish(mut self) -> Result<Vec<Partition>> {
        let closed = self.collect_closed();
        if self.open != 0 || !self.incoming.is_empty() {
            let mut ids: Vec<GateId> = self.incoming.keys().copied().collect();
            ids.sort();
            return Err(StoreError::integrity(ids, "edge stream ended with gates still waiting"));
        }
        Ok(closed)
    }

    fn edge(&mut self, e: Edge) -> Result<()> {
        if e.from_type == GateType::In {
            if e.to_type != GateType::Out {
                self.incoming.entry(e.to.gate()).or_default().push(Incoming { source: None, edge: e });
            }
            return Ok(());
        }
        let from = e.from.gate();
        if self.current.map(|c| c.0) != Some(from) {
            self.place(from, e.from_type)?;
        }
        let (_, node, depth) = self.current.expect("placed");
        if e.to_type == GateType::Out {
            let agg = self.uf.aggregate_mut(node).expect("open partition");
            agg.pending_out -= 1;
            agg.exits.push(e);
            let root = self.uf.find(node);
            self.touched.push(root);
        } else {
            self.incoming.entry(e.to.gate()).or_default().push(Incoming { source: Some((node, depth)), edge: e });
        }
        Ok(())
    }

    fn place(&mut self, gate: GateId, gate_type: GateType) -> Result<()> {
        let incoming = self.incoming.remove(&gate).unwrap_or_default();
        if incoming.len() != gate_type.arity() {
            return Err(StoreError::integrity(
                vec![gate],
                format!("{gate_type} placed with {} of {} incoming edges", incoming.len(), gate_type.arity()),
            ));
        }
        let t = gate_type.is_t_like() as u32;
        if !self.constraints.allows(1, t, 1) {
            return Err(StoreError::InvalidGate(format!("{gate_type} {gate} alone exceeds the partition bounds")));
        }

        // predecessor partitions: (root, index, ext_out, depth of the deepest source in it)
        let mut preds: Vec<(u32, u32, u32, u32)> = Vec::new();
        for inc in &incoming {
            let Some((node, d)) = inc.source else { continue };
            let root = self.uf.find(node);
            match preds.iter_mut().find(|p| p.0 == root) {
                Some(p) => p.3 = p.3.max(d),
                None => {
                    let agg = self.uf.aggregate(root).expect("open partition");
                    preds.push((root, agg.index, agg.ext_out, d));
                }
            }
        }
        preds.sort_by_key(|p| std::cmp::Reverse(p.1));

        let mut chosen: Vec<u32> = Vec::new();
        let mut depth = 1;
        if let Some(&(top, _, _, d)) = preds.first() {
            let a = self.uf.aggregate(top).expect("open partition");
            let (mut gates, mut t_gates, mut max_depth) = (a.gates + 1, a.t_gates + t, a.depth);
            let mut chain = d + 1;
            if self.constraints.allows(gates, t_gates, max_depth.max(chain)) {
                chosen.push(top);
                for &(root, _, ext_out, d) in &preds[1..] {
                    if ext_out != 0 {
                        continue;
                    }
                    let a = self.uf.aggregate(root).expect("open partition");
                    let (g2, t2, c2) = (gates + a.gates, t_gates + a.t_gates, chain.max(d + 1));
                    let m2 = max_depth.max(a.depth);
                    if self.constraints.allows(g2, t2, m2.max(c2)) {
                        (gates, t_gates, max_depth, chain) = (g2, t2, m2, c2);
                        chosen.push(root);
                    }
                }
                depth = chain;
            }
        }

        let index = match chosen.first() {
            Some(&top) => self.uf.aggregate(top).expect("open partition").index,
            None => {
                self.next_index += 1;
                self.open += 1;
                self.peak_open = self.peak_open.max(self.open);
                self.next_index - 1
            }
        };
        let node = self.uf.make_set(Box::new(Agg {
            index,
            gates: 1,
            t_gates: t,
            depth,
            pending_out: gate_type.arity() as u32,
            ext_out: 0,
            members: vec![gate],
            entries: Vec::new(),
            exits: Vec::new(),
        }));
        for &root in &chosen {
            self.uf.union_with(node, root, |a, b| a.absorb(*b));
        }
        self.open -= chosen.len().saturating_sub(1);
        let mine = self.uf.find(node);

        for inc in incoming {
            match inc.source {
                None => self.uf.aggregate_mut(mine).expect("open").entries.push(inc.edge),
                Some((src, _)) => {
                    let root = self.uf.find(src);
                    let agg = self.uf.aggregate_mut(root).expect("open partition");
                    agg.pending_out -= 1;
                    if root != mine {
                        agg.ext_out += 1;
                        agg.exits.push(inc.edge);
                        self.uf.aggregate_mut(mine).expect("open").entries.push(inc.edge);
                    }
                    self.touched.push(root);
                }
            }
        }
        self.touched.push(mine);
        self.current = Some((gate, node, depth));
        Ok(())
    }

    fn collect_closed(&mut self) -> Vec<Partition> {
        let mut touched = std::mem::take(&mut self.touched);
        let mut out = Vec::new();
        for node in touched.drain(..) {
            let root = self.uf.find(node);
            let closed = matches!(self.uf.aggregate(root), Some(a) if a.pending_out == 0);
            if !closed {
                continue;
            }
            let agg = self.uf.take_aggregate(root).expect("checked");
            self.open -= 1;
            out.push(finish_partition(*agg));
        }
        self.touched = touched;
        out.sort_by_key(|p| p.id);
        out
    }
}

fn finish_partition(agg: Agg) -> Partition {
    let mut entries = agg.entries;
    let mut exits = agg.exits;
    entries.sort_by_key(|e| e.qubit);
    exits.sort_by_key(|e| e.qubit);
    debug_assert_eq!(entries.len(), exits.len());
    let wires = entries
        .into_iter()
        .zip(exits)
        .map(|(entry, exit)| {
            debug_assert_eq!(entry.qubit, exit.qubit);
            WireCut { qubit: entry.qubit, entry, exit }
        })
        .collect();
    let mut members = agg.members;
    members.sort();
    Partition {
        id: agg.index,
        members,
        wires,
        gates: agg.gates,
        t_gates: agg.t_gates,
        depth: agg.depth,
    }
}

/// Runs a partitioner over batches pulled from `next_batch` until it yields
/// an empty batch. Partitions are returned in id order.
pub fn partition_stream(
    constraints: PartitionConstraints,
    mut next_batch: impl FnMut() -> Result<Vec<Edge>>,
) -> Result<Vec<Partition>> {
    let mut p = Partitioner::new(constraints);
    let mut out = Vec::new();
    loop {
        let batch = next_batch()?;
        if batch.is_empty() {
            break;
        }
        out.extend(p.feed(&batch)?);
    }
    out.extend(p.finish()?);
    out.sort_by_key(|p| p.id);
    Ok(out)
}
