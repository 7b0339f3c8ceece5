//! Streamed partitioning of a circuit into bounded convex subcircuits.

mod edges;
mod extract;
mod stream;
mod union_find;

pub use edges::{build_edge_list, for_each_edge, write_edge_file, Edge, EdgeReader};
pub use extract::{
    depth_of, extract_partition, partition_ops, stitch, t_count, Manifest, ManifestEntry, ManifestWire,
};
pub use stream::{partition_stream, Partition, PartitionConstraints, Partitioner, WireCut};
pub use union_find::UnionFind;

use crate::error::{Result, StoreError};
use crate::store::CircuitTable;

/// Partitions `table` from an in-memory edge list fed `batch_size` edges at
/// a time.
pub fn partition_table(table: &CircuitTable, constraints: PartitionConstraints, batch_size: usize) -> Result<Vec<Partition>> {
    if batch_size == 0 {
        return Err(StoreError::InvalidGate("batch size must be at least 1".into()));
    }
    let edges = build_edge_list(table)?;
    let mut chunks = edges.chunks(batch_size);
    partition_stream(constraints, || Ok(chunks.next().map(<[Edge]>::to_vec).unwrap_or_default()))
}

/// Partitions from a cached edge file.
pub fn partition_edge_file(
    path: &std::path::Path,
    constraints: PartitionConstraints,
    batch_size: usize,
) -> Result<Vec<Partition>> {
    if batch_size == 0 {
        return Err(StoreError::InvalidGate("batch size must be at least 1".into()));
    }
    let mut reader = EdgeReader::open(path)?;
    partition_stream(constraints, || reader.next_batch(batch_size))
}
