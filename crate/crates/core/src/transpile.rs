//! Streamed decomposition: a producer thread expands high-level gates in
//! batches while the caller's thread inserts the previous batch.

use std::sync::mpsc::sync_channel;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Result, StoreError};
use crate::gate::{GateOp, GateType};
use crate::store::{BatchMeter, CircuitTable};
use crate::templates::clifford_t_expansion;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// H, X, Z, S, Sdg, T, Tdg and CNOT only.
    CliffordT,
    /// Clifford+T plus Rx and Rz rotations.
    CliffordRz,
}

impl Target {
    pub fn parse(s: &str) -> Option<Target> {
        match s {
            "clifford-t" => Some(Target::CliffordT),
            "clifford-rz" => Some(Target::CliffordRz),
            _ => None,
        }
    }

    fn admits(self, t: GateType) -> bool {
        match t {
            GateType::Rx | GateType::Rz => self == Target::CliffordRz,
            GateType::Toffoli | GateType::Cswap | GateType::In | GateType::Out => false,
            _ => true,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TranspileConfig {
    pub target: Target,
    /// Output gates per inserted batch.
    pub batch_size: usize,
    /// Extra sleep per decomposed batch, as a multiple of the time the
    /// decomposition itself took.
    pub slowdown: u32,
}

impl TranspileConfig {
    pub fn new(target: Target, batch_size: usize) -> Self {
        TranspileConfig { target, batch_size, slowdown: 0 }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TranspileStats {
    pub gates_in: u64,
    pub gates_out: u64,
    pub batches: u64,
    #[serde(serialize_with = "crate::executor::secs")]
    pub elapsed: Duration,
    /// Producer time, including any slowdown.
    #[serde(serialize_with = "crate::executor::secs")]
    pub decompose: Duration,
    #[serde(serialize_with = "crate::executor::secs")]
    pub insert: Duration,
    pub gates_per_second: f64,
    /// Most gate records buffered at once across both threads.
    pub peak_buffered: usize,
}

/// Expands one op into `out` for `target`.
pub fn decompose(op: &GateOp, target: Target, out: &mut Vec<GateOp>) -> Result<()> {
    if let Some(net) = clifford_t_expansion(op) {
        out.extend(net);
    } else if target.admits(op.gate_type) {
        out.push(*op);
    } else {
        return Err(StoreError::InvalidGate(format!(
            "{} cannot be lowered to {target:?} without rotation synthesis",
            op.gate_type
        )));
    }
    Ok(())
}

/// Decomposes `source` for `cfg.target` and appends the result to `table`.
///
/// Batches travel over a rendezvous channel, so at most one batch is being
/// decomposed while another is being inserted.
pub fn transpile_stream<I>(table: &CircuitTable, source: I, cfg: &TranspileConfig) -> Result<TranspileStats>
where
    I: IntoIterator<Item = Result<GateOp>>,
    I::IntoIter: Send,
{
    if cfg.batch_size == 0 {
        return Err(StoreError::InvalidGate("batch size must be at least 1".into()));
    }
    let meter = BatchMeter::new();
    let start = Instant::now();
    let (tx, rx) = sync_channel::<Vec<GateOp>>(0);
    let source = source.into_iter();
    let (produced, inserted) = std::thread::scope(|s| {
        let meter = &meter;
        let producer = s.spawn(move || -> Result<(u64, Duration)> {
            let mut gates_in = 0u64;
            let mut busy = Duration::ZERO;
            let mut source = source;
            loop {
                let t0 = Instant::now();
                let mut batch = Vec::with_capacity(cfg.batch_size + 15);
                let mut end = false;
                while batch.len() < cfg.batch_size {
                    match source.next() {
                        Some(op) => {
                            let before = batch.len();
                            decompose(&op?, cfg.target, &mut batch)?;
                            meter.acquire(batch.len() - before);
                            gates_in += 1;
                        }
                        None => {
                            end = true;
                            break;
                        }
                    }
                }
                let took = t0.elapsed();
                if cfg.slowdown > 0 {
                    std::thread::sleep(took * cfg.slowdown);
                }
                busy += t0.elapsed();
                if !batch.is_empty() && tx.send(batch).is_err() {
                    break;
                }
                if end {
                    break;
                }
            }
            Ok((gates_in, busy))
        });
        let mut inserted = Ok((0u64, 0u64, Duration::ZERO));
        let mut out = 0u64;
        let mut batches = 0u64;
        let mut busy = Duration::ZERO;
        for batch in rx.iter() {
            let t0 = Instant::now();
            match table.insert_batch(&batch) {
                Ok(n) => {
                    out += n as u64;
                    batches += 1;
                    meter.release(batch.len());
                    busy += t0.elapsed();
                }
                Err(e) => {
                    inserted = Err(e);
                    break;
                }
            }
        }
        drop(rx);
        if inserted.is_ok() {
            inserted = Ok((out, batches, busy));
        }
        (producer.join().expect("producer panicked"), inserted)
    });
    let (gates_in, decompose) = produced?;
    let (gates_out, batches, insert) = inserted?;
    let elapsed = start.elapsed();
    Ok(TranspileStats {
        gates_in,
        gates_out,
        batches,
        elapsed,
        decompose,
        insert,
        gates_per_second: gates_out as f64 / elapsed.as_secs_f64().max(1e-9),
        peak_buffered: meter.peak(),
    })
}
