//! Tabular text format and binary snapshots.
//!
//! Text rows follow the column layout
//! `id,prev_q1,prev_q2,prev_q3,type,param,switch,next_q1,next_q2,next_q3,label`.
//! Links are written as `gate_id * 3 + postfix`, a missing link as an empty
//! field. Rows are emitted in id order so a load/save cycle is byte-exact.
//!
//! Snapshot layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "QRWSNAP1"
//! label_len    u32
//! label        label_len bytes, UTF-8
//! next_id      u64
//! count        u64
//! count x {
//!     len      u32      (always 66)
//!     id       u64
//!     type     u8       (GateType index)
//!     param    f64
//!     switch   u8
//!     prev     3 x u64  (link code, u64::MAX when absent)
//!     next     3 x u64
//! }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::Ordering;

use crate::error::{Result, StoreError};
use crate::gate::{GateId, GateRecord, GateType, PortRef};

use super::audit::audit_state;
use super::{validate_label, CircuitTable, TableState};

pub const NATIVE_HEADER: &str = "id,prev_q1,prev_q2,prev_q3,type,param,switch,next_q1,next_q2,next_q3,label";

const COLUMNS: usize = 11;
const SNAPSHOT_MAGIC: &[u8; 8] = b"QRWSNAP1";
const RECORD_LEN: u32 = 8 + 1 + 8 + 1 + 6 * 8;
const NO_LINK: u64 = u64::MAX;

fn format_err(line: usize, message: impl Into<String>) -> StoreError {
    StoreError::Format { line, message: message.into() }
}

fn csv_err(e: csv::Error) -> StoreError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => StoreError::Io(io),
        other => format_err(line, format!("{other:?}")),
    }
}

fn link_field(link: Option<PortRef>) -> String {
    link.map(|p| p.encode().to_string()).unwrap_or_default()
}

/// Writes every row of `table` in the tabular text format.
pub fn save_native<W: Write>(table: &CircuitTable, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(NATIVE_HEADER.split(',')).map_err(csv_err)?;
    let view = table.view();
    for rec in view.iter() {
        w.write_record([
            rec.id.0.to_string(),
            link_field(rec.prev[0]),
            link_field(rec.prev[1]),
            link_field(rec.prev[2]),
            rec.gate_type.name().to_string(),
            rec.param.to_string(),
            rec.switch.to_string(),
            link_field(rec.next[0]),
            link_field(rec.next[1]),
            link_field(rec.next[2]),
            table.label().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_native_file(table: &CircuitTable, path: &Path) -> Result<()> {
    save_native(table, BufWriter::new(File::create(path)?))
}

/// Streams rows of a tabular text file in fixed-size batches.
pub struct NativeReader<R: Read> {
    rows: csv::StringRecordsIntoIter<R>,
    label: Option<String>,
}

impl<R: Read> NativeReader<R> {
    pub fn new(input: R) -> Result<NativeReader<R>> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut header = csv::StringRecord::new();
        if !reader.read_record(&mut header).map_err(csv_err)? {
            return Err(format_err(1, "missing header"));
        }
        if header.iter().collect::<Vec<_>>().join(",") != NATIVE_HEADER {
            return Err(format_err(1, format!("expected header `{NATIVE_HEADER}`")));
        }
        Ok(NativeReader { rows: reader.into_records(), label: None })
    }

    /// Label shared by the rows read so far.
    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Up to `batch_size` rows; empty once the input is exhausted.
    pub fn next_batch(&mut self, batch_size: usize) -> Result<Vec<GateRecord>> {
        let mut batch = Vec::with_capacity(batch_size.min(1 << 16));
        while batch.len() < batch_size {
            let Some(row) = self.rows.next() else { break };
            let row = row.map_err(csv_err)?;
            let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
            batch.push(self.parse_row(&row, line)?);
        }
        Ok(batch)
    }

    fn parse_row(&mut self, row: &csv::StringRecord, line: usize) -> Result<GateRecord> {
        if row.len() != COLUMNS {
            return Err(format_err(line, format!("expected {COLUMNS} fields, found {}", row.len())));
        }
        let id = row[0]
            .parse::<u64>()
            .map_err(|_| format_err(line, format!("bad id `{}`", &row[0])))?;
        let gate_type = GateType::from_name(&row[4])
            .ok_or_else(|| format_err(line, format!("unknown gate type `{}`", &row[4])))?;
        let param = row[5]
            .parse::<f64>()
            .map_err(|_| format_err(line, format!("bad parameter `{}`", &row[5])))?;
        let switch = match &row[6] {
            "true" => true,
            "false" => false,
            other => return Err(format_err(line, format!("bad switch `{other}`"))),
        };
        let link = |field: &str| -> Result<Option<PortRef>> {
            if field.is_empty() {
                return Ok(None);
            }
            field
                .parse::<u64>()
                .ok()
                .and_then(PortRef::decode)
                .map(Some)
                .ok_or_else(|| format_err(line, format!("bad link `{field}`")))
        };
        let mut rec = GateRecord::new(GateId(id), gate_type, param);
        rec.switch = switch;
        for s in 0..3 {
            rec.prev[s] = link(&row[1 + s])?;
            rec.next[s] = link(&row[7 + s])?;
        }
        let label = &row[10];
        match &self.label {
            None => {
                validate_label(label)?;
                self.label = Some(label.to_string());
            }
            Some(l) if l != label => {
                return Err(format_err(line, format!("label `{label}` differs from `{l}`")));
            }
            Some(_) => {}
        }
        Ok(rec)
    }
}

fn finish(label: String, mut state: TableState, next_id: Option<u64>) -> Result<CircuitTable> {
    state.rebuild_wires()?;
    if state.wires.is_empty() {
        return Err(StoreError::NoQubits);
    }
    audit_state(&state)?;
    let table = CircuitTable::from_state(label, state);
    if let Some(n) = next_id {
        table.next_id.fetch_max(n, Ordering::SeqCst);
    }
    Ok(table)
}

fn put_unique(state: &mut TableState, rec: GateRecord, line: usize) -> Result<()> {
    if state.get(rec.id).is_some() {
        return Err(format_err(line, format!("duplicate id {}", rec.id)));
    }
    state.put(rec);
    Ok(())
}

/// Reads a whole table from the tabular text format and checks its integrity.
pub fn load_native<R: Read>(input: R) -> Result<CircuitTable> {
    let mut reader = NativeReader::new(input)?;
    let mut state = TableState::default();
    let mut line = 1;
    loop {
        let batch = reader.next_batch(1 << 16)?;
        if batch.is_empty() {
            break;
        }
        for rec in batch {
            line += 1;
            put_unique(&mut state, rec, line)?;
        }
    }
    let label = reader.label.take().ok_or(StoreError::NoQubits)?;
    finish(label, state, None)
}

pub fn load_native_file(path: &Path) -> Result<CircuitTable> {
    load_native(BufReader::new(File::open(path)?))
}

fn put_link(buf: &mut Vec<u8>, link: Option<PortRef>) {
    buf.extend_from_slice(&link.map(PortRef::encode).unwrap_or(NO_LINK).to_le_bytes());
}

pub fn write_snapshot<W: Write>(table: &CircuitTable, mut out: W) -> Result<()> {
    let view = table.view();
    out.write_all(SNAPSHOT_MAGIC)?;
    let label = table.label().as_bytes();
    out.write_all(&(label.len() as u32).to_le_bytes())?;
    out.write_all(label)?;
    let next_id = table.next_id.load(Ordering::SeqCst).max(view.id_bound());
    out.write_all(&next_id.to_le_bytes())?;
    out.write_all(&(view.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(4 + RECORD_LEN as usize);
    for rec in view.iter() {
        buf.clear();
        buf.extend_from_slice(&RECORD_LEN.to_le_bytes());
        buf.extend_from_slice(&rec.id.0.to_le_bytes());
        buf.push(rec.gate_type.index() as u8);
        buf.extend_from_slice(&rec.param.to_le_bytes());
        buf.push(rec.switch as u8);
        for l in rec.prev.iter().chain(&rec.next) {
            put_link(&mut buf, *l);
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    input.read_exact(&mut b)?;
    Ok(b)
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    read_array::<8, _>(input).map(u64::from_le_bytes)
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<CircuitTable> {
    let bad = |m: &str| format_err(0, format!("snapshot: {m}"));
    if &read_array::<8, _>(&mut input)? != SNAPSHOT_MAGIC {
        return Err(bad("wrong magic"));
    }
    let label_len = u32::from_le_bytes(read_array(&mut input)?) as usize;
    let mut label = vec![0u8; label_len];
    input.read_exact(&mut label)?;
    let label = String::from_utf8(label).map_err(|_| bad("label is not UTF-8"))?;
    validate_label(&label)?;
    let next_id = read_u64(&mut input)?;
    let count = read_u64(&mut input)?;
    let mut state = TableState::default();
    for i in 0..count {
        if u32::from_le_bytes(read_array(&mut input)?) != RECORD_LEN {
            return Err(bad("unexpected record length"));
        }
        let id = GateId(read_u64(&mut input)?);
        let [t] = read_array::<1, _>(&mut input)?;
        let gate_type = *GateType::ALL.get(t as usize).ok_or_else(|| bad("unknown gate type"))?;
        let param = f64::from_le_bytes(read_array(&mut input)?);
        let [switch] = read_array::<1, _>(&mut input)?;
        let mut rec = GateRecord::new(id, gate_type, param);
        rec.switch = switch != 0;
        let mut links = [None; 6];
        for l in &mut links {
            let raw = read_u64(&mut input)?;
            *l = if raw == NO_LINK {
                None
            } else {
                Some(PortRef::decode(raw).ok_or_else(|| bad("bad link"))?)
            };
        }
        rec.prev.copy_from_slice(&links[..3]);
        rec.next.copy_from_slice(&links[3..]);
        put_unique(&mut state, rec, i as usize + 1)?;
    }
    finish(label, state, Some(next_id))
}

pub(crate) fn save_snapshot_file(table: &CircuitTable, path: &Path) -> Result<()> {
    let tmp = path.with_extension("snap.tmp");
    write_snapshot(table, BufWriter::new(File::create(&tmp)?))?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub(crate) fn load_snapshot_file(path: &Path) -> Result<CircuitTable> {
    read_snapshot(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::{GateOp, Postfix};

    fn sample() -> CircuitTable {
        let ops = [
            GateOp::toffoli(0, 1, 2),
            GateOp::rotation(GateType::Rz, 1, 0.125),
            GateOp::cnot(2, 0),
            GateOp::cswap(1, 0, 2),
            GateOp::rotation(GateType::Rx, 0, -1.0e-3),
        ];
        CircuitTable::from_ops("s", 3, &ops).unwrap()
    }

    #[test]
    fn text_round_trip_is_byte_exact() {
        let t = sample();
        let mut first = Vec::new();
        save_native(&t, &mut first).unwrap();
        let loaded = load_native(first.as_slice()).unwrap();
        let mut second = Vec::new();
        save_native(&loaded, &mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(loaded.reconstruct().unwrap(), t.reconstruct().unwrap());
    }

    #[test]
    fn header_and_null_links() {
        let t = CircuitTable::new("e", 1).unwrap();
        let mut out = Vec::new();
        save_native(&t, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            format!("{NATIVE_HEADER}\n0,,,,In,0,false,3,,,e\n1,0,,,Out,0,false,,,,e\n")
        );
    }

    #[test]
    fn snapshot_round_trip_keeps_id_counter() {
        let t = sample();
        let mut txn = t.begin();
        let rz = t.ids_of_type(GateType::Rz)[0];
        let rec = t.select_by_id(rz).unwrap();
        let mut ids = vec![rz];
        ids.extend(rec.prev[0].map(|p| p.gate()));
        ids.extend(rec.next[0].map(|p| p.gate()));
        txn.lock_gates(&ids).unwrap();
        txn.delete_gate(rz).unwrap();
        txn.commit().unwrap();
        let mut buf = Vec::new();
        write_snapshot(&t, &mut buf).unwrap();
        let back = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.reconstruct().unwrap(), t.reconstruct().unwrap());
        assert_eq!(back.allocate_id(), t.allocate_id());
    }

    #[test]
    fn reports_line_of_bad_row() {
        let text = format!("{NATIVE_HEADER}\n0,,,,In,0,false,3,,,e\n1,0,,,Out,zero,false,,,,e\n");
        match load_native(text.as_bytes()) {
            Err(StoreError::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {:?}", other.map(|t| t.len())),
        }
    }

    #[test]
    fn one_sided_link_fails_integrity() {
        let text = format!("{NATIVE_HEADER}\n0,,,,In,0,false,3,,,e\n1,,,,Out,0,false,,,,e\n");
        assert!(matches!(load_native(text.as_bytes()), Err(StoreError::Integrity { .. })));
    }

    #[test]
    fn reader_streams_batches() {
        let t = sample();
        let mut buf = Vec::new();
        save_native(&t, &mut buf).unwrap();
        let mut r = NativeReader::new(buf.as_slice()).unwrap();
        let mut sizes = Vec::new();
        loop {
            let b = r.next_batch(4).unwrap();
            if b.is_empty() {
                break;
            }
            sizes.push(b.len());
        }
        assert_eq!(sizes.iter().sum::<usize>(), t.len());
        assert!(sizes.iter().all(|&s| s <= 4));
        assert_eq!(r.label(), Some("s"));
        let first = PortRef::new(GateId(0), Postfix::Control);
        assert_eq!(first.encode(), 0);
    }
}
