//! Equivalence checking by reducing `C2` followed by `C1` inverted to the
//! empty circuit.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, StoreError};
use crate::gate::{GateId, GateOp, GateType};
use crate::store::CircuitTable;
use crate::templates::{self, Direction, RewriteTemplate};

/// Circuit running `c2` and then the inverse of `c1`; it is the identity
/// exactly when the two circuits implement the same unitary.
pub fn concat_dagger(c1: &CircuitTable, c2: &CircuitTable, label: &str) -> Result<CircuitTable> {
    if c1.num_qubits() != c2.num_qubits() {
        return Err(StoreError::InvalidGate(format!(
            "qubit count mismatch: {} vs {}",
            c1.num_qubits(),
            c2.num_qubits()
        )));
    }
    let mut ops = c2.reconstruct()?.ops;
    ops.extend(c1.reconstruct()?.ops.iter().rev().map(GateOp::adjoint));
    CircuitTable::from_ops(label, c1.num_qubits(), &ops)
}

/// Linear map of a CNOT-only circuit over GF(2): bit `(t, c)` is set when
/// input bit `c` contributes to output bit `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gf2Matrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl Gf2Matrix {
    pub fn identity(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        let mut bits = vec![0u64; n * words];
        for i in 0..n {
            bits[i * words + i / 64] |= 1 << (i % 64);
        }
        Gf2Matrix { n, words, bits }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.words + col / 64] >> (col % 64) & 1 == 1
    }

    /// Left-multiplies by a CNOT: output `target` picks up output `control`.
    pub fn cnot(&mut self, control: usize, target: usize) {
        let (w, c, t) = (self.words, control * self.words, target * self.words);
        for k in 0..w {
            self.bits[t + k] ^= self.bits[c + k];
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Gf2Matrix::identity(self.n)
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        (0..self.n).map(|r| (0..self.n).map(|c| self.get(r, c)).collect()).collect()
    }
}

/// GF(2) matrix of `ops` on `n` qubits; fails on anything but CNOT.
pub fn gf2_of_ops(n: usize, ops: &[GateOp]) -> Result<Gf2Matrix> {
    let mut m = Gf2Matrix::identity(n);
    for op in ops {
        if op.gate_type != GateType::Cnot {
            return Err(StoreError::InvalidGate(format!("{} is not a CNOT", op.gate_type)));
        }
        let q = op.qubits();
        m.cnot(q[0] as usize, q[1] as usize);
    }
    Ok(m)
}

pub fn gf2_oracle(table: &CircuitTable) -> Result<Gf2Matrix> {
    gf2_of_ops(table.num_qubits(), &table.reconstruct()?.ops)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Equivalent,
    NotEquivalent,
    Unknown,
}

/// How a verdict was reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Reduced to the empty circuit.
    Reduction,
    /// Exact comparison of the residue's GF(2) matrix with the identity.
    Gf2,
    /// Residue left undecided.
    None,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivReport {
    pub verdict: Verdict,
    pub method: Method,
    pub initial_size: usize,
    pub residue_size: usize,
    pub rewrites: u64,
    #[serde(serialize_with = "crate::executor::secs")]
    pub elapsed: Duration,
    pub timed_out: bool,
}

#[derive(Clone, Debug)]
pub struct EquivConfig {
    pub templates: Vec<&'static RewriteTemplate>,
    pub timeout: Option<Duration>,
}

impl Default for EquivConfig {
    fn default() -> Self {
        EquivConfig { templates: default_rules(), timeout: None }
    }
}

/// Cancellation rules a, b, e, f with commutations c, d as enablers.
pub fn default_rules() -> Vec<&'static RewriteTemplate> {
    templates::parse_rules("a,b,e,f,c,d").expect("built-in rules")
}

fn is_enabler(t: &RewriteTemplate) -> bool {
    matches!(t.name, "c" | "d")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReduceStats {
    pub rewrites: u64,
    pub timed_out: bool,
}

/// Rewrites `table` to a fixpoint of `rules`.
///
/// Work proceeds from a stack seeded with every gate; each successful rewrite
/// pushes the rows around the site, so cancellation spreads outward from
/// wherever it starts. Commutation rules only fire when the moved gate can
/// be reduced at once, and the two steps commit together. A full sweep
/// after the stack drains confirms the fixpoint.
pub fn reduce(table: &CircuitTable, rules: &[&'static RewriteTemplate], deadline: Option<Instant>) -> Result<ReduceStats> {
    if let Some(t) = rules.iter().find(|t| t.direction == Direction::Reverse) {
        return Err(StoreError::InvalidGate(format!("rule `{}` grows the circuit and cannot reach a fixpoint", t.name)));
    }
    let (reducers, enablers): (Vec<_>, Vec<_>) = rules.iter().copied().partition(|t| !is_enabler(t));
    let mut stats = ReduceStats::default();
    let mut stack: Vec<GateId> = table.reconstruct_with_ids()?.1;
    let mut ticks = 0u32;
    loop {
        while let Some(id) = stack.pop() {
            ticks = ticks.wrapping_add(1);
            if ticks % 1024 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
                stats.timed_out = true;
                return Ok(stats);
            }
            if let Some(touched) = step(table, id, &reducers, &enablers)? {
                stats.rewrites += 1;
                stack.extend(touched);
            }
        }
        let mut changed = false;
        for id in table.reconstruct_with_ids()?.1 {
            if let Some(touched) = step(table, id, &reducers, &enablers)? {
                stats.rewrites += 1;
                stack.extend(touched);
                changed = true;
            }
        }
        if !changed {
            return Ok(stats);
        }
    }
}

/// One attempt at `id`; returns the rows whose neighbourhood changed.
fn step(
    table: &CircuitTable,
    id: GateId,
    reducers: &[&'static RewriteTemplate],
    enablers: &[&'static RewriteTemplate],
) -> Result<Option<Vec<GateId>>> {
    let view = table.view();
    let Some(anchor) = view.get(id).cloned() else { return Ok(None) };
    if anchor.gate_type.is_boundary() {
        return Ok(None);
    }
    for tpl in reducers {
        if let Some(plan) = tpl.find(&view, &anchor) {
            drop(view);
            let touched = neighbourhood(&plan);
            let mut txn = table.begin();
            txn.lock_gates(&plan.touched())?;
            txn.rewire(&plan)?;
            txn.commit()?;
            return Ok(Some(touched));
        }
    }
    let moves: Vec<_> = enablers.iter().filter_map(|t| t.find(&view, &anchor)).collect();
    drop(view);
    for plan in moves {
        let mut txn = table.begin();
        txn.lock_gates(&plan.touched())?;
        txn.rewire(&plan)?;
        let follow = txn
            .get(id)
            .and_then(|moved| reducers.iter().find_map(|t| t.find(&txn, &moved)));
        if let Some(next) = follow {
            txn.lock_gates(&next.touched())?;
            txn.rewire(&next)?;
            txn.commit()?;
            let mut touched = neighbourhood(&plan);
            touched.extend(neighbourhood(&next));
            return Ok(Some(touched));
        }
        txn.abort();
    }
    Ok(None)
}

fn neighbourhood(plan: &crate::store::Rewire) -> Vec<GateId> {
    let mut ids = plan.touched();
    ids.reverse();
    ids
}

/// Reduces the concatenation of `c2` with the inverse of `c1`, then decides
/// a CNOT-only residue exactly over GF(2).
pub fn check_equivalence(c1: &CircuitTable, c2: &CircuitTable, cfg: &EquivConfig) -> Result<EquivReport> {
    let start = Instant::now();
    let deadline = cfg.timeout.map(|t| start + t);
    let concat = concat_dagger(c1, c2, "equiv")?;
    let initial_size = concat.gate_count();
    let stats = reduce(&concat, &cfg.templates, deadline)?;
    let residue = concat.reconstruct()?.ops;
    let (verdict, method) = if residue.is_empty() {
        (Verdict::Equivalent, Method::Reduction)
    } else if residue.iter().all(|op| op.gate_type == GateType::Cnot) {
        let m = gf2_of_ops(concat.num_qubits(), &residue)?;
        (if m.is_identity() { Verdict::Equivalent } else { Verdict::NotEquivalent }, Method::Gf2)
    } else {
        (Verdict::Unknown, Method::None)
    };
    Ok(EquivReport {
        verdict,
        method,
        initial_size,
        residue_size: residue.len(),
        rewrites: stats.rewrites,
        elapsed: start.elapsed(),
        timed_out: stats.timed_out,
    })
}

/// `count` CNOTs on random distinct qubit pairs.
pub fn random_cnots<R: Rng + ?Sized>(q: u32, count: usize, rng: &mut R) -> Vec<GateOp> {
    (0..count)
        .map(|_| {
            let c = rng.gen_range(0..q);
            let t = (c + rng.gen_range(1..q)) % q;
            GateOp::cnot(c, t)
        })
        .collect()
}

/// A random `q`-qubit circuit of `q^3` CNOTs and either a copy of it or,
/// with `tamper`, the copy with one gate removed. Deletions that leave the
/// linear map unchanged are re-drawn.
pub fn gen_equiv_benchmark(q: u32, seed: u64, tamper: bool) -> Result<(CircuitTable, CircuitTable)> {
    if q < 2 {
        return Err(StoreError::InvalidGate("benchmark needs at least two qubits".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = random_cnots(q, (q as usize).pow(3), &mut rng);
    let mut copy = ops.clone();
    if tamper {
        let reference = gf2_of_ops(q as usize, &ops)?;
        loop {
            let k = rng.gen_range(0..ops.len());
            let mut cut = ops.clone();
            cut.remove(k);
            if gf2_of_ops(q as usize, &cut)? != reference {
                copy = cut;
                break;
            }
        }
    }
    let n = q as usize;
    Ok((CircuitTable::from_ops("c1", n, &ops)?, CircuitTable::from_ops("c2", n, &copy)?))
}
