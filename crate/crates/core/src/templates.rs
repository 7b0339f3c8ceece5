//! Template rewrite rules.
//!
//! A template inspects an anchor gate and its linked neighbourhood and, on a
//! match, produces a [`Rewire`] plan. Matching is read-only and can run on a
//! [`TableView`](crate::store::TableView) or a transaction; every mutation
//! happens through [`Transaction::rewire`].

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::StoreError;
use crate::gate::{angle_is_zero, normalize_angle, GateId, GateOp, GateRecord, GateType, PortRef, Postfix};
use crate::store::{CircuitTable, GateSource, Rewire, Step};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

type Matcher = fn(&dyn GateSource, &GateRecord) -> Option<Rewire>;

/// A named rewrite rule: anchor types plus a matcher producing a plan.
pub struct RewriteTemplate {
    pub name: &'static str,
    pub direction: Direction,
    /// Gate types a match may be anchored on.
    pub anchor_types: &'static [GateType],
    matcher: Matcher,
}

impl fmt::Debug for RewriteTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RewriteTemplate")
            .field("name", &self.name)
            .field("direction", &self.direction)
            .finish()
    }
}

impl RewriteTemplate {
    /// Plan for rewriting at `anchor`, if the pattern is present.
    pub fn find(&self, src: &dyn GateSource, anchor: &GateRecord) -> Option<Rewire> {
        if !self.anchor_types.contains(&anchor.gate_type) {
            return None;
        }
        (self.matcher)(src, anchor)
    }

    pub fn find_at(&self, src: &dyn GateSource, anchor: GateId) -> Option<Rewire> {
        src.gate(anchor).and_then(|rec| self.find(src, &rec))
    }

    /// Rows that must be locked before applying `plan`.
    pub fn locked_set(plan: &Rewire) -> Vec<GateId> {
        plan.touched()
    }
}

/// Result of one attempted application.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    NoMatch,
    /// Another transaction held a row of the locked set.
    LockFailed,
    /// The site changed between matching and locking.
    Stale,
    Applied,
}

/// Time spent inside [`apply_at`], split by phase.
#[derive(Clone, Copy, Debug, Default)]
pub struct ApplyTiming {
    pub search: Duration,
    pub lock: Duration,
    pub rewrite: Duration,
}

/// Match at `anchor`, lock the locked set, re-match under the locks and apply.
pub fn apply_at(
    table: &CircuitTable,
    template: &RewriteTemplate,
    anchor: GateId,
    timing: &mut ApplyTiming,
) -> Result<Outcome, StoreError> {
    let t0 = Instant::now();
    let plan = {
        let view = table.view();
        template.find_at(&view, anchor)
    };
    timing.search += t0.elapsed();
    match plan {
        Some(plan) => apply_plan(table, template, anchor, &plan, timing),
        None => Ok(Outcome::NoMatch),
    }
}

/// Second half of [`apply_at`] for a plan found on an earlier view.
///
/// Lock acquisition (successful or not) is charged to `timing.lock`;
/// re-matching, rewiring and commit to `timing.rewrite`.
pub fn apply_plan(
    table: &CircuitTable,
    template: &RewriteTemplate,
    anchor: GateId,
    plan: &Rewire,
    timing: &mut ApplyTiming,
) -> Result<Outcome, StoreError> {
    let t1 = Instant::now();
    let mut txn = table.begin();
    let locked = txn.lock_gates(&plan.touched());
    let t2 = Instant::now();
    timing.lock += t2 - t1;
    match locked {
        Ok(()) => {}
        Err(StoreError::LockConflict(_)) => return Ok(Outcome::LockFailed),
        Err(StoreError::NotFound(_)) => return Ok(Outcome::Stale),
        Err(e) => return Err(e),
    }
    if template.find_at(&txn, anchor).as_ref() != Some(plan) {
        drop(txn);
        timing.lock += t2.elapsed();
        return Ok(Outcome::Stale);
    }
    txn.rewire(plan)?;
    txn.commit()?;
    timing.rewrite += t2.elapsed();
    Ok(Outcome::Applied)
}

fn next_of(src: &dyn GateSource, rec: &GateRecord, slot: usize) -> Option<(GateRecord, PortRef)> {
    let port = rec.next[slot]?;
    Some((src.gate(port.gate())?, port))
}

fn prev_of(src: &dyn GateSource, rec: &GateRecord, slot: usize) -> Option<(GateRecord, PortRef)> {
    let port = rec.prev[slot]?;
    Some((src.gate(port.gate())?, port))
}

fn keep(id: GateId, wires: &[usize]) -> Step {
    Step::Keep { id, wires: wires.to_vec(), param: None }
}

fn new(gate_type: GateType, wires: &[usize]) -> Step {
    Step::New { gate_type, param: 0.0, wires: wires.to_vec() }
}

const INVERSE_PAIR_TYPES: &[GateType] =
    &[GateType::H, GateType::X, GateType::Z, GateType::S, GateType::Sdg, GateType::T, GateType::Tdg];
const DIAGONAL_TYPES: &[GateType] =
    &[GateType::Z, GateType::S, GateType::Sdg, GateType::T, GateType::Tdg, GateType::Rz];
const X_AXIS_TYPES: &[GateType] = &[GateType::X, GateType::Rx];
const CNOT: &[GateType] = &[GateType::Cnot];
const NOT_OUT: &[GateType] = &[
    GateType::In,
    GateType::H,
    GateType::X,
    GateType::Z,
    GateType::S,
    GateType::Sdg,
    GateType::T,
    GateType::Tdg,
    GateType::Rx,
    GateType::Rz,
    GateType::Cnot,
    GateType::Toffoli,
    GateType::Cswap,
];

// a: U U^dagger -> identity
fn match_a(src: &dyn GateSource, u: &GateRecord) -> Option<Rewire> {
    let (v, _) = next_of(src, u, 0)?;
    if v.gate_type != u.gate_type.adjoint() {
        return None;
    }
    Some(Rewire { wires: vec![(u.prev[0]?, v.next[0]?)], remove: vec![u.id, v.id], steps: vec![] })
}

/// Plan inserting `u` then its adjoint on the wire segment `(from, to)`.
pub fn insert_pair_plan(from: PortRef, to: PortRef, u: GateType) -> Rewire {
    Rewire { wires: vec![(from, to)], remove: vec![], steps: vec![new(u, &[0]), new(u.adjoint(), &[0])] }
}

// a-rev: insert H H after the anchor on its first wire
fn match_a_rev(_: &dyn GateSource, g: &GateRecord) -> Option<Rewire> {
    Some(insert_pair_plan(g.port(0), g.next[0]?, GateType::H))
}

// b: CNOT CNOT -> identity
fn match_b(src: &dyn GateSource, a: &GateRecord) -> Option<Rewire> {
    let (b, pc) = next_of(src, a, 0)?;
    if b.gate_type != GateType::Cnot || pc.postfix() != Postfix::Control {
        return None;
    }
    if a.next[1]? != PortRef::new(b.id, Postfix::Target) {
        return None;
    }
    Some(Rewire {
        wires: vec![(a.prev[0]?, b.next[0]?), (a.prev[1]?, b.next[1]?)],
        remove: vec![a.id, b.id],
        steps: vec![],
    })
}

fn match_b_rev(_: &dyn GateSource, a: &GateRecord) -> Option<Rewire> {
    Some(Rewire {
        wires: vec![(a.port(0), a.next[0]?), (a.port(1), a.next[1]?)],
        remove: vec![],
        steps: vec![new(GateType::Cnot, &[0, 1]), new(GateType::Cnot, &[0, 1])],
    })
}

// c: diagonal gate before a CNOT control moves past it
fn match_c(src: &dyn GateSource, r: &GateRecord) -> Option<Rewire> {
    let (c, port) = next_of(src, r, 0)?;
    if c.gate_type != GateType::Cnot || port.postfix() != Postfix::Control {
        return None;
    }
    Some(Rewire {
        wires: vec![(r.prev[0]?, c.next[0]?), (c.prev[1]?, c.next[1]?)],
        remove: vec![],
        steps: vec![keep(c.id, &[0, 1]), keep(r.id, &[0])],
    })
}

fn match_c_rev(src: &dyn GateSource, c: &GateRecord) -> Option<Rewire> {
    let (r, _) = next_of(src, c, 0)?;
    if !DIAGONAL_TYPES.contains(&r.gate_type) {
        return None;
    }
    Some(Rewire {
        wires: vec![(c.prev[0]?, r.next[0]?), (c.prev[1]?, c.next[1]?)],
        remove: vec![],
        steps: vec![keep(r.id, &[0]), keep(c.id, &[0, 1])],
    })
}

// d: X-axis gate before a CNOT target moves past it
fn match_d(src: &dyn GateSource, r: &GateRecord) -> Option<Rewire> {
    let (c, port) = next_of(src, r, 0)?;
    if c.gate_type != GateType::Cnot || port.postfix() != Postfix::Target {
        return None;
    }
    Some(Rewire {
        wires: vec![(c.prev[0]?, c.next[0]?), (r.prev[0]?, c.next[1]?)],
        remove: vec![],
        steps: vec![keep(c.id, &[0, 1]), keep(r.id, &[1])],
    })
}

fn match_d_rev(src: &dyn GateSource, c: &GateRecord) -> Option<Rewire> {
    let (r, _) = next_of(src, c, 1)?;
    if !X_AXIS_TYPES.contains(&r.gate_type) {
        return None;
    }
    Some(Rewire {
        wires: vec![(c.prev[0]?, c.next[0]?), (c.prev[1]?, r.next[0]?)],
        remove: vec![],
        steps: vec![keep(r.id, &[1]), keep(c.id, &[0, 1])],
    })
}

// e/f: same-axis rotations merge by angle addition
fn match_merge(src: &dyn GateSource, u: &GateRecord) -> Option<Rewire> {
    let (v, _) = next_of(src, u, 0)?;
    if v.gate_type != u.gate_type {
        return None;
    }
    let sum = normalize_angle(u.param + v.param);
    let wires = vec![(u.prev[0]?, v.next[0]?)];
    if angle_is_zero(sum) {
        Some(Rewire { wires, remove: vec![u.id, v.id], steps: vec![] })
    } else {
        Some(Rewire { wires, remove: vec![v.id], steps: vec![Step::Keep { id: u.id, wires: vec![0], param: Some(sum) }] })
    }
}

fn match_split(_: &dyn GateSource, u: &GateRecord) -> Option<Rewire> {
    let half = u.param / 2.0;
    Some(Rewire {
        wires: vec![(u.prev[0]?, u.next[0]?)],
        remove: vec![],
        steps: vec![
            Step::Keep { id: u.id, wires: vec![0], param: Some(half) },
            Step::New { gate_type: u.gate_type, param: half, wires: vec![0] },
        ],
    })
}

// g: (H x H) CNOT (H x H) -> reversed CNOT; anchored on the control-wire H
fn match_g(src: &dyn GateSource, h1: &GateRecord) -> Option<Rewire> {
    let (c, port) = next_of(src, h1, 0)?;
    if c.gate_type != GateType::Cnot || port.postfix() != Postfix::Control {
        return None;
    }
    let (h2, _) = prev_of(src, &c, 1)?;
    let (h3, _) = next_of(src, &c, 0)?;
    let (h4, _) = next_of(src, &c, 1)?;
    if [&h2, &h3, &h4].iter().any(|g| g.gate_type != GateType::H) {
        return None;
    }
    Some(Rewire {
        wires: vec![(h1.prev[0]?, h3.next[0]?), (h2.prev[0]?, h4.next[0]?)],
        remove: vec![h1.id, h2.id, h3.id, h4.id],
        steps: vec![keep(c.id, &[1, 0])],
    })
}

fn match_g_rev(_: &dyn GateSource, c: &GateRecord) -> Option<Rewire> {
    Some(Rewire {
        wires: vec![(c.prev[0]?, c.next[0]?), (c.prev[1]?, c.next[1]?)],
        remove: vec![],
        steps: vec![
            new(GateType::H, &[0]),
            new(GateType::H, &[1]),
            keep(c.id, &[1, 0]),
            new(GateType::H, &[0]),
            new(GateType::H, &[1]),
        ],
    })
}

/// Clifford+T network for a Toffoli on plan wires (a, b) controlling t.
fn toffoli_steps(a: usize, b: usize, t: usize) -> Vec<Step> {
    use GateType::{Cnot, Tdg, H, T};
    vec![
        new(H, &[t]),
        new(Cnot, &[b, t]),
        new(Tdg, &[t]),
        new(Cnot, &[a, t]),
        new(T, &[t]),
        new(Cnot, &[b, t]),
        new(Tdg, &[t]),
        new(Cnot, &[a, t]),
        new(T, &[b]),
        new(T, &[t]),
        new(H, &[t]),
        new(Cnot, &[a, b]),
        new(T, &[a]),
        new(Tdg, &[b]),
        new(Cnot, &[a, b]),
    ]
}

fn three_wires(g: &GateRecord) -> Option<Vec<(PortRef, PortRef)>> {
    (0..3).map(|s| Some((g.prev[s]?, g.next[s]?))).collect()
}

fn match_toffoli(_: &dyn GateSource, g: &GateRecord) -> Option<Rewire> {
    Some(Rewire { wires: three_wires(g)?, remove: vec![g.id], steps: toffoli_steps(0, 1, 2) })
}

// CSWAP(c; a, b) = CNOT(b, a) Toffoli(c, a; b) CNOT(b, a)
fn cswap_steps() -> Vec<Step> {
    let mut steps = vec![new(GateType::Cnot, &[2, 1])];
    steps.extend(toffoli_steps(0, 1, 2));
    steps.push(new(GateType::Cnot, &[2, 1]));
    steps
}

fn match_cswap(_: &dyn GateSource, g: &GateRecord) -> Option<Rewire> {
    Some(Rewire { wires: three_wires(g)?, remove: vec![g.id], steps: cswap_steps() })
}

/// Clifford+T network replacing a Toffoli or CSWAP, on the op's own qubits;
/// `None` for every other gate.
pub fn clifford_t_expansion(op: &GateOp) -> Option<Vec<GateOp>> {
    let steps = match op.gate_type {
        GateType::Toffoli => toffoli_steps(0, 1, 2),
        GateType::Cswap => cswap_steps(),
        _ => return None,
    };
    let q = op.qubits();
    Some(
        steps
            .into_iter()
            .map(|s| match s {
                Step::New { gate_type, param, wires } => {
                    let qubits: Vec<u32> = wires.iter().map(|&w| q[w]).collect();
                    GateOp::new(gate_type, &qubits, param)
                }
                Step::Keep { .. } => unreachable!("networks only create gates"),
            })
            .collect(),
    )
}

macro_rules! template {
    ($name:expr, $dir:ident, $anchors:expr, $m:expr) => {
        RewriteTemplate { name: $name, direction: Direction::$dir, anchor_types: $anchors, matcher: $m }
    };
}

static TEMPLATES: &[RewriteTemplate] = &[
    template!("a", Forward, INVERSE_PAIR_TYPES, match_a),
    template!("b", Forward, CNOT, match_b),
    template!("c", Forward, DIAGONAL_TYPES, match_c),
    template!("d", Forward, X_AXIS_TYPES, match_d),
    template!("e", Forward, &[GateType::Rx], match_merge),
    template!("f", Forward, &[GateType::Rz], match_merge),
    template!("g", Forward, &[GateType::H], match_g),
    template!("a-rev", Reverse, NOT_OUT, match_a_rev),
    template!("b-rev", Reverse, CNOT, match_b_rev),
    template!("c-rev", Reverse, CNOT, match_c_rev),
    template!("d-rev", Reverse, CNOT, match_d_rev),
    template!("e-rev", Reverse, &[GateType::Rx], match_split),
    template!("f-rev", Reverse, &[GateType::Rz], match_split),
    template!("g-rev", Reverse, CNOT, match_g_rev),
    template!("toffoli", Forward, &[GateType::Toffoli], match_toffoli),
    template!("cswap", Forward, &[GateType::Cswap], match_cswap),
];

pub fn all_templates() -> &'static [RewriteTemplate] {
    TEMPLATES
}

pub fn template(name: &str) -> Option<&'static RewriteTemplate> {
    TEMPLATES.iter().find(|t| t.name == name)
}

/// Parses a comma-separated rule list such as `b,g-rev`.
pub fn parse_rules(list: &str) -> Result<Vec<&'static RewriteTemplate>, String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| template(s).ok_or_else(|| format!("unknown rule `{s}`")))
        .collect()
}
