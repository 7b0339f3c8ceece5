//! Search / rewrite / communication timing model and the benchmarks that
//! feed it.
//!
//! With `N` gates, `n` threads and a fraction `p_r` of gates anchoring a
//! rewritable pattern, a pass is modelled as
//!
//! ```text
//! T_n = s N + r p_r N / n + c p_r N
//! ```
//!
//! where `s` is the per-gate search cost, `r` the per-rewrite cost and `c`
//! the per-rewrite synchronisation cost. `T_1` is the same expression with
//! `n = 1` and `c = 0`.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{run_parallel, run_pass, PassConfig, PassReport, Search};
use crate::gate::{GateOp, GateType};
use crate::store::CircuitTable;
use crate::templates::{apply_plan, template, ApplyTiming, Outcome, RewriteTemplate};

/// One measured (or synthetic) pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfSample {
    pub gates: f64,
    pub threads: usize,
    pub p_r: f64,
    pub search: f64,
    pub rewrite: f64,
    pub comm: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerfFit {
    pub s: f64,
    pub r: f64,
    pub c: f64,
    /// Largest |predicted - measured| / measured over the fitted samples.
    pub max_rel_residual: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples must span at least two thread counts and two match probabilities")]
    NotSpanning,
    #[error("samples do not determine s, r and c")]
    RankDeficient,
    #[error("sample {0} has a non-positive total time")]
    BadSample(usize),
}

pub fn predict_t(fit: &PerfFit, gates: f64, threads: usize, p_r: f64) -> f64 {
    assert!(threads >= 1, "threads must be at least 1");
    let rewrites = p_r * gates;
    fit.s * gates + fit.r * rewrites / threads as f64 + fit.c * rewrites
}

/// `T_1 / T_n`, with `T_1` taken without synchronisation cost.
pub fn speedup(fit: &PerfFit, threads: usize, p_r: f64) -> f64 {
    let serial = PerfFit { c: 0.0, ..*fit };
    predict_t(&serial, 1.0, 1, p_r) / predict_t(fit, 1.0, threads, p_r)
}

fn design_row(s: &PerfSample) -> [f64; 3] {
    let rewrites = s.p_r * s.gates;
    [s.gates, rewrites / s.threads as f64, rewrites]
}

/// Non-negative least-squares fit of `(s, r, c)` minimising relative error.
///
/// With three unknowns the active-set problem is solved exactly by trying
/// every subset of free variables and keeping the best feasible solution.
pub fn fit_src(samples: &[PerfSample]) -> Result<PerfFit, FitError> {
    if samples.len() < 3 {
        return Err(FitError::TooFewSamples(samples.len()));
    }
    let distinct = |v: Vec<f64>| {
        let mut v = v;
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    if distinct(samples.iter().map(|s| s.threads as f64).collect()) < 2
        || distinct(samples.iter().map(|s| s.p_r).collect()) < 2
    {
        return Err(FitError::NotSpanning);
    }
    if let Some(i) = samples.iter().position(|s| !(s.total > 0.0)) {
        return Err(FitError::BadSample(i));
    }
    let m = samples.len();
    let mut a = DMatrix::<f64>::zeros(m, 3);
    let mut b = DVector::<f64>::zeros(m);
    for (i, s) in samples.iter().enumerate() {
        let row = design_row(s);
        for j in 0..3 {
            a[(i, j)] = row[j] / s.total;
        }
        b[i] = 1.0;
    }
    // column scaling keeps the singular values comparable
    let scale: Vec<f64> = (0..3).map(|j| a.column(j).norm()).collect();
    if scale.iter().any(|&x| x == 0.0) {
        return Err(FitError::RankDeficient);
    }
    for j in 0..3 {
        a.column_mut(j).scale_mut(1.0 / scale[j]);
    }
    let sv = a.clone().svd(false, false).singular_values;
    let (max, min) = (sv.max(), sv.min());
    if min <= max * 1e-10 {
        return Err(FitError::RankDeficient);
    }

    let mut best: Option<(f64, [f64; 3])> = None;
    for mask in 1u8..8 {
        let cols: Vec<usize> = (0..3).filter(|j| mask & (1 << j) != 0).collect();
        let sub = DMatrix::from_fn(m, cols.len(), |i, k| a[(i, cols[k])]);
        let Ok(x) = sub.clone().svd(true, true).solve(&b, 1e-14) else { continue };
        if x.iter().any(|&v| v < 0.0) {
            continue;
        }
        let resid = (&sub * &x - &b).norm_squared();
        let mut full = [0.0; 3];
        for (k, &j) in cols.iter().enumerate() {
            full[j] = x[k] / scale[j];
        }
        if best.map_or(true, |(r, _)| resid < r) {
            best = Some((resid, full));
        }
    }
    let [s, r, c] = best.map(|b| b.1).unwrap_or([0.0; 3]);
    let mut fit = PerfFit { s, r, c, max_rel_residual: 0.0 };
    fit.max_rel_residual = samples
        .iter()
        .map(|p| (predict_t(&fit, p.gates, p.threads, p.p_r) - p.total).abs() / p.total)
        .fold(0.0, f64::max);
    Ok(fit)
}

fn random_cnot(rng: &mut ChaCha8Rng, qubits: u32) -> (u32, u32) {
    let c = rng.gen_range(0..qubits);
    let mut t = rng.gen_range(0..qubits - 1);
    if t >= c {
        t += 1;
    }
    (c, t)
}

/// `gates` random CNOTs on `qubits` wires; `round(p_r * gates)` of them are
/// written in reversed form `H H CNOT(t, c) H H`.
pub fn flipped_cnot_ops(gates: usize, p_r: f64, qubits: u32, seed: u64) -> Vec<GateOp> {
    assert!((0.0..=1.0).contains(&p_r), "p_r must lie in [0, 1]");
    assert!(qubits >= 2, "need two qubits");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flips = (p_r * gates as f64).round() as usize;
    let mut flipped = vec![false; gates];
    for i in sample(&mut rng, gates, flips) {
        flipped[i] = true;
    }
    let mut ops = Vec::with_capacity(gates + 4 * flips);
    for &f in &flipped {
        let (c, t) = random_cnot(&mut rng, qubits);
        if f {
            ops.extend([GateOp::single(GateType::H, c), GateOp::single(GateType::H, t)]);
            ops.push(GateOp::cnot(t, c));
            ops.extend([GateOp::single(GateType::H, c), GateOp::single(GateType::H, t)]);
        } else {
            ops.push(GateOp::cnot(c, t));
        }
    }
    ops
}

pub fn gen_flipped_cnot_circuit(label: &str, gates: usize, p_r: f64, qubits: u32, seed: u64) -> CircuitTable {
    let ops = flipped_cnot_ops(gates, p_r, qubits, seed);
    CircuitTable::from_ops(label, qubits as usize, &ops).expect("generated ops are valid")
}

/// Stand-in for tools that locate patterns by walking the whole circuit:
/// one topological traversal collects every site, then each is rewritten.
pub fn run_linear_baseline(table: &CircuitTable, tpl: &'static RewriteTemplate) -> crate::Result<PassReport> {
    let start = Instant::now();
    let mut report = PassReport { passes: 1, ..PassReport::default() };
    let mut sites = Vec::new();
    table.for_each_topological(|src, rec, _| {
        report.candidates += 1;
        if let Some(plan) = tpl.find(src, rec) {
            sites.push((rec.id, plan));
        }
    })?;
    let searched = Instant::now();
    let mut timing = ApplyTiming::default();
    for (id, plan) in &sites {
        report.matches += 1;
        let mut outcome = apply_plan(table, tpl, *id, plan, &mut timing)?;
        if outcome == Outcome::Stale {
            // an earlier rewrite moved this site's boundary
            let fresh = tpl.find_at(&table.view(), *id);
            if let Some(fresh) = fresh {
                outcome = apply_plan(table, tpl, *id, &fresh, &mut timing)?;
            }
        }
        match outcome {
            Outcome::Applied => report.rewrites += 1,
            Outcome::LockFailed => report.lock_failures += 1,
            Outcome::Stale => report.stale += 1,
            Outcome::NoMatch => {}
        }
    }
    report.search = searched - start;
    report.rewrite = timing.rewrite;
    report.comm = timing.lock;
    report.wall = start.elapsed();
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Indexed,
    LinearScan,
}

#[derive(Clone, Debug, Serialize)]
pub struct UtilityRow {
    pub engine: Engine,
    pub gates: usize,
    pub p_r: f64,
    pub seconds: f64,
    pub search_seconds: f64,
    pub rewrites: u64,
}

/// Times one rule-g forward pass per engine, size and match probability.
/// Circuit construction is not timed; each engine gets a fresh copy.
pub fn run_utility_benchmark(sizes: &[usize], p_rs: &[f64], qubits: u32, seed: u64) -> crate::Result<Vec<UtilityRow>> {
    let g = template("g").expect("rule g");
    let mut rows = Vec::new();
    for &n in sizes {
        for &p_r in p_rs {
            let ops = flipped_cnot_ops(n, p_r, qubits, seed);
            for engine in [Engine::Indexed, Engine::LinearScan] {
                let table = CircuitTable::from_ops("utility", qubits as usize, &ops)?;
                let report = match engine {
                    Engine::Indexed => run_pass(&table, &PassConfig::single(g))?,
                    Engine::LinearScan => run_linear_baseline(&table, g)?,
                };
                rows.push(UtilityRow {
                    engine,
                    gates: n,
                    p_r,
                    seconds: report.wall.as_secs_f64(),
                    search_seconds: report.search.as_secs_f64(),
                    rewrites: report.rewrites,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub threads: usize,
    pub gates: usize,
    pub p_r: f64,
    pub wall: f64,
    pub search: f64,
    pub rewrite: f64,
    pub comm: f64,
    pub rewrites: u64,
    pub lock_failures: u64,
    /// Worst per-worker |S + R + C - wall| / wall.
    pub reconciliation: f64,
}

impl ScalingRow {
    pub fn sample(&self) -> PerfSample {
        PerfSample {
            gates: self.gates as f64,
            threads: self.threads,
            p_r: self.p_r,
            search: self.search,
            rewrite: self.rewrite,
            comm: self.comm,
            total: self.wall,
        }
    }
}

/// One rule-g forward pass at each thread count on identical fresh circuits.
pub fn run_scaling_benchmark(
    gates: usize,
    p_r: f64,
    threads: &[usize],
    qubits: u32,
    search: Search,
    seed: u64,
) -> crate::Result<Vec<ScalingRow>> {
    let g = template("g").expect("rule g");
    let ops = flipped_cnot_ops(gates, p_r, qubits, seed);
    let mut rows = Vec::new();
    for &n in threads {
        let table = CircuitTable::from_ops("scaling", qubits as usize, &ops)?;
        let cfg = PassConfig { search, seed, ..PassConfig::single(g) };
        let start = Instant::now();
        let reports = run_parallel(&table, &cfg, n)?;
        let wall = start.elapsed();
        let merged = PassReport::merge(&reports);
        let per_worker = |d: Duration| d.as_secs_f64() / n as f64;
        rows.push(ScalingRow {
            threads: n,
            gates,
            p_r,
            wall: wall.as_secs_f64(),
            search: per_worker(merged.search),
            rewrite: per_worker(merged.rewrite),
            comm: per_worker(merged.comm),
            rewrites: merged.rewrites,
            lock_failures: merged.lock_failures,
            reconciliation: reports.iter().map(PassReport::reconciliation_error).fold(0.0, f64::max),
        });
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
