//! Multi-threaded rewrite passes.
//!
//! Worker `pid` of `nproc` owns the gates whose id is congruent to `pid`
//! modulo `nproc`. For each owned candidate matching the template it
//! try-locks the locked set, skips the candidate on conflict, and otherwise
//! applies the rewrite and commits.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, StoreError};
use crate::gate::{GateId, GateType};
use crate::store::{CircuitTable, TableView};
use crate::templates::{apply_plan, ApplyTiming, Outcome, RewriteTemplate};

/// How a pass enumerates candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Search {
    /// Ids come from the per-type index of the template's anchor types.
    Indexed,
    /// Every id of the shard is fetched and type-checked.
    FullScan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanMode {
    /// Visit each shard candidate once, in id order.
    Sequential,
    /// Draw this many anchors uniformly from the shard's candidates.
    RandomSample(usize),
}

#[derive(Clone, Debug)]
pub struct PassConfig {
    pub pid: usize,
    pub nproc: usize,
    pub pass_count: usize,
    pub template: &'static RewriteTemplate,
    pub mode: ScanMode,
    pub search: Search,
    pub stop: Option<Instant>,
    pub seed: u64,
}

impl PassConfig {
    pub fn single(template: &'static RewriteTemplate) -> PassConfig {
        PassConfig {
            pid: 0,
            nproc: 1,
            pass_count: 1,
            template,
            mode: ScanMode::Sequential,
            search: Search::Indexed,
            stop: None,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nproc == 0 || self.pid >= self.nproc || self.pass_count == 0 {
            return Err(StoreError::InvalidGate(format!(
                "invalid pass config: pid {} of {}, {} passes",
                self.pid, self.nproc, self.pass_count
            )));
        }
        Ok(())
    }
}

/// Counters and search / rewrite / communication split of one worker's run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PassReport {
    pub passes: usize,
    pub candidates: u64,
    pub matches: u64,
    pub lock_failures: u64,
    pub stale: u64,
    pub rewrites: u64,
    #[serde(serialize_with = "secs")]
    pub search: Duration,
    #[serde(serialize_with = "secs")]
    pub rewrite: Duration,
    #[serde(serialize_with = "secs")]
    pub comm: Duration,
    #[serde(serialize_with = "secs")]
    pub wall: Duration,
}

pub(crate) fn secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl PassReport {
    /// Sum of counters; durations take the slowest worker's wall clock and
    /// sum the buckets.
    pub fn merge(reports: &[PassReport]) -> PassReport {
        let mut m = PassReport::default();
        for r in reports {
            m.passes = m.passes.max(r.passes);
            m.candidates += r.candidates;
            m.matches += r.matches;
            m.lock_failures += r.lock_failures;
            m.stale += r.stale;
            m.rewrites += r.rewrites;
            m.search += r.search;
            m.rewrite += r.rewrite;
            m.comm += r.comm;
            m.wall = m.wall.max(r.wall);
        }
        m
    }

    pub fn bucket_total(&self) -> Duration {
        self.search + self.rewrite + self.comm
    }

    /// |S + R + C - wall| / wall.
    pub fn reconciliation_error(&self) -> f64 {
        let wall = self.wall.as_secs_f64();
        if wall == 0.0 {
            return 0.0;
        }
        (self.bucket_total().as_secs_f64() - wall).abs() / wall
    }
}

/// Candidates released from one view before the read latch is dropped, so
/// committing workers are never starved by a long scan.
const VIEW_CHUNK: usize = 512;

fn shard_candidates(view: &TableView<'_>, cfg: &PassConfig) -> Vec<GateId> {
    let owned = |id: &GateId| id.0 % cfg.nproc as u64 == cfg.pid as u64;
    match cfg.search {
        Search::Indexed => {
            let mut ids: Vec<GateId> = cfg
                .template
                .anchor_types
                .iter()
                .flat_map(|t| view.ids_of_type(*t).iter().copied())
                .filter(owned)
                .collect();
            ids.sort_unstable();
            ids
        }
        Search::FullScan => (cfg.pid as u64..view.id_bound())
            .step_by(cfg.nproc)
            .map(GateId)
            .collect(),
    }
}

/// Runs `cfg.pass_count` passes (or until `cfg.stop`) of one worker.
pub fn run_pass(table: &CircuitTable, cfg: &PassConfig) -> Result<PassReport> {
    cfg.validate()?;
    let started = Instant::now();
    let mut report = PassReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (cfg.pid as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut timing = ApplyTiming::default();
    let mut mark = started;
    let past_deadline = || cfg.stop.is_some_and(|d| Instant::now() >= d);

    'passes: for _ in 0..cfg.pass_count {
        if past_deadline() {
            break;
        }
        report.passes += 1;
        let shard = shard_candidates(&table.view(), cfg);
        let order: Vec<GateId> = match cfg.mode {
            ScanMode::Sequential => shard,
            ScanMode::RandomSample(_) if shard.is_empty() => Vec::new(),
            ScanMode::RandomSample(k) => (0..k).map(|_| shard[rng.gen_range(0..shard.len())]).collect(),
        };
        let mut pos = 0;
        while pos < order.len() {
            let found = {
                let view = table.view();
                let mut found = None;
                let end = (pos + VIEW_CHUNK).min(order.len());
                while pos < end {
                    let id = order[pos];
                    pos += 1;
                    let Some(rec) = view.get(id) else { continue };
                    if cfg.search == Search::FullScan && !cfg.template.anchor_types.contains(&rec.gate_type) {
                        continue;
                    }
                    report.candidates += 1;
                    if let Some(plan) = cfg.template.find(&view, rec) {
                        found = Some((id, plan));
                        break;
                    }
                }
                found
            };
            let Some((anchor, plan)) = found else {
                if past_deadline() {
                    break 'passes;
                }
                continue;
            };
            let now = Instant::now();
            timing.search += now - mark;
            report.matches += 1;
            match apply_plan(table, cfg.template, anchor, &plan, &mut timing)? {
                Outcome::Applied => report.rewrites += 1,
                Outcome::LockFailed => report.lock_failures += 1,
                Outcome::Stale => report.stale += 1,
                Outcome::NoMatch => {}
            }
            mark = Instant::now();
            if past_deadline() {
                break 'passes;
            }
        }
    }
    let end = Instant::now();
    timing.search += end - mark;
    report.search = timing.search;
    report.rewrite = timing.rewrite;
    report.comm = timing.lock;
    report.wall = end - started;
    Ok(report)
}

/// Runs `nproc` workers of the same configuration, one OS thread per pid.
pub fn run_parallel(table: &CircuitTable, base: &PassConfig, nproc: usize) -> Result<Vec<PassReport>> {
    assert!(nproc >= 1, "at least one worker");
    thread::scope(|s| {
        let handles: Vec<_> = (0..nproc)
            .map(|pid| {
                let cfg = PassConfig { pid, nproc, ..base.clone() };
                s.spawn(move || run_pass(table, &cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Gate counts by type at one instant of a portfolio run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountSample {
    #[serde(serialize_with = "secs")]
    pub at: Duration,
    pub counts: [usize; GateType::COUNT],
}

impl CountSample {
    pub fn of(&self, t: GateType) -> usize {
        self.counts[t.index()]
    }

    pub fn t_count(&self) -> usize {
        self.of(GateType::T) + self.of(GateType::Tdg)
    }
}

#[derive(Clone, Debug)]
pub struct PortfolioConfig {
    pub templates: Vec<&'static RewriteTemplate>,
    pub threads: usize,
    pub duration: Duration,
    pub sample_every: Duration,
    pub seed: u64,
    /// Misses in a row after which a worker scans its whole candidate set to
    /// confirm it has nothing left to do.
    pub idle_after: usize,
}

impl PortfolioConfig {
    pub fn new(templates: Vec<&'static RewriteTemplate>, threads: usize, duration: Duration) -> PortfolioConfig {
        PortfolioConfig {
            templates,
            threads,
            duration,
            sample_every: Duration::from_millis(100),
            seed: 0,
            idle_after: 256,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PortfolioReport {
    pub samples: Vec<CountSample>,
    /// Rewrites applied per template, in configuration order.
    pub rewrites: Vec<u64>,
    pub lock_failures: u64,
    /// True if the run ended because no template had a site left.
    pub quiescent: bool,
    pub elapsed: Duration,
}

struct Shared<'a> {
    table: &'a CircuitTable,
    epoch: AtomicU64,
    idle_at: Vec<AtomicU64>,
    stop: AtomicBool,
    deadline: Instant,
}

const NOT_IDLE: u64 = u64::MAX;

impl Shared<'_> {
    fn all_idle(&self) -> bool {
        let e = self.epoch.load(Ordering::SeqCst);
        self.idle_at.iter().all(|i| i.load(Ordering::SeqCst) == e)
    }

    fn finished(&self) -> bool {
        self.stop.load(Ordering::Relaxed) || Instant::now() >= self.deadline
    }
}

fn draw_anchor(table: &CircuitTable, tpl: &RewriteTemplate, rng: &mut ChaCha8Rng) -> Option<GateId> {
    let view = table.view();
    let total: usize = tpl.anchor_types.iter().map(|t| view.ids_of_type(*t).len()).sum();
    if total == 0 {
        return None;
    }
    let mut k = rng.gen_range(0..total);
    for t in tpl.anchor_types {
        let ids = view.ids_of_type(*t);
        if k < ids.len() {
            return Some(ids[k]);
        }
        k -= ids.len();
    }
    None
}

/// Applies every match the full candidate set offers; returns (applied, lock failures).
fn sweep(shared: &Shared<'_>, tpl: &'static RewriteTemplate, timing: &mut ApplyTiming) -> Result<(u64, u64)> {
    let cfg = PassConfig::single(tpl);
    let ids = shard_candidates(&shared.table.view(), &cfg);
    let (mut applied, mut failed) = (0, 0);
    for id in ids {
        if shared.finished() {
            break;
        }
        let plan = tpl.find_at(&shared.table.view(), id);
        if let Some(plan) = plan {
            match apply_plan(shared.table, tpl, id, &plan, timing)? {
                Outcome::Applied => {
                    applied += 1;
                    shared.epoch.fetch_add(1, Ordering::SeqCst);
                }
                Outcome::LockFailed | Outcome::Stale => failed += 1,
                Outcome::NoMatch => {}
            }
        }
    }
    Ok((applied, failed))
}

fn portfolio_worker(
    shared: &Shared<'_>,
    me: usize,
    tpl: &'static RewriteTemplate,
    seed: u64,
    idle_after: usize,
) -> Result<(u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut timing = ApplyTiming::default();
    let (mut applied, mut failed) = (0u64, 0u64);
    let mut misses = 0usize;
    while !shared.finished() {
        if misses >= idle_after {
            let epoch = shared.epoch.load(Ordering::SeqCst);
            let (a, f) = sweep(shared, tpl, &mut timing)?;
            applied += a;
            failed += f;
            misses = 0;
            if a == 0 && f == 0 {
                shared.idle_at[me].store(epoch, Ordering::SeqCst);
                if shared.all_idle() {
                    shared.stop.store(true, Ordering::SeqCst);
                    break;
                }
                // nothing to do until another worker changes the circuit
                while !shared.finished() && shared.epoch.load(Ordering::SeqCst) == epoch {
                    if shared.all_idle() {
                        shared.stop.store(true, Ordering::SeqCst);
                        break;
                    }
                    thread::sleep(Duration::from_micros(200));
                }
                if shared.stop.load(Ordering::SeqCst) {
                    break;
                }
                shared.idle_at[me].store(NOT_IDLE, Ordering::SeqCst);
            }
            continue;
        }
        let Some(anchor) = draw_anchor(shared.table, tpl, &mut rng) else {
            misses = idle_after;
            continue;
        };
        let plan = tpl.find_at(&shared.table.view(), anchor);
        match plan {
            None => misses += 1,
            Some(plan) => match apply_plan(shared.table, tpl, anchor, &plan, &mut timing)? {
                Outcome::Applied => {
                    applied += 1;
                    misses = 0;
                    shared.epoch.fetch_add(1, Ordering::SeqCst);
                }
                Outcome::LockFailed | Outcome::Stale => {
                    failed += 1;
                    misses += 1;
                }
                Outcome::NoMatch => misses += 1,
            },
        }
    }
    Ok((applied, failed))
}

/// Runs one thread per slot, thread `i` repeatedly sampling anchors for
/// template `i mod templates.len()`, until the duration elapses or every
/// thread has confirmed by a full sweep that its template has no site left.
/// Gate counts by type are sampled periodically.
pub fn run_portfolio(table: &CircuitTable, cfg: &PortfolioConfig) -> Result<PortfolioReport> {
    assert!(!cfg.templates.is_empty() && cfg.threads >= 1, "need templates and threads");
    let start = Instant::now();
    let shared = Shared {
        table,
        epoch: AtomicU64::new(0),
        idle_at: (0..cfg.threads).map(|_| AtomicU64::new(NOT_IDLE)).collect(),
        stop: AtomicBool::new(false),
        deadline: start + cfg.duration,
    };
    let samples = Mutex::new(vec![CountSample { at: Duration::ZERO, counts: table.counts_by_type() }]);
    let results: Vec<Result<(u64, u64)>> = thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|i| {
                let tpl = cfg.templates[i % cfg.templates.len()];
                let seed = cfg.seed.wrapping_add(i as u64 + 1).wrapping_mul(0x2545_F491_4F6C_DD1D);
                let shared = &shared;
                s.spawn(move || {
                    let r = portfolio_worker(shared, i, tpl, seed, cfg.idle_after);
                    if r.is_err() {
                        shared.stop.store(true, Ordering::SeqCst);
                    }
                    r
                })
            })
            .collect();
        while !shared.finished() && !handles.iter().all(|h| h.is_finished()) {
            thread::sleep(cfg.sample_every.min(Duration::from_millis(5)).max(Duration::from_micros(100)));
            let mut samples = samples.lock().expect("sampler");
            if start.elapsed() >= samples.last().map(|s| s.at).unwrap_or_default() + cfg.sample_every {
                samples.push(CountSample { at: start.elapsed(), counts: table.counts_by_type() });
            }
        }
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let elapsed = start.elapsed();
    let mut samples = samples.into_inner().expect("sampler");
    samples.push(CountSample { at: elapsed, counts: table.counts_by_type() });
    let mut rewrites = vec![0u64; cfg.templates.len()];
    let mut lock_failures = 0;
    for (i, r) in results.into_iter().enumerate() {
        let (a, f) = r?;
        rewrites[i % cfg.templates.len()] += a;
        lock_failures += f;
    }
    Ok(PortfolioReport {
        samples,
        rewrites,
        lock_failures,
        quiescent: shared.all_idle() && shared.stop.load(Ordering::SeqCst),
        elapsed,
    })
}
