use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qrewrite::equiv::{check_equivalence, EquivConfig, Verdict};
use qrewrite::executor::{run_parallel, run_portfolio, PassConfig, PassReport, PortfolioConfig, Search};
use qrewrite::partition::{
    extract_partition, partition_edge_file, write_edge_file, Manifest, ManifestEntry, PartitionConstraints,
};
use qrewrite::perf::{run_scaling_benchmark, run_utility_benchmark, write_csv};
use qrewrite::qasm::{write_qasm, QasmReader};
use qrewrite::store::{load_native_file, save_native_file};
use qrewrite::templates::parse_rules;
use qrewrite::transpile::{transpile_stream, Target, TranspileConfig};
use qrewrite::{CircuitTable, Database, GateType};

#[derive(Parser)]
#[command(name = "qrw", version, about = "Transactional quantum circuit rewrite engine")]
struct Cli {
    /// Snapshot directory.
    #[arg(long, global = true, default_value = ".qrw")]
    db: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a QASM or native file into the database.
    Ingest(IngestArgs),
    /// Write a stored circuit as QASM or native text.
    Export(ExportArgs),
    /// Apply rewrite rules to a stored circuit.
    Rewrite(RewriteArgs),
    /// Split a stored circuit into bounded partitions.
    Partition(PartitionArgs),
    /// Decide whether two QASM circuits implement the same unitary.
    CheckEquiv(EquivArgs),
    #[command(subcommand)]
    Bench(Bench),
    /// Run the full consistency check on a stored circuit.
    Audit {
        #[arg(long)]
        label: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum IngestTarget {
    CliffordT,
    CliffordRz,
    /// Insert gates as written.
    Keep,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    label: String,
    #[arg(long, value_enum, default_value = "keep")]
    target: IngestTarget,
    #[arg(long, default_value_t = 100_000)]
    batch: usize,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    label: String,
    /// `.qasm` writes QASM, anything else the native format.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RewriteArgs {
    #[arg(long)]
    label: String,
    /// Comma-separated rule names, e.g. `a,b,g-rev`.
    #[arg(long)]
    rules: String,
    /// Portfolio run time limit.
    #[arg(long, default_value = "10s", value_parser = humantime::parse_duration)]
    duration: Duration,
    /// One sharded pass per rule instead of a portfolio run.
    #[arg(long)]
    single_pass: bool,
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long)]
    label: String,
    #[arg(long)]
    max_gates: Option<u32>,
    #[arg(long = "max-t")]
    max_t: Option<u32>,
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long, default_value_t = 1_000_000)]
    batch: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EquivArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, value_parser = humantime::parse_duration)]
    timeout: Option<Duration>,
    /// Rule set; defaults to a,b,e,f,c,d.
    #[arg(long)]
    rules: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchArg {
    Indexed,
    FullScan,
}

#[derive(Subcommand)]
enum Bench {
    /// Indexed search against the linear-scan baseline.
    Utility {
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        sizes: Vec<usize>,
        #[arg(long = "p-r", value_delimiter = ',', default_value = "0.001,0.01,0.1")]
        p_r: Vec<f64>,
        #[arg(long, default_value_t = 16)]
        qubits: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rule-g pass time per thread count.
    Scaling {
        #[arg(long, default_value_t = 100_000)]
        gates: usize,
        #[arg(long = "p-r", default_value_t = 0.1)]
        p_r: f64,
        #[arg(long = "thread-counts", value_delimiter = ',', default_value = "1,2,4,8")]
        thread_counts: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        qubits: u32,
        #[arg(long, value_enum, default_value = "indexed")]
        search: SearchArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn threads(cli: &Cli) -> usize {
    cli.threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn is_qasm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("qasm"))
}

fn open_qasm(path: &Path) -> anyhow::Result<QasmReader<BufReader<File>>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    QasmReader::new(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn load_qasm(path: &Path, label: &str) -> anyhow::Result<CircuitTable> {
    let reader = open_qasm(path)?;
    let table = CircuitTable::new(label, reader.num_qubits())?;
    table.insert_all(reader.collect::<Result<Vec<_>, _>>()?, 1 << 16, None)?;
    Ok(table)
}

fn counts_json(table: &CircuitTable) -> serde_json::Value {
    let counts = table.counts_by_type();
    let by_type: serde_json::Map<String, serde_json::Value> = GateType::ALL
        .iter()
        .filter(|t| !t.is_boundary() && counts[t.index()] > 0)
        .map(|t| (t.name().to_string(), json!(counts[t.index()])))
        .collect();
    json!({ "gates": table.gate_count(), "by_type": by_type })
}

fn ingest(db: &Database, args: &IngestArgs) -> anyhow::Result<()> {
    if is_qasm(&args.input) {
        let reader = open_qasm(&args.input)?;
        let table = db.create_circuit(&args.label, reader.num_qubits())?;
        let target = match args.target {
            IngestTarget::CliffordT => Some(Target::CliffordT),
            IngestTarget::CliffordRz => Some(Target::CliffordRz),
            IngestTarget::Keep => None,
        };
        let stats = match target {
            Some(target) => serde_json::to_value(transpile_stream(&table, reader, &TranspileConfig::new(target, args.batch))?)?,
            None => {
                let mut ops = Vec::new();
                let mut n = 0;
                for op in reader {
                    ops.push(op?);
                    if ops.len() == args.batch {
                        n += table.insert_batch(&ops)?;
                        ops.clear();
                    }
                }
                n += table.insert_batch(&ops)?;
                json!({ "gates_in": n, "gates_out": n })
            }
        };
        db.persist(&args.label)?;
        print_json(&json!({ "label": args.label, "qubits": table.num_qubits(), "ingest": stats }))
    } else {
        let loaded = load_native_file(&args.input)?;
        let table = if loaded.label() == args.label { loaded } else { loaded.duplicate(&args.label)? };
        let table = db.insert(table)?;
        db.persist(&args.label)?;
        print_json(&json!({ "label": args.label, "qubits": table.num_qubits(), "circuit": counts_json(&table) }))
    }
}

fn export(db: &Database, args: &ExportArgs) -> anyhow::Result<()> {
    let table = db.get(&args.label)?;
    if is_qasm(&args.out) {
        let mut w = BufWriter::new(File::create(&args.out)?);
        write_qasm(&table, &mut w, 1 << 16)?;
        w.flush()?;
    } else {
        save_native_file(&table, &args.out)?;
    }
    Ok(())
}

fn rewrite(db: &Database, args: &RewriteArgs, seed: u64, threads: usize) -> anyhow::Result<()> {
    let rules = parse_rules(&args.rules).map_err(anyhow::Error::msg)?;
    if rules.is_empty() {
        bail!("no rules given");
    }
    let table = db.get(&args.label)?;
    let before = counts_json(&table);
    let summary = if args.single_pass {
        let mut per_rule = serde_json::Map::new();
        for tpl in &rules {
            let cfg = PassConfig { seed, ..PassConfig::single(tpl) };
            let merged = PassReport::merge(&run_parallel(&table, &cfg, threads)?);
            per_rule.insert(tpl.name.to_string(), serde_json::to_value(merged)?);
        }
        json!({ "passes": per_rule })
    } else {
        let cfg = PortfolioConfig { seed, ..PortfolioConfig::new(rules.clone(), threads, args.duration) };
        let report = run_portfolio(&table, &cfg)?;
        let per_rule: serde_json::Map<String, serde_json::Value> =
            rules.iter().zip(&report.rewrites).map(|(t, n)| (t.name.to_string(), json!(n))).collect();
        json!({
            "rewrites": per_rule,
            "lock_failures": report.lock_failures,
            "quiescent": report.quiescent,
            "seconds": report.elapsed.as_secs_f64(),
        })
    };
    table.audit()?;
    db.persist(&args.label)?;
    print_json(&json!({ "label": args.label, "threads": threads, "before": before, "after": counts_json(&table), "run": summary }))
}

fn partition(db: &Database, args: &PartitionArgs) -> anyhow::Result<()> {
    let table = db.get(&args.label)?;
    let constraints = PartitionConstraints::new(args.max_gates, args.max_t, args.max_depth)?;
    std::fs::create_dir_all(&args.out)?;
    let edge_path = args.out.join("edges.bin");
    write_edge_file(&table, &edge_path)?;
    let parts = partition_edge_file(&edge_path, constraints, args.batch)?;
    let mut manifest = Manifest::new(&args.label, table.num_qubits(), constraints);
    for p in &parts {
        let file = format!("part-{:06}.csv", p.id);
        let sub = extract_partition(&table, p, &format!("{}-{}", args.label, p.id))?;
        save_native_file(&sub, &args.out.join(&file))?;
        manifest.partitions.push(ManifestEntry::new(p, file));
    }
    let w = BufWriter::new(File::create(args.out.join("manifest.json"))?);
    serde_json::to_writer_pretty(w, &manifest)?;
    print_json(&json!({ "label": args.label, "partitions": parts.len(), "gates": table.gate_count() }))
}

fn check_equiv(args: &EquivArgs) -> anyhow::Result<Verdict> {
    let c1 = load_qasm(&args.a, "a")?;
    let c2 = load_qasm(&args.b, "b")?;
    let mut cfg = EquivConfig { timeout: args.timeout, ..EquivConfig::default() };
    if let Some(rules) = &args.rules {
        cfg.templates = parse_rules(rules).map_err(anyhow::Error::msg)?;
    }
    let report = check_equivalence(&c1, &c2, &cfg)?;
    print_json(&report)?;
    Ok(report.verdict)
}

fn csv_out(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn bench(b: &Bench, seed: u64) -> anyhow::Result<()> {
    match b {
        Bench::Utility { sizes, p_r, qubits, out } => {
            let rows = run_utility_benchmark(sizes, p_r, *qubits, seed)?;
            write_csv(&rows, csv_out(out)?)
        }
        Bench::Scaling { gates, p_r, thread_counts, qubits, search, out } => {
            let search = match search {
                SearchArg::Indexed => Search::Indexed,
                SearchArg::FullScan => Search::FullScan,
            };
            let rows = run_scaling_benchmark(*gates, *p_r, thread_counts, *qubits, search, seed)?;
            write_csv(&rows, csv_out(out)?)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    let threads = threads(cli);
    match &cli.command {
        Command::CheckEquiv(args) => {
            return Ok(match check_equiv(args)? {
                Verdict::Equivalent => ExitCode::from(0),
                Verdict::NotEquivalent => ExitCode::from(1),
                Verdict::Unknown => ExitCode::from(2),
            })
        }
        Command::Bench(b) => bench(b, cli.seed)?,
        Command::Ingest(args) => ingest(&Database::open(&cli.db)?, args)?,
        Command::Export(args) => export(&Database::open(&cli.db)?, args)?,
        Command::Rewrite(args) => rewrite(&Database::open(&cli.db)?, args, cli.seed, threads)?,
        Command::Partition(args) => partition(&Database::open(&cli.db)?, args)?,
        Command::Audit { label } => {
            let db = Database::open(&cli.db)?;
            let table = db.get(label)?;
            match table.audit() {
                Ok(r) => print_json(&json!({ "label": label, "ok": true, "rows": r.rows, "gates": r.gates, "qubits": r.qubits }))?,
                Err(e) => {
                    print_json(&json!({ "label": label, "ok": false, "error": e.to_string() }))?;
                    return Ok(ExitCode::from(1));
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
