//! Command line front end: run simulations, check cluster covers, compare
//! greedy coloring with the exact oracle, and sweep seeds in parallel.

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use shardsim::config::{RunConfig, SEED_ENV};
use shardsim::conflict::Granularity;
use shardsim::cover::{verify_cover, CoverHierarchy, CoverParams};
use shardsim::graph::{ShardGraph, Topology};
use shardsim::metrics::{aggregate, snapshots, verify_liveness, verify_safety, SnapshotRow};
use shardsim::oracle::{greedy_vs_optimal, PendingSnapshot, MAX_ORACLE_VERTICES};
use shardsim::sched::{run_sim, Algo, RunOutput, RunSetup};
use shardsim::trace::RunTrace;
use shardsim::workload::reduction_instance;
use shardsim::{Error, Result};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "shardsim", version, about = "Dynamic transaction scheduling across shards")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configured simulation; write txns.csv, metrics.csv, summary.json.
    Run {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config file seed and SHARDSIM_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; beats [output].dir in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the event trace as trace.jsonl.
        #[arg(long)]
        emit_trace: bool,
    },
    /// Build the cluster hierarchy for a topology and check its properties.
    VerifyCover {
        /// clique, line, grid or random-metric.
        #[arg(long)]
        kind: String,
        /// Shard count for clique, line and random-metric.
        #[arg(long)]
        shards: Option<usize>,
        /// Edge weight for clique, line and grid.
        #[arg(long, default_value_t = 1)]
        weight: u64,
        /// Grid rows.
        #[arg(long)]
        rows: Option<usize>,
        /// Grid columns.
        #[arg(long)]
        cols: Option<usize>,
        /// Placement seed for random-metric.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        c_diam: u64,
        #[arg(long, default_value_t = 4)]
        c_sub: u32,
        /// Print every cluster as one line.
        #[arg(long)]
        dump: bool,
    },
    /// Greedy coloring against the exact chromatic number.
    OracleCompare {
        /// Edge-list file, one "u v" pair per line; runs that one instance.
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Vertex count override for --edges (default: highest endpoint + 1).
        #[arg(long)]
        vertices: Option<usize>,
        /// Random instances: vertex count.
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Random instances: how many.
        #[arg(long, default_value_t = 20)]
        count: u64,
        /// Random instances: edge probability.
        #[arg(long, default_value_t = 0.3)]
        edge_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run algorithms over a seed range in parallel; write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// How many seeds, counting up from --seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated algorithms; default is all four.
        #[arg(long)]
        algos: Option<String>,
        /// Output directory; beats [output].dir in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::Run {
            config,
            seed,
            out,
            emit_trace,
        } => cmd_run(&config, seed, out, emit_trace),
        Cmd::VerifyCover {
            kind,
            shards,
            weight,
            rows,
            cols,
            seed,
            c_diam,
            c_sub,
            dump,
        } => {
            let topo = topology_from_flags(&kind, shards, weight, rows, cols, seed)?;
            cmd_verify_cover(&topo, CoverParams { c_diam, c_sub }, dump)
        }
        Cmd::OracleCompare {
            edges,
            vertices,
            n,
            count,
            edge_prob,
            seed,
        } => match edges {
            Some(path) => cmd_oracle_file(&path, vertices),
            None => cmd_oracle_random(n, count, edge_prob, seed),
        },
        Cmd::Sweep {
            config,
            seeds,
            seed,
            algos,
            out,
        } => cmd_sweep(&config, seed, seeds, algos.as_deref(), out),
    }
}

#[derive(Serialize)]
struct TxnRow {
    txn_id: u64,
    home: usize,
    ts: u64,
    schedule_time: Option<u64>,
    finalize_time: Option<u64>,
    outcome: &'static str,
    n_dests: usize,
    max_dist: u64,
}

fn write_txns_csv(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in trace.txns.values() {
        w.serialize(TxnRow {
            txn_id: rec.txn.0,
            home: rec.home.0,
            ts: rec.ts,
            schedule_time: rec.schedule_time,
            finalize_time: rec.finalize_time,
            outcome: match rec.committed {
                Some(true) => "commit",
                Some(false) => "abort",
                None => "unresolved",
            },
            n_dests: rec.n_dests,
            max_dist: rec.max_dist,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn write_metrics_csv(path: &Path, rows: &[SnapshotRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace_jsonl(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in &trace.events {
        let line = serde_json::to_string(e).expect("trace events serialize");
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}

fn cmd_run(config: &Path, seed: Option<u64>, out: Option<PathBuf>, emit_trace: bool) -> Result<u8> {
    let cfg = RunConfig::load(config)?;
    let env = std::env::var(SEED_ENV).ok();
    let seed = cfg.resolve_seed(seed, env.as_deref())?;
    let setup = cfg.setup(seed);
    let g = ShardGraph::build(&cfg.topology)?;
    let run = run_sim(&g, &setup)?;

    let rows = snapshots(
        &run.trace,
        &run.bodies,
        setup.granularity,
        setup.algo.is_stateful(),
        run.ticks,
    );
    let stats = aggregate(&run.trace, &rows);
    let safety = verify_safety(&run.trace, &run.bodies, setup.granularity);
    let unresolved = verify_liveness(&run.trace);
    let hash = run.trace.hash();

    let dir = out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    write_txns_csv(&dir.join("txns.csv"), &run.trace)?;
    write_metrics_csv(&dir.join("metrics.csv"), &rows)?;
    if emit_trace || cfg.output.emit_trace {
        write_trace_jsonl(&dir.join("trace.jsonl"), &run.trace)?;
    }
    let summary = serde_json::json!({
        "algo": setup.algo.name(),
        "seed": seed,
        "shards": g.n_shards(),
        "ticks": run.ticks,
        "truncated": run.truncated,
        "stats": stats,
        "safety_pass": safety.pass(),
        "unresolved": unresolved.len(),
        "trace_hash": hash,
    });
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;

    println!(
        "{} seed {}: {} txns, {} committed, {} aborted in {} ticks",
        setup.algo.name(),
        seed,
        stats.n_txns,
        stats.commits,
        stats.aborts,
        run.ticks
    );
    println!(
        "latency mean {:.1} max {}, ratio mean {:.2} max {:.2}",
        stats.mean_latency, stats.max_latency, stats.mean_ratio, stats.max_ratio
    );
    if safety.pass() {
        println!("safety: ok");
    } else {
        for line in safety.lines() {
            println!("safety: {line}");
        }
    }
    if unresolved.is_empty() {
        println!("liveness: ok");
    } else {
        println!("liveness: {} unresolved", unresolved.len());
    }
    if run.truncated {
        println!("warning: horizon cut the run short at tick {}", run.ticks);
    }
    println!("trace {hash}");
    println!("wrote {}", dir.display());

    let ok = safety.pass() && unresolved.is_empty() && !run.truncated;
    Ok(if ok { 0 } else { 1 })
}

fn topology_from_flags(
    kind: &str,
    shards: Option<usize>,
    weight: u64,
    rows: Option<usize>,
    cols: Option<usize>,
    seed: u64,
) -> Result<Topology> {
    let need_shards = || shards.ok_or_else(|| Error::Usage(format!("--kind {kind} needs --shards")));
    match kind {
        "clique" => Ok(Topology::Clique {
            s: need_shards()?,
            w: weight,
        }),
        "line" => Ok(Topology::Line {
            s: need_shards()?,
            w: weight,
        }),
        "grid" => {
            let (Some(a), Some(b)) = (rows, cols) else {
                return Err(Error::Usage("--kind grid needs --rows and --cols".into()));
            };
            Ok(Topology::Grid { a, b, w: weight })
        }
        "random-metric" => Ok(Topology::RandomMetric {
            s: need_shards()?,
            seed,
        }),
        other => Err(Error::Usage(format!(
            "unknown topology kind {other:?}; expected clique, line, grid or random-metric"
        ))),
    }
}

fn cmd_verify_cover(topo: &Topology, params: CoverParams, dump: bool) -> Result<u8> {
    let g = ShardGraph::build(topo)?;
    let h = CoverHierarchy::build(&g, params)?;
    if dump {
        print!("{}", h.dump());
    }
    println!(
        "{} shards, diameter {}, {} clusters over {} layers",
        g.n_shards(),
        g.diameter(),
        h.clusters().len(),
        h.n_layers()
    );
    let report = verify_cover(&g, &h);
    for line in report.lines() {
        println!("{line}");
    }
    Ok(if report.pass() { 0 } else { 1 })
}

fn load_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = std::fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Usage(format!("{}:{}: expected \"u v\"", path.display(), i + 1));
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        let a: usize = a.parse().map_err(|_| bad())?;
        let b: usize = b.parse().map_err(|_| bad())?;
        edges.push((a, b));
    }
    Ok(edges)
}

fn compare_one(label: &str, n: usize, edges: &[(usize, usize)]) -> Result<bool> {
    let inst = reduction_instance(n, edges)?;
    let snap = PendingSnapshot::new(Granularity::Shard, inst.txns);
    let cmp = greedy_vs_optimal(&snap)?;
    let ok = cmp.sandwich_holds();
    println!(
        "{label}: n={} m={} greedy={} chi={} max_degree+1={} {}",
        cmp.n,
        cmp.m,
        cmp.greedy,
        cmp.chi,
        cmp.max_degree + 1,
        if ok { "ok" } else { "VIOLATION" }
    );
    Ok(ok)
}

fn cmd_oracle_file(path: &Path, vertices: Option<usize>) -> Result<u8> {
    let edges = load_edges(path)?;
    let max_endpoint = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    let n = vertices.unwrap_or(max_endpoint);
    if n == 0 {
        return Err(Error::Usage("empty instance; pass --vertices".into()));
    }
    let ok = compare_one(&path.display().to_string(), n, &edges)?;
    Ok(if ok { 0 } else { 1 })
}

fn cmd_oracle_random(n: usize, count: u64, edge_prob: f64, seed: u64) -> Result<u8> {
    use rand::{Rng, SeedableRng};
    if n > MAX_ORACLE_VERTICES {
        return Err(Error::Usage(format!(
            "exact search is capped at {MAX_ORACLE_VERTICES} vertices, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Usage("edge probability must be in [0, 1]".into()));
    }
    let mut all_ok = true;
    for i in 0..count {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random_bool(edge_prob) {
                    edges.push((a, b));
                }
            }
        }
        all_ok &= compare_one(&format!("graph {i}"), n, &edges)?;
    }
    println!(
        "{count} instances on {n} vertices: {}",
        if all_ok { "all ok" } else { "VIOLATIONS" }
    );
    Ok(if all_ok { 0 } else { 1 })
}

#[derive(Serialize)]
struct SweepRow {
    algo: &'static str,
    seed: u64,
    n_txns: usize,
    commits: usize,
    aborts: usize,
    unresolved: usize,
    makespan: u64,
    mean_latency: f64,
    max_latency: u64,
    mean_ratio: f64,
    max_ratio: f64,
    safety_pass: bool,
    truncated: bool,
    trace_hash: String,
}

fn sweep_one(g: &ShardGraph, setup: &RunSetup) -> Result<SweepRow> {
    let run: RunOutput = run_sim(g, setup)?;
    let rows = snapshots(
        &run.trace,
        &run.bodies,
        setup.granularity,
        setup.algo.is_stateful(),
        run.ticks,
    );
    let stats = aggregate(&run.trace, &rows);
    let safety = verify_safety(&run.trace, &run.bodies, setup.granularity);
    Ok(SweepRow {
        algo: setup.algo.name(),
        seed: setup.seed,
        n_txns: stats.n_txns,
        commits: stats.commits,
        aborts: stats.aborts,
        unresolved: stats.unresolved,
        makespan: stats.makespan,
        mean_latency: stats.mean_latency,
        max_latency: stats.max_latency,
        mean_ratio: stats.mean_ratio,
        max_ratio: stats.max_ratio,
        safety_pass: safety.pass(),
        truncated: run.truncated,
        trace_hash: run.trace.hash(),
    })
}

fn parse_algos(s: &str) -> Result<Vec<Algo>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            serde_json::from_value(serde_json::Value::String(p.to_string()))
                .map_err(|_| Error::Usage(format!("unknown algorithm {p:?}")))
        })
        .collect()
}

fn cmd_sweep(
    config: &Path,
    first_seed: u64,
    seeds: u64,
    algos: Option<&str>,
    out: Option<PathBuf>,
) -> Result<u8> {
    let cfg = RunConfig::load(config)?;
    if seeds == 0 {
        return Err(Error::Usage("--seeds must be at least 1".into()));
    }
    let algos = match algos {
        Some(s) => parse_algos(s)?,
        None => Algo::all().to_vec(),
    };
    let g = ShardGraph::build(&cfg.topology)?;

    let jobs: Vec<(Algo, u64)> = algos
        .iter()
        .flat_map(|&a| (0..seeds).map(move |i| (a, first_seed + i)))
        .collect();
    let rows: Result<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(algo, seed)| {
            let mut setup = cfg.setup(seed);
            setup.algo = algo;
            sweep_one(&g, &setup)
        })
        .collect();
    let rows = rows?;

    let dir = out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let csv_path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;

    let mut all_ok = true;
    for &algo in &algos {
        let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.algo == algo.name()).collect();
        let ok = mine
            .iter()
            .all(|r| r.safety_pass && r.unresolved == 0 && !r.truncated);
        all_ok &= ok;
        let mean = |f: fn(&SweepRow) -> f64| {
            mine.iter().map(|r| f(r)).sum::<f64>() / mine.len() as f64
        };
        println!(
            "{}: {} runs, mean makespan {:.0}, mean latency {:.1}, max ratio {:.2}{}",
            algo.name(),
            mine.len(),
            mean(|r| r.makespan as f64),
            mean(|r| r.mean_latency),
            mine.iter().map(|r| r.max_ratio).fold(0.0, f64::max),
            if ok { "" } else { " [FAILURES]" }
        );
    }
    println!("wrote {}", csv_path.display());
    Ok(if all_ok { 0 } else { 1 })
}
