//! Acceptance suite: one check per advertised guarantee. Each check prints
//! a single [PASS]/[FAIL] line with a measured detail; the test fails if
//! any check fails. Run with `-- --nocapture` to see the report on success.

use rayon::prelude::*;
use shardsim::conflict::{Access, AccountId, DestOps, Granularity, Transaction, TxnId};
use shardsim::cover::{verify_cover, ClusterId, CoverHierarchy, CoverParams, Height};
use shardsim::graph::{ShardGraph, ShardId, Topology};
use shardsim::metrics::{snapshots, verify_safety};
use shardsim::oracle::{greedy_vs_optimal, PendingSnapshot};
use shardsim::sched::{run_sim, Algo, PriorityKey, RunSetup};
use shardsim::sim::{DelayModel, FaultPlan};
use shardsim::trace::{RunTrace, TraceEvent};
use shardsim::workload::{reduction_instance, WorkloadSpec};
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

struct Criterion {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, failures: Vec<String>, ok_detail: String) -> Criterion {
    if failures.is_empty() {
        Criterion {
            name,
            pass: true,
            detail: ok_detail,
        }
    } else {
        let shown = failures.iter().take(3).cloned().collect::<Vec<_>>().join("; ");
        Criterion {
            name,
            pass: false,
            detail: format!("{} failures: {shown}", failures.len()),
        }
    }
}

fn base_setup(algo: Algo, delay: DelayModel, k_max: usize, d_max: Option<u64>, seed: u64) -> RunSetup {
    RunSetup {
        algo,
        granularity: Granularity::Shard,
        leader: ShardId(0),
        workload: WorkloadSpec {
            txns_per_home: 25,
            k_max,
            d_max,
            accounts_per_shard: 6,
            amount_max: 25,
            write_prob: 0.7,
            ..WorkloadSpec::default()
        },
        delay,
        seed,
        max_ticks: 500_000,
        fault: FaultPlan::none(),
        cover: CoverParams::default(),
    }
}

fn delay_of(delta: u64) -> DelayModel {
    if delta == 1 {
        DelayModel::Synchronous
    } else {
        DelayModel::Partial { delta }
    }
}

struct GridResult {
    desc: String,
    n_txns: usize,
    safety_fails: Vec<String>,
    unresolved: usize,
    truncated: bool,
    err: Option<String>,
}

/// Every algorithm on both desk topologies, both delay regimes, two fanout
/// caps, four seeds each. Shared by the safety and liveness criteria.
fn grid_results() -> Vec<GridResult> {
    let mut cells = Vec::new();
    for algo in Algo::all() {
        for line in [false, true] {
            for delta in [1u64, 3] {
                for k_max in [2usize, 3] {
                    for seed in 0..4u64 {
                        cells.push((algo, line, delta, k_max, seed));
                    }
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|&(algo, line, delta, k_max, seed)| {
            let topo = if line {
                Topology::Line { s: 8, w: 1 }
            } else {
                Topology::Clique { s: 8, w: 1 }
            };
            let d_max = line.then_some(3);
            let setup = base_setup(algo, delay_of(delta), k_max, d_max, seed);
            let desc = format!(
                "{} {} delta={delta} k={k_max} seed={seed}",
                algo.name(),
                if line { "line8" } else { "clique8" }
            );
            let g = ShardGraph::build(&topo).unwrap();
            match run_sim(&g, &setup) {
                Err(e) => GridResult {
                    desc,
                    n_txns: 0,
                    safety_fails: Vec::new(),
                    unresolved: 0,
                    truncated: false,
                    err: Some(e.to_string()),
                },
                Ok(out) => GridResult {
                    desc,
                    n_txns: out.trace.txns.len(),
                    safety_fails: verify_safety(&out.trace, &out.bodies, setup.granularity).lines(),
                    unresolved: out.trace.unresolved().len(),
                    truncated: out.truncated,
                    err: None,
                },
            }
        })
        .collect()
}

fn c1_safety(grid: &[GridResult], elapsed: f64) -> Criterion {
    let mut failures = Vec::new();
    for r in grid {
        if let Some(e) = &r.err {
            failures.push(format!("{}: {e}", r.desc));
        }
        for f in &r.safety_fails {
            failures.push(format!("{}: {f}", r.desc));
        }
    }
    if elapsed >= 60.0 {
        failures.push(format!("grid took {elapsed:.1}s, budget 60s"));
    }
    let txns: usize = grid.iter().map(|r| r.n_txns).sum();
    check(
        "safety",
        failures,
        format!(
            "{} runs, {txns} txns, conflicting applies ordered consistently everywhere ({elapsed:.1}s)",
            grid.len()
        ),
    )
}

fn c2_liveness(grid: &[GridResult]) -> Criterion {
    let mut failures = Vec::new();
    for r in grid {
        if r.unresolved > 0 {
            failures.push(format!("{}: {} unresolved", r.desc, r.unresolved));
        }
        if r.truncated {
            failures.push(format!("{}: hit the tick horizon", r.desc));
        }
    }

    // Vote-based single leader on a unit clique: every transaction settles
    // within a constant number of ticks per conflicting color, measured
    // against the worst pending chromatic number of its own run.
    let g = ShardGraph::build(&Topology::Clique { s: 8, w: 1 }).unwrap();
    let mut worst_slack = u64::MAX;
    for seed in 0..10u64 {
        let setup = base_setup(Algo::StatelessSingle, DelayModel::Synchronous, 3, None, seed);
        match run_sim(&g, &setup) {
            Err(e) => failures.push(format!("bound seed {seed}: {e}")),
            Ok(out) => {
                let rows = snapshots(&out.trace, &out.bodies, setup.granularity, false, out.ticks);
                let l = rows.iter().map(|r| r.l).max().unwrap_or(1) as u64;
                let bound = 3 * (3 * l + 1) + 4;
                for rec in out.trace.txns.values() {
                    let Some(fin) = rec.finalize_time else {
                        failures.push(format!("bound seed {seed}: {} never finalized", rec.txn));
                        continue;
                    };
                    let latency = fin - rec.ts;
                    if latency > bound {
                        failures.push(format!(
                            "bound seed {seed}: {} took {latency} > 3(k*l+1)+4 = {bound}",
                            rec.txn
                        ));
                    } else {
                        worst_slack = worst_slack.min(bound - latency);
                    }
                }
            }
        }
    }
    check(
        "liveness",
        failures,
        format!(
            "{} runs fully resolved; unit-clique latency within 3(k*l+1)+4 (min slack {worst_slack})",
            grid.len()
        ),
    )
}

fn c3_coloring_bound() -> Criterion {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..500 {
        let n = rng.random_range(2..=12usize);
        let s = rng.random_range(2..=6usize);
        let k_cap = rng.random_range(1..=3usize);
        let txns: Vec<Transaction> = (0..n)
            .map(|v| {
                let want = rng.random_range(1..=k_cap).min(s);
                let mut dests = BTreeSet::new();
                while dests.len() < want {
                    dests.insert(rng.random_range(0..s));
                }
                let ops = dests
                    .into_iter()
                    .map(|d| {
                        (
                            ShardId(d),
                            DestOps {
                                accesses: vec![Access::credit(AccountId(0), 1)],
                            },
                        )
                    })
                    .collect();
                Transaction {
                    id: TxnId(v as u64),
                    home: ShardId(0),
                    ts: v as u64,
                    ops,
                }
            })
            .collect();
        let k = txns.iter().map(|t| t.ops.len()).max().unwrap() as u32;
        let snap = PendingSnapshot::new(Granularity::Shard, txns);
        let greedy = snap.greedy_colors();
        let chi = snap.chromatic_number().unwrap();
        if greedy < chi || greedy > k * chi + 1 {
            failures.push(format!(
                "instance {i}: greedy {greedy} outside [chi {chi}, k*chi+1 {}]",
                k * chi + 1
            ));
        } else {
            worst = worst.max(greedy as f64 / (k * chi + 1) as f64);
        }
    }
    check(
        "coloring-bound",
        failures,
        format!("500 write snapshots: chi <= greedy <= k*chi+1, tightest at {:.0}%", worst * 100.0),
    )
}

fn c4_cover() -> Criterion {
    let t0 = Instant::now();
    let mut failures = Vec::new();
    let mut n = 0;
    for &s in &[4usize, 9, 16, 25, 64] {
        let side = (s as f64).sqrt() as usize;
        let topos = [
            Topology::Grid { a: side, b: side, w: 1 },
            Topology::Line { s, w: 1 },
            Topology::Clique { s, w: 1 },
            Topology::RandomMetric { s, seed: 7 },
        ];
        for topo in topos {
            n += 1;
            let g = ShardGraph::build(&topo).unwrap();
            match CoverHierarchy::build(&g, CoverParams { c_diam: 4, c_sub: 4 }) {
                Err(e) => failures.push(format!("{topo:?}: {e}")),
                Ok(h) => {
                    let report = verify_cover(&g, &h);
                    if !report.pass() {
                        failures.push(format!("{topo:?}: {}", report.lines().join("; ")));
                    }
                }
            }
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    if elapsed >= 30.0 {
        failures.push(format!("cover checks took {elapsed:.1}s, budget 30s"));
    }
    check(
        "cluster-cover",
        failures,
        format!("{n} hierarchies over 4 to 64 shards hold all five properties ({elapsed:.1}s)"),
    )
}

fn petersen() -> Vec<(usize, usize)> {
    let mut e: Vec<(usize, usize)> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
    e.extend((0..5).map(|i| (5 + i, 5 + (i + 2) % 5)));
    e.extend((0..5).map(|i| (i, i + 5)));
    e
}

fn c5_oracle() -> Criterion {
    use rand::{Rng, SeedableRng};
    let mut failures = Vec::new();

    let named: [(&str, usize, Vec<(usize, usize)>, u32); 4] = [
        ("triangle", 3, vec![(0, 1), (1, 2), (0, 2)], 3),
        ("path3", 3, vec![(0, 1), (1, 2)], 2),
        ("cycle5", 5, vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)], 3),
        ("petersen", 10, petersen(), 3),
    ];
    for (name, n, edges, want_chi) in &named {
        match reduction_instance(*n, edges) {
            Err(e) => failures.push(format!("{name}: {e}")),
            Ok(inst) => {
                let snap = PendingSnapshot::new(Granularity::Shard, inst.txns);
                let canon =
                    |es: &[(usize, usize)]| -> BTreeSet<(usize, usize)> {
                        es.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
                    };
                if canon(&snap.edges()) != canon(edges) {
                    failures.push(format!("{name}: lifted conflict graph differs from input"));
                }
                match snap.chromatic_number() {
                    Err(e) => failures.push(format!("{name}: {e}")),
                    Ok(chi) if chi != *want_chi => {
                        failures.push(format!("{name}: chi {chi}, expected {want_chi}"))
                    }
                    Ok(_) => {}
                }
            }
        }
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
    for i in 0..200 {
        let n = rng.random_range(3..=12usize);
        let p = if i % 2 == 0 { 0.2 } else { 0.5 };
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random_bool(p) {
                    edges.push((a, b));
                }
            }
        }
        let inst = reduction_instance(n, &edges).unwrap();
        let snap = PendingSnapshot::new(Granularity::Shard, inst.txns);
        match greedy_vs_optimal(&snap) {
            Err(e) => failures.push(format!("random {i}: {e}")),
            Ok(cmp) => {
                if !cmp.sandwich_holds() {
                    failures.push(format!(
                        "random {i}: chi {} greedy {} degree+1 {}",
                        cmp.chi,
                        cmp.greedy,
                        cmp.max_degree + 1
                    ));
                }
            }
        }
    }
    check(
        "exact-oracle",
        failures,
        "4 known graphs lift exactly; 200 random graphs keep chi <= greedy <= degree+1".into(),
    )
}

fn c6_ratio_envelope() -> Criterion {
    let g = ShardGraph::build(&Topology::Clique { s: 16, w: 1 }).unwrap();
    let cap = 3.0f64.min((16f64).sqrt().ceil());
    let mut failures = Vec::new();
    let mut observed = Vec::new();
    for (algo, factor) in [(Algo::StatelessSingle, 6.0), (Algo::StatefulSingle, 8.0)] {
        let bound = factor * cap;
        let mut max_ratio = 0.0f64;
        for seed in 0..5u64 {
            let mut setup = base_setup(algo, DelayModel::Synchronous, 3, None, seed);
            setup.workload.txns_per_home = 15;
            match run_sim(&g, &setup) {
                Err(e) => failures.push(format!("{} seed {seed}: {e}", algo.name())),
                Ok(out) => {
                    let rows = snapshots(
                        &out.trace,
                        &out.bodies,
                        setup.granularity,
                        algo.is_stateful(),
                        out.ticks,
                    );
                    for r in &rows {
                        max_ratio = max_ratio.max(r.ratio);
                        if r.ratio > bound {
                            failures.push(format!(
                                "{} seed {seed} t={}: ratio {:.2} > {bound} (pending {}, l {}, drain {})",
                                algo.name(),
                                r.t,
                                r.ratio,
                                r.n_pending,
                                r.l,
                                r.t_prime
                            ));
                        }
                    }
                }
            }
        }
        observed.push(format!("{} {max_ratio:.2}/{bound}", algo.name()));
    }
    check(
        "ratio-envelope",
        failures,
        format!("clique16 worst drain ratios within envelopes: {}", observed.join(", ")),
    )
}

fn c7_round_cadence() -> Criterion {
    let g = ShardGraph::build(&Topology::Clique { s: 8, w: 1 }).unwrap();
    let leader = ShardId(0);
    let mut failures = Vec::new();
    let mut worst_wait = 0u64;
    for delta in [1u64, 3] {
        let lambda = delta * g.diameter().max(1);
        for seed in 0..3u64 {
            let setup = base_setup(Algo::StatefulSingle, delay_of(delta), 3, None, seed);
            let out = match run_sim(&g, &setup) {
                Err(e) => {
                    failures.push(format!("delta {delta} seed {seed}: {e}"));
                    continue;
                }
                Ok(o) => o,
            };
            let mut colored: BTreeMap<TxnId, u64> = BTreeMap::new();
            for e in &out.trace.events {
                if let TraceEvent::Color { t, txn, .. } = e {
                    colored.entry(*txn).or_insert(*t);
                }
            }
            for rec in out.trace.txns.values() {
                let Some(&tc) = colored.get(&rec.txn) else {
                    failures.push(format!("delta {delta} seed {seed}: {} never colored", rec.txn));
                    continue;
                };
                let arrival = rec.ts + delta * g.distance(rec.home, leader);
                let wait = tc.saturating_sub(arrival);
                worst_wait = worst_wait.max(wait);
                if wait > 4 * lambda {
                    failures.push(format!(
                        "delta {delta} seed {seed}: {} waited {wait} > 4*lambda {}",
                        rec.txn,
                        4 * lambda
                    ));
                }
            }
            let mut per_round: BTreeMap<(ClusterId, u64), BTreeSet<u64>> = BTreeMap::new();
            for e in &out.trace.events {
                if let TraceEvent::Precommit { t, cluster, color, .. } = e {
                    per_round.entry((*cluster, *t)).or_default().insert(*color);
                }
            }
            for ((cluster, t), colors) in per_round {
                if colors.len() as u64 > lambda {
                    failures.push(format!(
                        "delta {delta} seed {seed}: {cluster} ran {} colors at t={t}, budget {lambda}",
                        colors.len()
                    ));
                }
            }
        }
    }
    check(
        "round-cadence",
        failures,
        format!("colors assigned within 4*lambda of leader arrival (worst wait {worst_wait}); rounds respect the color budget"),
    )
}

fn golden_cases() -> Vec<(&'static str, Topology, RunSetup)> {
    let wl = |k_max: usize, d_max: Option<u64>| WorkloadSpec {
        txns_per_home: 6,
        k_max,
        d_max,
        accounts_per_shard: 6,
        amount_max: 20,
        write_prob: 0.7,
        ..WorkloadSpec::default()
    };
    let mk = |algo: Algo, workload: WorkloadSpec, delay: DelayModel| RunSetup {
        algo,
        granularity: Granularity::Shard,
        leader: ShardId(0),
        workload,
        delay,
        seed: 1,
        max_ticks: 200_000,
        fault: FaultPlan::none(),
        cover: CoverParams::default(),
    };
    vec![
        (
            "vote-single",
            Topology::Clique { s: 8, w: 1 },
            mk(Algo::StatelessSingle, wl(3, None), DelayModel::Synchronous),
        ),
        (
            "vote-multi",
            Topology::Line { s: 9, w: 1 },
            mk(Algo::StatelessMulti, wl(3, Some(2)), DelayModel::Partial { delta: 2 }),
        ),
        (
            "state-single",
            Topology::Clique { s: 8, w: 1 },
            mk(Algo::StatefulSingle, wl(3, None), DelayModel::Synchronous),
        ),
        (
            "state-multi",
            Topology::Grid { a: 3, b: 3, w: 1 },
            mk(Algo::StatefulMulti, wl(3, Some(2)), DelayModel::Partial { delta: 2 }),
        ),
    ]
}

const GOLDEN_HASHES: [(&str, &str); 4] = [
    ("vote-single", "a992732c74c7a9497cd4d48792c0819a711f780a2cbafd0657b80d8c52e887ea"),
    ("vote-multi", "da1754b926541e3c9ed54f7148e8333cf03d1abc46adb6a49581ddc790600ed6"),
    ("state-single", "36c2db6ff0d98727283add781e3b2b5b1e560d05e0d46e9e13839babd1b6b0ab"),
    ("state-multi", "39232128951981011814a642b73ddcadb1236c17de99dded46e4a272ae0d29a1"),
];

fn c8_determinism() -> Criterion {
    let mut failures = Vec::new();
    let mut seen = Vec::new();
    for (name, topo, setup) in golden_cases() {
        let g = ShardGraph::build(&topo).unwrap();
        let first = match run_sim(&g, &setup) {
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                continue;
            }
            Ok(o) => o.trace.hash(),
        };
        let second = run_sim(&g, &setup).unwrap().trace.hash();
        if first != second {
            failures.push(format!("{name}: repeat run diverged"));
        }
        let golden = GOLDEN_HASHES.iter().find(|(n, _)| *n == name).unwrap().1;
        if first != golden {
            failures.push(format!("{name}: hash {first} != frozen {golden}"));
        }
        seen.push(name);
    }
    check(
        "determinism",
        failures,
        format!("{} reference runs replay to their frozen trace hashes", seen.len()),
    )
}

/// Rebuilds every destination's priority queue from the event log alone and
/// checks each activation picked the minimum key while the shard was free.
fn replay_dest_queues(algo: Algo, trace: &RunTrace) -> Result<usize, String> {
    let mut ts_of: BTreeMap<TxnId, u64> = BTreeMap::new();
    let mut height_of: BTreeMap<TxnId, Height> = BTreeMap::new();
    let mut color_of: BTreeMap<(TxnId, u32), u64> = BTreeMap::new();
    for e in &trace.events {
        match e {
            TraceEvent::Arrive { txn, ts, .. } => {
                ts_of.insert(*txn, *ts);
            }
            TraceEvent::Route { txn, q, r, .. } => {
                height_of.insert(*txn, Height { q: *q, r: *r });
            }
            TraceEvent::Color { txn, color, attempt, .. } => {
                color_of.insert((*txn, *attempt), *color);
            }
            _ => {}
        }
    }

    #[derive(Default)]
    struct DestReplay {
        queue: BTreeMap<PriorityKey, (TxnId, u32)>,
        by_txn: BTreeMap<TxnId, PriorityKey>,
        busy: Option<(TxnId, u32, PriorityKey)>,
        stepping_aside: bool,
    }
    let mut dests: BTreeMap<ShardId, DestReplay> = BTreeMap::new();
    let mut checked = 0usize;

    for e in &trace.events {
        match e {
            TraceEvent::DestEnqueue { t, dest, txn, attempt } => {
                let d = dests.entry(*dest).or_default();
                if let Some(old) = d.by_txn.remove(txn) {
                    d.queue.remove(&old);
                }
                let color = *color_of
                    .get(&(*txn, *attempt))
                    .ok_or(format!("t={t}: enqueue of uncolored {txn} attempt {attempt}"))?;
                let height = height_of.get(txn).copied().unwrap_or(Height { q: 0, r: 0 });
                let key = algo.priority_key(color, ts_of[txn], height, *txn);
                d.queue.insert(key, (*txn, *attempt));
                d.by_txn.insert(*txn, key);
            }
            TraceEvent::DestActivate { t, dest, txn, attempt } => {
                let d = dests.entry(*dest).or_default();
                if d.stepping_aside {
                    let (btxn, batt, bkey) =
                        d.busy.take().ok_or(format!("t={t}: {dest} aside without busy"))?;
                    d.queue.insert(bkey, (btxn, batt));
                    d.by_txn.insert(btxn, bkey);
                    d.stepping_aside = false;
                }
                if let Some((btxn, ..)) = d.busy {
                    return Err(format!("t={t}: {dest} activated {txn} while serving {btxn}"));
                }
                let (&key, &(qtxn, qatt)) = d
                    .queue
                    .first_key_value()
                    .ok_or(format!("t={t}: {dest} activated {txn} with empty queue"))?;
                if (qtxn, qatt) != (*txn, *attempt) {
                    return Err(format!(
                        "t={t}: {dest} activated {txn} attempt {attempt} over minimum {qtxn}"
                    ));
                }
                d.queue.remove(&key);
                d.by_txn.remove(&qtxn);
                d.busy = Some((qtxn, qatt, key));
                checked += 1;
            }
            TraceEvent::IgnoreSent { t, dest, txn, .. } => {
                let d = dests.entry(*dest).or_default();
                match d.busy {
                    Some((btxn, ..)) if btxn == *txn => d.stepping_aside = true,
                    _ => return Err(format!("t={t}: {dest} ignored non-busy {txn}")),
                }
            }
            TraceEvent::Confirm { dest, txn, attempt, commit, .. } => {
                let d = dests.entry(*dest).or_default();
                if d.busy.is_some_and(|(btxn, batt, _)| btxn == *txn && batt == *attempt) {
                    d.busy = None;
                    d.stepping_aside = false;
                } else if let Some(&key) = d.by_txn.get(txn) {
                    if d.queue[&key].1 == *attempt && !commit {
                        d.queue.remove(&key);
                        d.by_txn.remove(txn);
                    }
                }
            }
            _ => {}
        }
    }
    Ok(checked)
}

/// Replays grant and return events; every move must come from the cluster
/// currently holding the token, so no two clusters ever hold one together.
fn replay_tokens(trace: &RunTrace) -> Result<usize, String> {
    let mut holder: BTreeMap<ClusterId, ClusterId> = BTreeMap::new();
    let mut moves = 0usize;
    for e in &trace.events {
        match e {
            TraceEvent::TokenGrant { t, from, to, token } => {
                let h = holder.get(token).copied().unwrap_or(*token);
                if h != *from {
                    return Err(format!("t={t}: {from} granted {token} held by {h}"));
                }
                holder.insert(*token, *to);
                moves += 1;
            }
            TraceEvent::TokenReturn { t, from, token } => {
                let h = holder.get(token).copied().unwrap_or(*token);
                if h != *from {
                    return Err(format!("t={t}: {from} returned {token} held by {h}"));
                }
                holder.insert(*token, *token);
                moves += 1;
            }
            _ => {}
        }
    }
    Ok(moves)
}

fn replay_batches(trace: &RunTrace) -> Result<usize, String> {
    let mut next: BTreeMap<(ShardId, ClusterId), u64> = BTreeMap::new();
    let mut applied = 0usize;
    for e in &trace.events {
        if let TraceEvent::BatchApply { t, dest, cluster, seq, .. } = e {
            let n = next.entry((*dest, *cluster)).or_insert(1);
            if seq != n {
                return Err(format!("t={t}: {dest} applied batch {seq} from {cluster}, expected {n}"));
            }
            *n += 1;
            applied += 1;
        }
    }
    Ok(applied)
}

fn c9_order_and_tokens() -> Criterion {
    let mut failures = Vec::new();
    let mut activations = 0usize;
    let mut token_moves = 0usize;
    let mut batches = 0usize;

    let vote_runs = [
        (Algo::StatelessSingle, Topology::Clique { s: 8, w: 1 }, 1u64, None),
        (Algo::StatelessMulti, Topology::Line { s: 8, w: 1 }, 1, Some(3)),
        (Algo::StatelessMulti, Topology::Line { s: 8, w: 1 }, 3, Some(3)),
        (Algo::StatelessMulti, Topology::Grid { a: 3, b: 3, w: 1 }, 3, Some(2)),
    ];
    for (algo, topo, delta, d_max) in vote_runs {
        let g = ShardGraph::build(&topo).unwrap();
        for seed in 0..3u64 {
            let setup = base_setup(algo, delay_of(delta), 3, d_max, seed);
            match run_sim(&g, &setup) {
                Err(e) => failures.push(format!("{} delta={delta} seed {seed}: {e}", algo.name())),
                Ok(out) => match replay_dest_queues(algo, &out.trace) {
                    Err(e) => {
                        failures.push(format!("{} delta={delta} seed {seed}: {e}", algo.name()))
                    }
                    Ok(n) => activations += n,
                },
            }
        }
    }

    let token_runs = [
        (Topology::Grid { a: 3, b: 3, w: 1 }, 1u64),
        (Topology::Grid { a: 3, b: 3, w: 1 }, 2),
        (Topology::Line { s: 9, w: 1 }, 2),
    ];
    for (topo, delta) in token_runs {
        let g = ShardGraph::build(&topo).unwrap();
        for seed in 0..3u64 {
            let setup = base_setup(Algo::StatefulMulti, delay_of(delta), 3, Some(2), seed);
            match run_sim(&g, &setup) {
                Err(e) => failures.push(format!("tokens delta={delta} seed {seed}: {e}")),
                Ok(out) => {
                    match replay_tokens(&out.trace) {
                        Err(e) => failures.push(format!("tokens delta={delta} seed {seed}: {e}")),
                        Ok(n) => token_moves += n,
                    }
                    match replay_batches(&out.trace) {
                        Err(e) => failures.push(format!("batches delta={delta} seed {seed}: {e}")),
                        Ok(n) => batches += n,
                    }
                }
            }
        }
    }
    check(
        "queue-and-token-order",
        failures,
        format!(
            "{activations} activations took the queue minimum; {token_moves} token moves single-holder; {batches} batches applied in sequence"
        ),
    )
}

#[test]
fn acceptance() {
    let t0 = Instant::now();
    let grid = grid_results();
    let grid_elapsed = t0.elapsed().as_secs_f64();

    let results = vec![
        c1_safety(&grid, grid_elapsed),
        c2_liveness(&grid),
        c3_coloring_bound(),
        c4_cover(),
        c5_oracle(),
        c6_ratio_envelope(),
        c7_round_cadence(),
        c8_determinism(),
        c9_order_and_tokens(),
    ];

    let mut all_pass = true;
    for r in &results {
        println!("[{}] {} - {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
        all_pass &= r.pass;
    }
    assert!(all_pass, "acceptance criteria failed");
}
