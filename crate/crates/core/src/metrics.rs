//! Post-run measurement: pending-set snapshots with competitive ratios,
//! safety verification over the apply chains, and run aggregates.

use crate::conflict::{conflicts, AccountId, Granularity, Transaction, TxnId};
use crate::graph::ShardId;
use crate::oracle::{lower_bound_tau, PendingSnapshot, MAX_ORACLE_VERTICES};
use crate::trace::RunTrace;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// One sampled tick: how much work was pending and how fast it drained
/// relative to the coloring/distance lower bound.
#[derive(Debug, Clone, Serialize)]
pub struct SnapshotRow {
    pub t: u64,
    pub n_pending: usize,
    /// Chromatic lower bound for the pending conflict graph: exact when the
    /// oracle budget allows, otherwise the largest writer clique.
    pub l: u32,
    /// Largest home-to-destination distance among pending transactions.
    pub d_hat: u64,
    /// Ticks until the last pending transaction finalized.
    pub t_prime: u64,
    pub lb: u64,
    pub ratio: f64,
}

fn writer_clique(pending: &[&Transaction], g: Granularity) -> u32 {
    let mut counts: BTreeMap<(ShardId, Option<AccountId>), u32> = BTreeMap::new();
    for b in pending {
        for (dest, ops) in &b.ops {
            match g {
                Granularity::Shard => {
                    if ops.writes() {
                        *counts.entry((*dest, None)).or_default() += 1;
                    }
                }
                Granularity::Account => {
                    for a in &ops.accesses {
                        if a.write {
                            *counts.entry((*dest, Some(a.account))).or_default() += 1;
                        }
                    }
                }
            }
        }
    }
    counts.values().copied().max().unwrap_or(0).max(1)
}

/// Samples the run roughly fifty times plus at every arrival tick and
/// rates each pending set: how long it actually took to drain against the
/// best any scheduler could do. Ticks with nothing pending are skipped.
/// Unresolved transactions count as draining at the horizon.
pub fn snapshots(
    trace: &RunTrace,
    bodies: &BTreeMap<TxnId, Transaction>,
    granularity: Granularity,
    stateful: bool,
    horizon: u64,
) -> Vec<SnapshotRow> {
    let step = (horizon / 50).max(1);
    let mut ticks: BTreeSet<u64> = (0..=horizon).step_by(step as usize).collect();
    for rec in trace.txns.values() {
        ticks.insert(rec.ts);
    }

    let mut rows = Vec::new();
    for t in ticks {
        let pending: Vec<&crate::trace::TxnRecord> = trace
            .txns
            .values()
            .filter(|r| r.ts <= t && r.finalize_time.unwrap_or(horizon + 1) > t)
            .collect();
        if pending.is_empty() {
            continue;
        }
        let pending_bodies: Vec<&Transaction> =
            pending.iter().map(|r| &bodies[&r.txn]).collect();
        let l = if pending.len() <= MAX_ORACLE_VERTICES {
            let snap = PendingSnapshot::new(
                granularity,
                pending_bodies.iter().map(|b| (*b).clone()).collect(),
            );
            snap.chromatic_number().expect("within oracle budget")
        } else {
            writer_clique(&pending_bodies, granularity)
        };
        let d_hat = pending.iter().map(|r| r.max_dist).max().unwrap();
        let drained = pending
            .iter()
            .map(|r| r.finalize_time.unwrap_or(horizon + 1))
            .max()
            .unwrap();
        let t_prime = drained - t;
        let lb = lower_bound_tau(l, d_hat, stateful);
        rows.push(SnapshotRow {
            t,
            n_pending: pending.len(),
            l,
            d_hat,
            t_prime,
            lb,
            ratio: t_prime as f64 / lb as f64,
        });
    }
    rows
}

#[derive(Debug, Default)]
pub struct SafetyReport {
    /// Conflicting committed pairs applied in different orders somewhere.
    pub order_violations: Vec<String>,
    /// Batch sequences that regressed or skipped at a destination.
    pub batch_violations: Vec<String>,
}

impl SafetyReport {
    pub fn pass(&self) -> bool {
        self.order_violations.is_empty() && self.batch_violations.is_empty()
    }

    pub fn lines(&self) -> Vec<String> {
        self.order_violations
            .iter()
            .chain(self.batch_violations.iter())
            .cloned()
            .collect()
    }
}

/// Replays the apply chains: every pair of conflicting committed
/// transactions must land in the same order on every shard both touched,
/// and batched applies must arrive in unbroken per-cluster sequence.
pub fn verify_safety(
    trace: &RunTrace,
    bodies: &BTreeMap<TxnId, Transaction>,
    granularity: Granularity,
) -> SafetyReport {
    let mut report = SafetyReport::default();

    let mut pos: BTreeMap<ShardId, BTreeMap<TxnId, usize>> = BTreeMap::new();
    for (&dest, chain) in &trace.chains {
        let by_txn = pos.entry(dest).or_default();
        for (i, a) in chain.iter().enumerate() {
            by_txn.entry(a.txn).or_insert(i);
        }
    }

    let committed: Vec<&Transaction> = trace
        .txns
        .values()
        .filter(|r| r.committed == Some(true))
        .map(|r| &bodies[&r.txn])
        .collect();
    for (i, a) in committed.iter().enumerate() {
        for b in committed.iter().skip(i + 1) {
            if !conflicts(a, b, granularity) {
                continue;
            }
            let mut order: Option<(bool, ShardId)> = None;
            for (dest, by_txn) in &pos {
                let (Some(&pa), Some(&pb)) = (by_txn.get(&a.id), by_txn.get(&b.id)) else {
                    continue;
                };
                let a_first = pa < pb;
                match order {
                    None => order = Some((a_first, *dest)),
                    Some((prev, at)) if prev != a_first => {
                        report.order_violations.push(format!(
                            "{} and {} applied in opposite orders on {at} and {dest}",
                            a.id, b.id
                        ));
                        break;
                    }
                    Some(_) => {}
                }
            }
        }
    }

    for (&dest, chain) in &trace.chains {
        let mut seen: BTreeMap<crate::cover::ClusterId, u64> = BTreeMap::new();
        for a in chain {
            let Some((cluster, seq)) = a.batch else {
                continue;
            };
            let last = seen.entry(cluster).or_insert(0);
            if seq != *last && seq != *last + 1 {
                report.batch_violations.push(format!(
                    "batch {seq} of {cluster} follows {last} at {dest}"
                ));
            }
            *last = seq.max(*last);
        }
    }
    report
}

/// Transactions that arrived but never got an outcome.
pub fn verify_liveness(trace: &RunTrace) -> Vec<TxnId> {
    trace.unresolved()
}

/// Whole-run summary over the transaction records and snapshot rows.
#[derive(Debug, Clone, Serialize)]
pub struct RunStats {
    pub n_txns: usize,
    pub commits: usize,
    pub aborts: usize,
    pub unresolved: usize,
    pub makespan: u64,
    pub mean_latency: f64,
    pub max_latency: u64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
}

pub fn aggregate(trace: &RunTrace, rows: &[SnapshotRow]) -> RunStats {
    let resolved: Vec<(u64, u64)> = trace
        .txns
        .values()
        .filter_map(|r| r.finalize_time.map(|f| (r.ts, f)))
        .collect();
    let latencies: Vec<u64> = resolved.iter().map(|(ts, f)| f - ts).collect();
    let makespan = resolved
        .iter()
        .map(|&(_, f)| f)
        .max()
        .unwrap_or(0)
        .saturating_sub(resolved.iter().map(|&(ts, _)| ts).min().unwrap_or(0));
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    RunStats {
        n_txns: trace.txns.len(),
        commits: trace.commits(),
        aborts: trace.aborts(),
        unresolved: trace.unresolved().len(),
        makespan,
        mean_latency: mean(&latencies.iter().map(|&l| l as f64).collect::<Vec<_>>()),
        max_latency: latencies.iter().copied().max().unwrap_or(0),
        mean_ratio: mean(&rows.iter().map(|r| r.ratio).collect::<Vec<_>>()),
        max_ratio: rows.iter().map(|r| r.ratio).fold(0.0, f64::max),
    }
}
