//! Workload generation: per-home seeded transaction streams and the
//! coloring reduction instances used to cross-check the oracle.
//!
//! Every home shard owns an independent ChaCha stream, so adding shards or
//! reordering event interleavings never changes what another home
//! generates. Generated transfers conserve value: the first write (lowest
//! destination, then account) debits the amount under a balance condition
//! and every other write credits it.

use crate::conflict::{Access, AccountId, DestOps, Transaction, TxnId};
use crate::error::{Error, Result};
use crate::graph::{ShardGraph, ShardId};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

fn default_txns_per_home() -> u64 {
    5
}
fn default_k_max() -> usize {
    3
}
fn default_accounts_per_shard() -> u64 {
    4
}
fn default_amount_max() -> i64 {
    100
}
fn default_write_prob() -> f64 {
    0.9
}
fn default_initial_balance() -> i64 {
    1000
}

/// Workload shape knobs, also the `[workload]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSpec {
    /// Transactions each home shard issues (retries consume this too).
    pub txns_per_home: u64,
    /// Upper bound on destinations per transaction.
    pub k_max: usize,
    /// Destinations are drawn within this distance of the home shard;
    /// absent means anywhere.
    pub d_max: Option<u64>,
    pub accounts_per_shard: u64,
    pub amount_max: i64,
    pub write_prob: f64,
    /// Skew for destination choice by shard index; absent means uniform.
    pub zipf_alpha: Option<f64>,
    pub initial_balance: i64,
    /// Aborted transactions are reissued with a fresh id and timestamp.
    pub retry_aborted: bool,
    /// No fresh transactions after this tick.
    pub gen_cutoff: Option<u64>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            txns_per_home: default_txns_per_home(),
            k_max: default_k_max(),
            d_max: None,
            accounts_per_shard: default_accounts_per_shard(),
            amount_max: default_amount_max(),
            write_prob: default_write_prob(),
            zipf_alpha: None,
            initial_balance: default_initial_balance(),
            retry_aborted: false,
            gen_cutoff: None,
        }
    }
}

impl WorkloadSpec {
    pub fn check(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if self.accounts_per_shard == 0 {
            return Err(Error::Config("accounts_per_shard must be at least 1".into()));
        }
        if self.amount_max < 1 {
            return Err(Error::Config("amount_max must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.write_prob) {
            return Err(Error::Config("write_prob must be in [0, 1]".into()));
        }
        if let Some(a) = self.zipf_alpha {
            if !(a > 0.0) {
                return Err(Error::Config("zipf_alpha must be positive".into()));
            }
        }
        if self.initial_balance < 0 {
            return Err(Error::Config("initial_balance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Seeded transaction stream for one home shard.
#[derive(Debug, Clone)]
pub struct HomeGenerator {
    home: ShardId,
    spec: WorkloadSpec,
    rng: ChaCha8Rng,
    remaining: u64,
}

impl HomeGenerator {
    pub fn new(seed: u64, home: ShardId, spec: &WorkloadSpec) -> HomeGenerator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(home.0 as u64 + 1);
        HomeGenerator {
            home,
            spec: spec.clone(),
            rng,
            remaining: spec.txns_per_home,
        }
    }

    pub fn remaining(&self) -> u64 {
        self.remaining
    }

    /// Counts a retry against the budget without drawing randomness.
    pub fn consume_for_retry(&mut self) -> bool {
        if self.remaining == 0 {
            return false;
        }
        self.remaining -= 1;
        true
    }

    /// Next fresh transaction arriving at tick `now`, or None once the
    /// budget or cutoff is exhausted.
    pub fn next_txn(&mut self, g: &ShardGraph, now: u64, id: TxnId) -> Option<Transaction> {
        if self.remaining == 0 {
            return None;
        }
        if let Some(cutoff) = self.spec.gen_cutoff {
            if now > cutoff {
                return None;
            }
        }
        self.remaining -= 1;

        let reach = self.spec.d_max.unwrap_or(g.diameter());
        let candidates: Vec<ShardId> = g.z_neighborhood(self.home, reach).into_iter().collect();
        let n = self.rng.random_range(1..=self.spec.k_max.min(candidates.len()));
        let dests = self.pick_dests(&candidates, n);

        let amount = self.rng.random_range(1..=self.spec.amount_max);
        let mut accesses: Vec<(ShardId, AccountId, bool)> = Vec::new();
        for &d in &dests {
            let acct = AccountId(self.rng.random_range(0..self.spec.accounts_per_shard));
            let write = self.rng.random_bool(self.spec.write_prob);
            accesses.push((d, acct, write));
        }
        // A single-destination transfer moves value between two accounts of
        // that shard when it can.
        if dests.len() == 1 && accesses[0].2 && self.spec.accounts_per_shard >= 2 {
            let (d, a, _) = accesses[0];
            let other = AccountId((a.0 + 1) % self.spec.accounts_per_shard);
            accesses.push((d, other, true));
        }
        accesses.sort_by_key(|&(d, a, _)| (d, a));

        // The debit funds every credit, so multi-write transfers conserve
        // value; a lone write is a plain withdrawal.
        let n_writes = accesses.iter().filter(|&&(_, _, w)| w).count() as i64;
        let debit_amount = amount * (n_writes - 1).max(1);
        let mut ops: BTreeMap<ShardId, DestOps> = BTreeMap::new();
        let mut debited = false;
        for (d, acct, write) in accesses {
            let access = if !write {
                Access::read(acct, None)
            } else if !debited {
                debited = true;
                Access::debit(acct, debit_amount)
            } else {
                Access::credit(acct, amount)
            };
            ops.entry(d).or_default().accesses.push(access);
        }

        Some(Transaction {
            id,
            home: self.home,
            ts: now,
            ops,
        })
    }

    fn pick_dests(&mut self, candidates: &[ShardId], n: usize) -> Vec<ShardId> {
        let mut pool: Vec<ShardId> = candidates.to_vec();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let idx = match self.spec.zipf_alpha {
                None => self.rng.random_range(0..pool.len()),
                Some(alpha) => {
                    let weights: Vec<f64> = (0..pool.len())
                        .map(|r| 1.0 / ((r + 1) as f64).powf(alpha))
                        .collect();
                    let dist = WeightedIndex::new(&weights).expect("positive weights");
                    dist.sample(&mut self.rng)
                }
            };
            out.push(pool.remove(idx));
        }
        out.sort();
        out
    }
}

/// Fresh-id, fresh-timestamp clone for the retry loop.
pub fn retry_of(txn: &Transaction, id: TxnId, ts: u64) -> Transaction {
    Transaction {
        id,
        home: txn.home,
        ts,
        ops: txn.ops.clone(),
    }
}

/// A coloring instance lifted to transactions: one transaction per vertex,
/// one shard per edge, both endpoint transactions write the shared account
/// of their edge shard. Isolated vertices read untouched accounts on one
/// extra parking shard so they join the pending set without conflicting.
#[derive(Debug, Clone)]
pub struct ReductionInstance {
    pub txns: Vec<Transaction>,
    pub n_shards: usize,
    pub parking_shard: Option<ShardId>,
}

pub fn reduction_instance(n_vertices: usize, edges: &[(usize, usize)]) -> Result<ReductionInstance> {
    for &(a, b) in edges {
        if a >= n_vertices || b >= n_vertices {
            return Err(Error::Usage(format!(
                "edge ({a},{b}) out of range for {n_vertices} vertices"
            )));
        }
        if a == b {
            return Err(Error::Usage(format!("self-loop on vertex {a}")));
        }
    }
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n_vertices];
    for (i, &(a, b)) in edges.iter().enumerate() {
        incident[a].push(i);
        incident[b].push(i);
    }
    let has_isolated = incident.iter().any(|e| e.is_empty());
    let parking_shard = has_isolated.then_some(ShardId(edges.len()));
    let n_shards = edges.len() + usize::from(has_isolated);

    let mut txns = Vec::with_capacity(n_vertices);
    for (v, edge_ids) in incident.iter().enumerate() {
        let mut ops: BTreeMap<ShardId, DestOps> = BTreeMap::new();
        if edge_ids.is_empty() {
            let park = parking_shard.unwrap();
            ops.entry(park).or_default().accesses.push(Access::read(AccountId(v as u64), None));
        } else {
            for &e in edge_ids {
                ops.entry(ShardId(e))
                    .or_default()
                    .accesses
                    .push(Access::credit(AccountId(0), 1));
            }
        }
        let home = *ops.keys().next().unwrap();
        txns.push(Transaction {
            id: TxnId(v as u64),
            home,
            ts: 0,
            ops,
        });
    }
    Ok(ReductionInstance {
        txns,
        n_shards,
        parking_shard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflict::{conflicts, Granularity};
    use crate::graph::Topology;
    use crate::oracle::PendingSnapshot;

    fn line(s: usize) -> ShardGraph {
        ShardGraph::build(&Topology::Line { s, w: 1 }).unwrap()
    }

    #[test]
    fn streams_are_deterministic_and_home_independent() {
        let g = line(8);
        let spec = WorkloadSpec::default();
        let mut a = HomeGenerator::new(42, ShardId(3), &spec);
        let mut b = HomeGenerator::new(42, ShardId(3), &spec);
        let mut other = HomeGenerator::new(42, ShardId(4), &spec);
        let ta = a.next_txn(&g, 0, TxnId(0)).unwrap();
        let tb = b.next_txn(&g, 0, TxnId(0)).unwrap();
        let to = other.next_txn(&g, 0, TxnId(1)).unwrap();
        assert_eq!(ta, tb);
        assert_ne!(ta.ops, to.ops);
    }

    #[test]
    fn budget_and_cutoff_stop_generation() {
        let g = line(4);
        let spec = WorkloadSpec {
            txns_per_home: 2,
            gen_cutoff: Some(10),
            ..WorkloadSpec::default()
        };
        let mut gen = HomeGenerator::new(1, ShardId(0), &spec);
        assert!(gen.next_txn(&g, 0, TxnId(0)).is_some());
        assert!(gen.next_txn(&g, 11, TxnId(1)).is_none());
        let mut gen2 = HomeGenerator::new(1, ShardId(0), &spec);
        assert!(gen2.next_txn(&g, 0, TxnId(0)).is_some());
        assert!(gen2.next_txn(&g, 1, TxnId(1)).is_some());
        assert!(gen2.next_txn(&g, 2, TxnId(2)).is_none());
    }

    #[test]
    fn destinations_respect_reach_and_are_distinct() {
        let g = line(16);
        let spec = WorkloadSpec {
            txns_per_home: 50,
            k_max: 4,
            d_max: Some(2),
            ..WorkloadSpec::default()
        };
        let mut gen = HomeGenerator::new(7, ShardId(8), &spec);
        for i in 0..50 {
            let t = gen.next_txn(&g, i, TxnId(i)).unwrap();
            let dests = t.dests();
            assert!(!dests.is_empty() && dests.len() <= 4);
            for d in &dests {
                assert!(g.distance(ShardId(8), *d) <= 2, "dest {d} too far");
            }
        }
    }

    #[test]
    fn transfers_conserve_value_across_writes() {
        let g = line(8);
        let spec = WorkloadSpec {
            txns_per_home: 200,
            k_max: 3,
            write_prob: 1.0,
            ..WorkloadSpec::default()
        };
        let mut gen = HomeGenerator::new(11, ShardId(2), &spec);
        for i in 0..200 {
            let t = gen.next_txn(&g, i, TxnId(i)).unwrap();
            let writes: Vec<&Access> = t
                .ops
                .values()
                .flat_map(|o| o.accesses.iter())
                .filter(|a| a.write)
                .collect();
            let debits = writes.iter().filter(|a| a.delta < 0).count();
            assert_eq!(debits, 1, "exactly one debit per writing txn");
            let debit = writes.iter().find(|a| a.delta < 0).unwrap();
            assert_eq!(debit.min_balance, Some(-debit.delta));
            if writes.len() >= 2 {
                let sum: i64 = writes.iter().map(|a| a.delta).sum();
                assert_eq!(sum, 0, "multi-write transfer must conserve value");
            }
        }
    }

    #[test]
    fn single_dest_write_txn_moves_value_between_accounts() {
        let g = line(4);
        let spec = WorkloadSpec {
            txns_per_home: 100,
            k_max: 1,
            write_prob: 1.0,
            ..WorkloadSpec::default()
        };
        let mut gen = HomeGenerator::new(3, ShardId(1), &spec);
        let mut saw_pair = false;
        for i in 0..100 {
            let t = gen.next_txn(&g, i, TxnId(i)).unwrap();
            assert_eq!(t.ops.len(), 1);
            let ops = t.ops.values().next().unwrap();
            if ops.accesses.len() == 2 {
                saw_pair = true;
                assert_ne!(ops.accesses[0].account, ops.accesses[1].account);
                assert_eq!(ops.accesses[0].delta + ops.accesses[1].delta, 0);
            }
        }
        assert!(saw_pair);
    }

    #[test]
    fn zipf_skews_toward_low_ranks() {
        let g = ShardGraph::build(&Topology::Clique { s: 8, w: 1 }).unwrap();
        let spec = WorkloadSpec {
            txns_per_home: 10_000,
            k_max: 1,
            zipf_alpha: Some(1.2),
            ..WorkloadSpec::default()
        };
        let mut gen = HomeGenerator::new(5, ShardId(0), &spec);
        let mut counts = vec![0u64; 8];
        for i in 0..10_000 {
            let t = gen.next_txn(&g, 0, TxnId(i)).unwrap();
            counts[t.dests().first().unwrap().0] += 1;
        }
        // Candidate rank order is ascending shard index for a clique.
        assert!(counts[0] > counts[2] && counts[2] > counts[5] && counts[5] >= counts[7]);
        // Roughly 2^1.2 between rank 0 and rank 1.
        let ratio = counts[0] as f64 / counts[1] as f64;
        assert!((1.5..=3.5).contains(&ratio), "rank ratio {ratio}");
    }

    #[test]
    fn uniform_spread_when_no_skew() {
        let g = ShardGraph::build(&Topology::Clique { s: 4, w: 1 }).unwrap();
        let spec = WorkloadSpec {
            txns_per_home: 4000,
            k_max: 1,
            ..WorkloadSpec::default()
        };
        let mut gen = HomeGenerator::new(5, ShardId(0), &spec);
        let mut counts = vec![0u64; 4];
        for i in 0..4000 {
            let t = gen.next_txn(&g, 0, TxnId(i)).unwrap();
            counts[t.dests().first().unwrap().0] += 1;
        }
        for &c in &counts {
            assert!((800..=1200).contains(&c), "uniform draw skewed: {counts:?}");
        }
    }

    #[test]
    fn retry_clone_keeps_ops() {
        let g = line(4);
        let mut gen = HomeGenerator::new(1, ShardId(0), &WorkloadSpec::default());
        let t = gen.next_txn(&g, 0, TxnId(0)).unwrap();
        let r = retry_of(&t, TxnId(9), 17);
        assert_eq!(r.ops, t.ops);
        assert_eq!(r.ts, 17);
        assert_eq!(r.id, TxnId(9));
    }

    #[test]
    fn reduction_matches_source_graph_edges() {
        let edges = vec![(0usize, 1usize), (1, 2), (0, 2)];
        let inst = reduction_instance(3, &edges).unwrap();
        assert_eq!(inst.n_shards, 3);
        assert!(inst.parking_shard.is_none());
        let snap = PendingSnapshot::new(Granularity::Shard, inst.txns.clone());
        let got = snap.edges();
        assert_eq!(got, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn reduction_path_has_no_extra_conflicts() {
        let inst = reduction_instance(3, &[(0, 1), (1, 2)]).unwrap();
        let snap = PendingSnapshot::new(Granularity::Shard, inst.txns.clone());
        assert_eq!(snap.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn isolated_vertices_park_without_conflicts() {
        let inst = reduction_instance(4, &[(0, 1)]).unwrap();
        assert_eq!(inst.parking_shard, Some(ShardId(1)));
        assert_eq!(inst.n_shards, 2);
        let t2 = &inst.txns[2];
        let t3 = &inst.txns[3];
        assert!(!conflicts(t2, t3, Granularity::Shard));
        let snap = PendingSnapshot::new(Granularity::Shard, inst.txns.clone());
        assert_eq!(snap.edges(), vec![(0, 1)]);
    }

    #[test]
    fn reduction_rejects_bad_edges() {
        assert!(reduction_instance(2, &[(0, 2)]).is_err());
        assert!(reduction_instance(2, &[(1, 1)]).is_err());
    }

    #[test]
    fn spec_validation_rejects_nonsense() {
        let mut s = WorkloadSpec {
            k_max: 0,
            ..WorkloadSpec::default()
        };
        assert!(s.check().is_err());
        s.k_max = 2;
        s.write_prob = 1.5;
        assert!(s.check().is_err());
        s.write_prob = 0.5;
        s.zipf_alpha = Some(0.0);
        assert!(s.check().is_err());
        s.zipf_alpha = None;
        assert!(s.check().is_ok());
    }
}
