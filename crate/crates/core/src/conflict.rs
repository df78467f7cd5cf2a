//! Transactions, their per-shard access footprints, and the conflict graph
//! the schedulers color.
//!
//! A transaction names a home shard and a set of destination shards; the
//! operations on one destination form a subtransaction. Two transactions
//! conflict when they touch the same destination shard and at least one of
//! them writes there (shard granularity); account granularity narrows that
//! to the same account. Colors partition conflicting transactions into
//! phases: the graph colors each pending transaction greedily with the
//! smallest color at or above a caller-supplied floor that no colored
//! neighbor uses, and colors already handed out never change unless the
//! scheduler explicitly cancels them.

use crate::graph::ShardId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxnId(pub u64);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccountId(pub u64);

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// One account access: reads check `min_balance` (when set), writes also
/// apply `delta`. A condition on a write makes it a guarded debit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub account: AccountId,
    pub write: bool,
    pub delta: i64,
    pub min_balance: Option<i64>,
}

impl Access {
    pub fn read(account: AccountId, min_balance: Option<i64>) -> Access {
        Access {
            account,
            write: false,
            delta: 0,
            min_balance,
        }
    }

    pub fn credit(account: AccountId, amount: i64) -> Access {
        Access {
            account,
            write: true,
            delta: amount,
            min_balance: None,
        }
    }

    pub fn debit(account: AccountId, amount: i64) -> Access {
        Access {
            account,
            write: true,
            delta: -amount,
            min_balance: Some(amount),
        }
    }
}

/// The operations one transaction performs on one destination shard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DestOps {
    pub accesses: Vec<Access>,
}

impl DestOps {
    pub fn writes(&self) -> bool {
        self.accesses.iter().any(|a| a.write)
    }

    pub fn accounts(&self) -> impl Iterator<Item = AccountId> + '_ {
        self.accesses.iter().map(|a| a.account)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxnId,
    pub home: ShardId,
    /// Arrival timestamp at the home shard; ties break by id.
    pub ts: u64,
    pub ops: BTreeMap<ShardId, DestOps>,
}

impl Transaction {
    pub fn dests(&self) -> BTreeSet<ShardId> {
        self.ops.keys().copied().collect()
    }

    pub fn subtxn(&self, dest: ShardId) -> SubTransaction {
        SubTransaction {
            txn: self.id,
            home: self.home,
            ts: self.ts,
            dest,
            ops: self.ops[&dest].clone(),
        }
    }
}

/// The piece of a transaction shipped to one destination shard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTransaction {
    pub txn: TxnId,
    pub home: ShardId,
    pub ts: u64,
    pub dest: ShardId,
    pub ops: DestOps,
}

/// Lifecycle of a transaction inside a scheduler run. Order matters:
/// `advance` only moves forward, except for the explicit retry loop
/// (aborted attempts re-enter as fresh transactions, not by moving back).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxnStatus {
    Pending,
    Scheduled,
    Committed,
    Aborted,
}

impl fmt::Display for TxnStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TxnStatus::Pending => "pending",
            TxnStatus::Scheduled => "scheduled",
            TxnStatus::Committed => "committed",
            TxnStatus::Aborted => "aborted",
        };
        f.write_str(s)
    }
}

/// Conflict granularity: shard level treats any write-sharing pair on a
/// common destination as conflicting; account level requires the same
/// account.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Shard,
    Account,
}

pub fn conflicts(a: &Transaction, b: &Transaction, g: Granularity) -> bool {
    for (shard, ops_a) in &a.ops {
        let Some(ops_b) = b.ops.get(shard) else {
            continue;
        };
        match g {
            Granularity::Shard => {
                if ops_a.writes() || ops_b.writes() {
                    return true;
                }
            }
            Granularity::Account => {
                for acc_a in &ops_a.accesses {
                    for acc_b in &ops_b.accesses {
                        if acc_a.account == acc_b.account && (acc_a.write || acc_b.write) {
                            return true;
                        }
                    }
                }
            }
        }
    }
    false
}

pub type Color = u64;

#[derive(Debug, Clone)]
struct Node {
    txn: Transaction,
    color: Option<Color>,
    neighbors: BTreeSet<TxnId>,
}

/// Incrementally colored conflict graph over the currently pending
/// transactions of one scheduler.
///
/// Invariants: adjacent colored nodes never share a color, and a node's
/// color survives until the node is removed or its color is cancelled.
#[derive(Debug, Clone, Default)]
pub struct ConflictGraph {
    granularity: Granularity,
    nodes: BTreeMap<TxnId, Node>,
}

impl ConflictGraph {
    pub fn new(granularity: Granularity) -> ConflictGraph {
        ConflictGraph {
            granularity,
            nodes: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: TxnId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn txn(&self, id: TxnId) -> Option<&Transaction> {
        self.nodes.get(&id).map(|n| &n.txn)
    }

    pub fn color_of(&self, id: TxnId) -> Option<Color> {
        self.nodes.get(&id).and_then(|n| n.color)
    }

    pub fn ids(&self) -> impl Iterator<Item = TxnId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn neighbors(&self, id: TxnId) -> impl Iterator<Item = TxnId> + '_ {
        self.nodes
            .get(&id)
            .into_iter()
            .flat_map(|n| n.neighbors.iter().copied())
    }

    /// Inserts a transaction and wires up conflict edges against every
    /// transaction already present. The new node starts uncolored.
    pub fn extend(&mut self, txn: Transaction) {
        let id = txn.id;
        assert!(!self.nodes.contains_key(&id), "{id} already in graph");
        let mut neighbors = BTreeSet::new();
        for (other_id, other) in &mut self.nodes {
            if conflicts(&txn, &other.txn, self.granularity) {
                neighbors.insert(*other_id);
                other.neighbors.insert(id);
            }
        }
        self.nodes.insert(
            id,
            Node {
                txn,
                color: None,
                neighbors,
            },
        );
    }

    /// Smallest color used by any colored node still in the graph; zero
    /// when none is colored. Schedulers use this as a progress floor.
    pub fn color_floor(&self) -> Color {
        self.nodes
            .values()
            .filter_map(|n| n.color)
            .min()
            .unwrap_or(0)
    }

    /// Greedily assigns the smallest color `>= floor` not used by any
    /// colored neighbor. Returns the assigned color.
    pub fn greedy_color(&mut self, id: TxnId, floor: Color) -> Color {
        let node = &self.nodes[&id];
        assert!(node.color.is_none(), "{id} is already colored");
        let taken: BTreeSet<Color> = node
            .neighbors
            .iter()
            .filter_map(|n| self.nodes[n].color)
            .collect();
        let mut color = floor;
        while taken.contains(&color) {
            color += 1;
        }
        self.nodes.get_mut(&id).unwrap().color = Some(color);
        color
    }

    /// Drops a node's color so it can be re-colored later. The node and
    /// its edges stay.
    pub fn cancel_color(&mut self, id: TxnId) {
        self.nodes.get_mut(&id).unwrap().color = None;
    }

    /// Removes a finalized transaction and its edges.
    pub fn remove(&mut self, id: TxnId) -> Transaction {
        let node = self.nodes.remove(&id).expect("removing unknown txn");
        for n in &node.neighbors {
            self.nodes.get_mut(n).unwrap().neighbors.remove(&id);
        }
        node.txn
    }

    /// Colored nodes grouped by color, ascending; within a color sorted by
    /// `(ts, id)`. This is the order a stateful scheduler processes them.
    pub fn colored_by_phase(&self) -> Vec<(Color, Vec<TxnId>)> {
        let mut phases: BTreeMap<Color, Vec<(u64, TxnId)>> = BTreeMap::new();
        for (id, n) in &self.nodes {
            if let Some(c) = n.color {
                phases.entry(c).or_default().push((n.txn.ts, *id));
            }
        }
        phases
            .into_iter()
            .map(|(c, mut v)| {
                v.sort();
                (c, v.into_iter().map(|(_, id)| id).collect())
            })
            .collect()
    }

    pub fn uncolored(&self) -> Vec<TxnId> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.color.is_none())
            .map(|(id, _)| *id)
            .collect()
    }

    /// Checks the proper-coloring invariant; test support.
    pub fn coloring_is_proper(&self) -> bool {
        self.nodes.values().all(|n| {
            n.color.is_none()
                || n.neighbors
                    .iter()
                    .all(|m| self.nodes[m].color != n.color)
        })
    }

    /// Undirected conflict edges as id pairs, each listed once.
    pub fn edges(&self) -> Vec<(TxnId, TxnId)> {
        let mut out = Vec::new();
        for (id, n) in &self.nodes {
            for m in &n.neighbors {
                if id < m {
                    out.push((*id, *m));
                }
            }
        }
        out
    }
}
