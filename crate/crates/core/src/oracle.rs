//! Exact reference results for small instances.
//!
//! The exact chromatic number is computed by branch and bound on an
//! adjacency-bitmask representation, completely independent of the
//! incremental greedy coloring, so the two can be compared against each
//! other. Instances are capped at 20 vertices; larger requests fail with
//! a budget error instead of silently taking forever.

use crate::conflict::{conflicts, ConflictGraph, Granularity, Transaction};
use crate::error::{Error, Result};
use serde::Serialize;

pub const MAX_ORACLE_VERTICES: usize = 20;

/// Exact chromatic number of the graph on `n` vertices given by `edges`
/// (self-loops rejected, duplicates fine).
pub fn chromatic_number(n: usize, edges: &[(usize, usize)]) -> Result<u32> {
    if n > MAX_ORACLE_VERTICES {
        return Err(Error::OracleBudget(format!(
            "chromatic number requested for {n} vertices, cap is {MAX_ORACLE_VERTICES}"
        )));
    }
    if n == 0 {
        return Ok(0);
    }
    let mut adj = vec![0u32; n];
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::Usage(format!(
                "edge ({a},{b}) out of range for {n} vertices"
            )));
        }
        if a == b {
            return Err(Error::Usage(format!("self-loop on vertex {a}")));
        }
        adj[a] |= 1 << b;
        adj[b] |= 1 << a;
    }

    // High-degree vertices first tightens pruning.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(adj[v].count_ones()));

    let mut best = greedy_in_order(&adj, &order);
    let mut colors = vec![u32::MAX; n];
    branch(&adj, &order, 0, 0, &mut colors, &mut best);
    Ok(best)
}

fn greedy_in_order(adj: &[u32], order: &[usize]) -> u32 {
    let n = adj.len();
    let mut colors = vec![u32::MAX; n];
    let mut used = 0;
    for &v in order {
        let mut taken = 0u32;
        let mut nb = adj[v];
        while nb != 0 {
            let u = nb.trailing_zeros() as usize;
            nb &= nb - 1;
            if colors[u] != u32::MAX {
                taken |= 1 << colors[u];
            }
        }
        let c = (!taken).trailing_zeros();
        colors[v] = c;
        used = used.max(c + 1);
    }
    used
}

fn branch(adj: &[u32], order: &[usize], idx: usize, used: u32, colors: &mut [u32], best: &mut u32) {
    if used >= *best {
        return;
    }
    if idx == order.len() {
        *best = used;
        return;
    }
    let v = order[idx];
    let mut taken = 0u32;
    let mut nb = adj[v];
    while nb != 0 {
        let u = nb.trailing_zeros() as usize;
        nb &= nb - 1;
        if colors[u] != u32::MAX {
            taken |= 1 << colors[u];
        }
    }
    for c in 0..used.min(*best) {
        if taken & (1 << c) == 0 {
            colors[v] = c;
            branch(adj, order, idx + 1, used, colors, best);
        }
    }
    if used + 1 < *best {
        colors[v] = used;
        branch(adj, order, idx + 1, used + 1, colors, best);
    }
    colors[v] = u32::MAX;
}

/// A frozen set of pending transactions, the unit both the oracle and the
/// measurement code reason about.
#[derive(Debug, Clone)]
pub struct PendingSnapshot {
    pub granularity: Granularity,
    pub txns: Vec<Transaction>,
}

impl PendingSnapshot {
    pub fn new(granularity: Granularity, mut txns: Vec<Transaction>) -> PendingSnapshot {
        txns.sort_by_key(|t| (t.ts, t.id));
        PendingSnapshot { granularity, txns }
    }

    pub fn len(&self) -> usize {
        self.txns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }

    /// Conflict edges as indices into `txns`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.txns.len() {
            for j in i + 1..self.txns.len() {
                if conflicts(&self.txns[i], &self.txns[j], self.granularity) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn max_degree(&self) -> u32 {
        let mut deg = vec![0u32; self.txns.len()];
        for (i, j) in self.edges() {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }

    /// Colors used by the production incremental coloring when the
    /// snapshot arrives in `(ts, id)` order with floor zero.
    pub fn greedy_colors(&self) -> u32 {
        let mut g = ConflictGraph::new(self.granularity);
        let mut max: Option<u64> = None;
        for t in &self.txns {
            let id = t.id;
            g.extend(t.clone());
            let c = g.greedy_color(id, 0);
            max = Some(max.map_or(c, |m: u64| m.max(c)));
        }
        max.map_or(0, |m| m as u32 + 1)
    }

    pub fn chromatic_number(&self) -> Result<u32> {
        chromatic_number(self.txns.len(), &self.edges())
    }

    /// Largest home-to-destination distance over the snapshot, measured on
    /// `g`; the travel component of the stateful lower bound.
    pub fn max_dist(&self, g: &crate::graph::ShardGraph) -> u64 {
        self.txns
            .iter()
            .flat_map(|t| t.dests().into_iter().map(|d| g.distance(t.home, d)))
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Comparison {
    pub n: usize,
    pub m: usize,
    pub greedy: u32,
    pub chi: u32,
    pub max_degree: u32,
}

impl Comparison {
    /// Optimal never exceeds greedy, greedy never exceeds degree + 1.
    pub fn sandwich_holds(&self) -> bool {
        self.chi <= self.greedy && self.greedy <= self.max_degree + 1
    }
}

/// Runs the production greedy coloring and the exact solver on the same
/// snapshot.
pub fn greedy_vs_optimal(snapshot: &PendingSnapshot) -> Result<Comparison> {
    let edges = snapshot.edges();
    Ok(Comparison {
        n: snapshot.len(),
        m: edges.len(),
        greedy: snapshot.greedy_colors(),
        chi: snapshot.chromatic_number()?,
        max_degree: snapshot.max_degree(),
    })
}

/// Minimum ticks any scheduler needs to clear a pending set: the chromatic
/// number of its conflict graph, and for state-shipping schedulers also
/// the farthest home-to-destination distance. Never less than one so it
/// can serve as a ratio denominator.
pub fn lower_bound_tau(chi: u32, max_dist: u64, stateful: bool) -> u64 {
    let base = chi as u64;
    let lb = if stateful { base.max(max_dist) } else { base };
    lb.max(1)
}
