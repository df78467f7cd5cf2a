//! Shard-level view of the system.
//!
//! Shards are atomic endpoints; accounts live inside them and messages travel
//! between them. The communication structure is a complete weighted graph
//! whose integer edge weights are shortest-path distances (metric closure of
//! the input topology), so `distance` is symmetric and obeys the triangle
//! inequality by construction.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Index of a shard, in `[0, s)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ShardId(pub usize);

impl fmt::Display for ShardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

/// Input topologies. Every variant is reduced to a distance matrix by metric
/// closure, so downstream code never sees the difference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Topology {
    /// Complete graph on `s` shards, every edge weight `w`.
    Clique { s: usize, w: u64 },
    /// Path graph `S0 - S1 - ... - S(s-1)`, consecutive edge weight `w`.
    Line { s: usize, w: u64 },
    /// `a x b` grid, row-major shard ids, neighbor edge weight `w`.
    Grid { a: usize, b: usize, w: u64 },
    /// `s` distinct points on an integer grid with Manhattan distances,
    /// placed by a seeded generator.
    RandomMetric { s: usize, seed: u64 },
}

/// Complete metric over shards plus the graph diameter `D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardGraph {
    s: usize,
    dist: Vec<u64>,
    diameter: u64,
}

impl ShardGraph {
    /// Builds the metric closure of `topology`.
    pub fn build(topology: &Topology) -> Result<ShardGraph> {
        match *topology {
            Topology::Clique { s, w } => {
                check_params(s, w)?;
                let mut m = Matrix::new(s);
                for i in 0..s {
                    for j in (i + 1)..s {
                        m.set(i, j, w);
                    }
                }
                m.close()
            }
            Topology::Line { s, w } => {
                check_params(s, w)?;
                let mut m = Matrix::new(s);
                for i in 0..s.saturating_sub(1) {
                    m.set(i, i + 1, w);
                }
                m.close()
            }
            Topology::Grid { a, b, w } => {
                let s = a.checked_mul(b).unwrap_or(0);
                check_params(s, w)?;
                if a == 0 || b == 0 {
                    return Err(Error::Config("grid sides must be positive".into()));
                }
                let mut m = Matrix::new(s);
                for r in 0..a {
                    for c in 0..b {
                        let id = r * b + c;
                        if c + 1 < b {
                            m.set(id, id + 1, w);
                        }
                        if r + 1 < a {
                            m.set(id, id + b, w);
                        }
                    }
                }
                m.close()
            }
            Topology::RandomMetric { s, seed } => {
                check_params(s, 1)?;
                let points = random_points(s, seed);
                let mut m = Matrix::new(s);
                for i in 0..s {
                    for j in (i + 1)..s {
                        let (xi, yi) = points[i];
                        let (xj, yj) = points[j];
                        let d = xi.abs_diff(xj) + yi.abs_diff(yj);
                        m.set(i, j, d);
                    }
                }
                m.close()
            }
        }
    }

    /// Number of shards `s`.
    pub fn n_shards(&self) -> usize {
        self.s
    }

    /// Iterates `S0 .. S(s-1)`.
    pub fn shards(&self) -> impl Iterator<Item = ShardId> {
        (0..self.s).map(ShardId)
    }

    /// Shortest-path distance between two shards. Zero iff `u == v`
    /// (distinct shards always end up at positive distance).
    pub fn distance(&self, u: ShardId, v: ShardId) -> u64 {
        assert!(u.0 < self.s && v.0 < self.s, "shard out of range");
        self.dist[u.0 * self.s + v.0]
    }

    /// Maximum pairwise distance `D`.
    pub fn diameter(&self) -> u64 {
        self.diameter
    }

    /// All shards within distance `z` of `center`, including `center`
    /// itself. Sorted by shard index.
    pub fn z_neighborhood(&self, center: ShardId, z: u64) -> BTreeSet<ShardId> {
        self.shards()
            .filter(|&v| self.distance(center, v) <= z)
            .collect()
    }

    /// Largest pairwise distance within `members` (the members form a
    /// complete subgraph of the metric closure, so this is also the strong
    /// diameter of the set).
    pub fn set_diameter<'a>(&self, members: impl IntoIterator<Item = &'a ShardId>) -> u64 {
        let v: Vec<ShardId> = members.into_iter().copied().collect();
        let mut d = 0;
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                d = d.max(self.distance(v[i], v[j]));
            }
        }
        d
    }
}

fn check_params(s: usize, w: u64) -> Result<()> {
    if s == 0 {
        return Err(Error::Config("shard count must be positive".into()));
    }
    if w == 0 {
        return Err(Error::Config("edge weight must be positive".into()));
    }
    Ok(())
}

/// Distinct integer-grid points, deterministic in `seed`. The grid side is
/// scaled so that rejection sampling terminates quickly.
fn random_points(s: usize, seed: u64) -> Vec<(u64, u64)> {
    let side = (2 * s + 4) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut points = Vec::with_capacity(s);
    while points.len() < s {
        let p = (rng.random_range(0..side), rng.random_range(0..side));
        if seen.insert(p) {
            points.push(p);
        }
    }
    points
}

/// Symmetric weight matrix under construction; `u64::MAX` marks "no edge".
struct Matrix {
    s: usize,
    w: Vec<u64>,
}

impl Matrix {
    fn new(s: usize) -> Matrix {
        let mut w = vec![u64::MAX; s * s];
        for i in 0..s {
            w[i * s + i] = 0;
        }
        Matrix { s, w }
    }

    fn set(&mut self, i: usize, j: usize, d: u64) {
        self.w[i * self.s + j] = d;
        self.w[j * self.s + i] = d;
    }

    /// Floyd-Warshall closure. Rejects disconnected inputs rather than
    /// leaving infinities in the metric.
    fn close(mut self) -> Result<ShardGraph> {
        let s = self.s;
        for k in 0..s {
            for i in 0..s {
                let dik = self.w[i * s + k];
                if dik == u64::MAX {
                    continue;
                }
                for j in 0..s {
                    let dkj = self.w[k * s + j];
                    if dkj == u64::MAX {
                        continue;
                    }
                    let through = dik + dkj;
                    if through < self.w[i * s + j] {
                        self.w[i * s + j] = through;
                        self.w[j * s + i] = through;
                    }
                }
            }
        }
        let mut diameter = 0;
        for i in 0..s {
            for j in 0..s {
                let d = self.w[i * s + j];
                if d == u64::MAX {
                    return Err(Error::Config("topology is disconnected".into()));
                }
                diameter = diameter.max(d);
            }
        }
        Ok(ShardGraph {
            s,
            dist: self.w,
            diameter,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent shortest-path oracle: repeated edge relaxation over the
    /// raw adjacency until a fixpoint, nothing shared with `Matrix::close`.
    fn relaxation_oracle(s: usize, edges: &[(usize, usize, u64)]) -> Vec<Vec<u64>> {
        let inf = u64::MAX / 4;
        let mut d = vec![vec![inf; s]; s];
        for i in 0..s {
            d[i][i] = 0;
        }
        for &(u, v, w) in edges {
            d[u][v] = d[u][v].min(w);
            d[v][u] = d[v][u].min(w);
        }
        loop {
            let mut changed = false;
            for &(u, v, w) in edges {
                for src in 0..s {
                    if d[src][u] + w < d[src][v] {
                        d[src][v] = d[src][u] + w;
                        changed = true;
                    }
                    if d[src][v] + w < d[src][u] {
                        d[src][u] = d[src][v] + w;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        d
    }

    #[test]
    fn unit_clique_distances() {
        let g = ShardGraph::build(&Topology::Clique { s: 4, w: 1 }).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0 } else { 1 };
                assert_eq!(g.distance(ShardId(i), ShardId(j)), want);
            }
        }
        assert_eq!(g.diameter(), 1);
    }

    #[test]
    fn line_distances() {
        let g = ShardGraph::build(&Topology::Line { s: 5, w: 1 }).unwrap();
        assert_eq!(g.distance(ShardId(0), ShardId(4)), 4);
        assert_eq!(g.distance(ShardId(1), ShardId(3)), 2);
        assert_eq!(g.diameter(), 4);

        let g4 = ShardGraph::build(&Topology::Line { s: 4, w: 1 }).unwrap();
        assert_eq!(g4.diameter(), 3);
    }

    #[test]
    fn single_shard_graph() {
        let g = ShardGraph::build(&Topology::Clique { s: 1, w: 1 }).unwrap();
        assert_eq!(g.n_shards(), 1);
        assert_eq!(g.distance(ShardId(0), ShardId(0)), 0);
        assert_eq!(g.diameter(), 0);
    }

    #[test]
    fn grid_matches_relaxation_oracle() {
        let (a, b, w) = (3, 4, 2);
        let g = ShardGraph::build(&Topology::Grid { a, b, w }).unwrap();
        let mut edges = Vec::new();
        for r in 0..a {
            for c in 0..b {
                let id = r * b + c;
                if c + 1 < b {
                    edges.push((id, id + 1, w));
                }
                if r + 1 < a {
                    edges.push((id, id + b, w));
                }
            }
        }
        let want = relaxation_oracle(a * b, &edges);
        for i in 0..a * b {
            for j in 0..a * b {
                assert_eq!(g.distance(ShardId(i), ShardId(j)), want[i][j]);
            }
        }
        // Manhattan spot checks: opposite corners of a 3x4 grid.
        assert_eq!(g.distance(ShardId(0), ShardId(11)), (2 + 3) * 2);
    }

    #[test]
    fn z_neighborhood_line() {
        let g = ShardGraph::build(&Topology::Line { s: 5, w: 1 }).unwrap();
        let hood: Vec<ShardId> = g.z_neighborhood(ShardId(2), 1).into_iter().collect();
        assert_eq!(hood, vec![ShardId(1), ShardId(2), ShardId(3)]);
        let own: Vec<ShardId> = g.z_neighborhood(ShardId(2), 0).into_iter().collect();
        assert_eq!(own, vec![ShardId(2)]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ShardGraph::build(&Topology::Clique { s: 0, w: 1 }).is_err());
        assert!(ShardGraph::build(&Topology::Line { s: 3, w: 0 }).is_err());
        assert!(ShardGraph::build(&Topology::Grid { a: 0, b: 3, w: 1 }).is_err());
    }

    #[test]
    fn random_metric_is_deterministic_and_positive() {
        let t = Topology::RandomMetric { s: 12, seed: 42 };
        let g1 = ShardGraph::build(&t).unwrap();
        let g2 = ShardGraph::build(&t).unwrap();
        assert_eq!(g1, g2);
        for i in 0..12 {
            for j in 0..12 {
                if i != j {
                    assert!(g1.distance(ShardId(i), ShardId(j)) > 0);
                }
            }
        }
        let other = ShardGraph::build(&Topology::RandomMetric { s: 12, seed: 43 }).unwrap();
        assert_ne!(g1, other);
    }

    proptest! {
        #[test]
        fn closure_is_metric_and_idempotent(s in 2usize..20, seed in 0u64..500) {
            let g = ShardGraph::build(&Topology::RandomMetric { s, seed }).unwrap();
            for i in 0..s {
                for j in 0..s {
                    let dij = g.distance(ShardId(i), ShardId(j));
                    prop_assert_eq!(dij, g.distance(ShardId(j), ShardId(i)));
                    for k in 0..s {
                        prop_assert!(dij <= g.distance(ShardId(i), ShardId(k)) + g.distance(ShardId(k), ShardId(j)));
                    }
                }
            }
            // Re-closing the already-closed metric must not change anything.
            let mut m = Matrix::new(s);
            for i in 0..s {
                for j in (i + 1)..s {
                    m.set(i, j, g.distance(ShardId(i), ShardId(j)));
                }
            }
            let again = m.close().unwrap();
            prop_assert_eq!(&again, &g);
        }

        #[test]
        fn neighborhood_grows_with_z(s in 1usize..16, seed in 0u64..200, c in 0usize..16, z in 0u64..40) {
            let g = ShardGraph::build(&Topology::RandomMetric { s, seed }).unwrap();
            let c = ShardId(c % s);
            let small = g.z_neighborhood(c, z);
            let large = g.z_neighborhood(c, z + 1);
            prop_assert!(small.is_subset(&large));
            prop_assert!(small.contains(&c));
            let everything = g.z_neighborhood(c, g.diameter());
            prop_assert_eq!(everything.len(), s);
        }
    }
}
