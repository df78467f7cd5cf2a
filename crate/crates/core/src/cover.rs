//! Sparse-cover cluster hierarchy over the shard graph.
//!
//! Layer `q` works at scale `2^q`; each layer holds a small stack of
//! sublayers, and every sublayer partitions the shards into clusters of
//! bounded strong diameter. Together the sublayers of layer `q` guarantee
//! that every shard has some cluster containing its whole `(2^q - 1)`-
//! neighborhood, which is what lets a transaction find a cluster that
//! encloses all of its destinations. Each cluster designates its carving
//! center as leader, so the leader's `(2^q - 1)`-neighborhood stays inside
//! the cluster.
//!
//! Heights `(q, r)` are ordered lexicographically; the bottom height is
//! `(0, 0)` and higher sublayers of the same layer count as higher clusters.

use crate::error::{Error, Result};
use crate::graph::{ShardGraph, ShardId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Globally unique cluster index within one hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterId(pub usize);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0)
    }
}

/// Position of a cluster in the hierarchy: layer `q`, sublayer `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Height {
    pub q: u32,
    pub r: u32,
}

impl fmt::Display for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.q, self.r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub id: ClusterId,
    pub height: Height,
    pub leader: ShardId,
    pub members: BTreeSet<ShardId>,
    /// Max pairwise member distance (strong diameter, since the metric
    /// closure keeps every pair directly connected).
    pub diameter: u64,
}

impl Cluster {
    pub fn contains(&self, s: ShardId) -> bool {
        self.members.contains(&s)
    }

    pub fn overlaps(&self, other: &Cluster) -> bool {
        self.members.intersection(&other.members).next().is_some()
    }
}

/// Construction knobs. `c_diam` scales the per-cluster diameter bound,
/// `c_sub` caps how many sublayers one layer may use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverParams {
    pub c_diam: u64,
    pub c_sub: u32,
}

impl Default for CoverParams {
    fn default() -> Self {
        CoverParams { c_diam: 4, c_sub: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverHierarchy {
    params: CoverParams,
    /// log-factor `max(1, ceil(log2 s))` used by every radius in the build.
    log_s: u64,
    clusters: Vec<Cluster>,
    /// `by_layer[q][r]` lists the cluster ids of sublayer `(q, r)`.
    by_layer: Vec<Vec<Vec<ClusterId>>>,
}

impl CoverHierarchy {
    /// Builds the hierarchy by deterministic greedy ball carving.
    ///
    /// Layer count is `ceil(log2 D) + 1` (one layer when `D = 0`). Each
    /// layer starts with `max(1, ceil(log2 s))` sublayers whose carving
    /// order is rotated per sublayer; if some shard's `(2^q - 1)`-
    /// neighborhood is still split across clusters, dedicated sublayers are
    /// carved around the offending shards until the layer covers everyone
    /// or the `c_sub` budget is exhausted.
    pub fn build(g: &ShardGraph, params: CoverParams) -> Result<CoverHierarchy> {
        if params.c_diam == 0 || params.c_sub == 0 {
            return Err(Error::Config("cover constants must be positive".into()));
        }
        let s = g.n_shards();
        let h1 = layer_count(g.diameter());
        let log_s = max_log2(s as u64);
        let budget = params.c_sub as usize * log_s as usize;

        let mut clusters = Vec::new();
        let mut by_layer = Vec::with_capacity(h1 as usize);
        for q in 0..h1 {
            let radius = (1u64 << q) * log_s;
            let nb = (1u64 << q) - 1;
            let mut sublayers: Vec<Vec<(ShardId, BTreeSet<ShardId>)>> = Vec::new();
            for r in 0..log_s {
                let offset = (r as usize * s.div_ceil(log_s as usize)) % s;
                sublayers.push(carve_sublayer(g, radius, nb, offset, &[]));
            }
            let mut violators = containment_violators(g, nb, &sublayers);
            while !violators.is_empty() {
                if sublayers.len() >= budget {
                    return Err(Error::Cover(format!(
                        "layer {q}: {} shards still lack a covering cluster after {} sublayers",
                        violators.len(),
                        sublayers.len()
                    )));
                }
                sublayers.push(carve_sublayer(g, radius, nb, 0, &violators));
                violators = containment_violators(g, nb, &sublayers);
            }

            let mut layer_ids = Vec::with_capacity(sublayers.len());
            for (r, sub) in sublayers.into_iter().enumerate() {
                let mut ids = Vec::with_capacity(sub.len());
                for (leader, members) in sub {
                    let id = ClusterId(clusters.len());
                    let diameter = g.set_diameter(&members);
                    clusters.push(Cluster {
                        id,
                        height: Height { q, r: r as u32 },
                        leader,
                        members,
                        diameter,
                    });
                    ids.push(id);
                }
                layer_ids.push(ids);
            }
            by_layer.push(layer_ids);
        }

        Ok(CoverHierarchy {
            params,
            log_s,
            clusters,
            by_layer,
        })
    }

    /// Degenerate hierarchy for single-leader schedulers: one cluster at
    /// height `(0, 0)` spanning every shard, led by `leader`.
    pub fn single_cluster(g: &ShardGraph, leader: ShardId) -> CoverHierarchy {
        let members: BTreeSet<ShardId> = g.shards().collect();
        let cluster = Cluster {
            id: ClusterId(0),
            height: Height { q: 0, r: 0 },
            leader,
            members,
            diameter: g.diameter(),
        };
        CoverHierarchy {
            params: CoverParams::default(),
            log_s: max_log2(g.n_shards() as u64),
            clusters: vec![cluster],
            by_layer: vec![vec![vec![ClusterId(0)]]],
        }
    }

    /// Test hook: assembles a hierarchy from explicit sublayers without
    /// running the carving construction. `verify` treats it like any other.
    pub fn from_parts(
        params: CoverParams,
        log_s: u64,
        sublayers: Vec<Vec<Vec<(ShardId, BTreeSet<ShardId>)>>>,
    ) -> CoverHierarchy {
        let mut clusters = Vec::new();
        let mut by_layer = Vec::new();
        for (q, subs) in sublayers.into_iter().enumerate() {
            let mut layer_ids = Vec::new();
            for (r, sub) in subs.into_iter().enumerate() {
                let mut ids = Vec::new();
                for (leader, members) in sub {
                    let id = ClusterId(clusters.len());
                    clusters.push(Cluster {
                        id,
                        height: Height {
                            q: q as u32,
                            r: r as u32,
                        },
                        leader,
                        members,
                        diameter: 0,
                    });
                    ids.push(id);
                }
                layer_ids.push(ids);
            }
            by_layer.push(layer_ids);
        }
        let mut h = CoverHierarchy {
            params,
            log_s,
            clusters,
            by_layer,
        };
        for c in &mut h.clusters {
            c.diameter = 0; // recomputed by verify against the graph
        }
        h
    }

    pub fn params(&self) -> CoverParams {
        self.params
    }

    pub fn n_layers(&self) -> u32 {
        self.by_layer.len() as u32
    }

    pub fn n_sublayers(&self, q: u32) -> u32 {
        self.by_layer[q as usize].len() as u32
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster(&self, id: ClusterId) -> &Cluster {
        &self.clusters[id.0]
    }

    pub fn sublayer(&self, q: u32, r: u32) -> impl Iterator<Item = &Cluster> {
        self.by_layer[q as usize][r as usize]
            .iter()
            .map(|id| &self.clusters[id.0])
    }

    /// Clusters at height `(0, 0)`; these hold scheduling control at start.
    pub fn base_clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.sublayer(0, 0)
    }

    /// Base-region ids (height `(0,0)` clusters) overlapping `id`.
    pub fn base_regions(&self, id: ClusterId) -> Vec<ClusterId> {
        let c = self.cluster(id);
        self.base_clusters()
            .filter(|b| b.overlaps(c))
            .map(|b| b.id)
            .collect()
    }

    /// The lowest-height cluster containing the whole `z`-neighborhood of
    /// `home`, where `z` is the largest home-to-destination distance. The
    /// top layer always has an all-shard cluster, so this cannot miss.
    /// Ties at equal height resolve to the smallest cluster id.
    pub fn home_cluster(&self, g: &ShardGraph, home: ShardId, dests: &BTreeSet<ShardId>) -> &Cluster {
        let z = dests
            .iter()
            .map(|&d| g.distance(home, d))
            .max()
            .unwrap_or(0);
        let ball = g.z_neighborhood(home, z);
        self.clusters
            .iter()
            .find(|c| ball.iter().all(|m| c.members.contains(m)))
            .expect("hierarchy invariant: top layer covers every neighborhood")
    }

    /// One text record per cluster, the `verify-cover --dump` format.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for c in &self.clusters {
            let members: Vec<String> = c.members.iter().map(|m| m.to_string()).collect();
            out.push_str(&format!(
                "cluster {} layer {} sublayer {} leader {} members {}\n",
                c.id.0,
                c.height.q,
                c.height.r,
                c.leader,
                members.join(",")
            ));
        }
        out
    }
}

/// `ceil(log2 d) + 1` layers; a zero-diameter graph still gets one.
fn layer_count(diameter: u64) -> u32 {
    if diameter == 0 {
        1
    } else {
        ceil_log2(diameter) + 1
    }
}

fn ceil_log2(x: u64) -> u32 {
    debug_assert!(x >= 1);
    64 - (x - 1).leading_zeros().min(64) as u32
}

fn max_log2(s: u64) -> u64 {
    ceil_log2(s.max(1)).max(1) as u64
}

/// Carves one partition of the shard set.
///
/// Centers must have their full `nb`-neighborhood unassigned so the leader
/// rule holds; `priority` shards are tried first (they are the ones whose
/// neighborhoods previous sublayers failed to cover), then the rotated
/// scan order. Leftover shards whose neighborhoods were eaten by earlier
/// balls are merged into the carved cluster nearest to them, which keeps
/// the diameter within `2*radius + 2*nb`.
fn carve_sublayer(
    g: &ShardGraph,
    radius: u64,
    nb: u64,
    offset: usize,
    priority: &[ShardId],
) -> Vec<(ShardId, BTreeSet<ShardId>)> {
    let s = g.n_shards();
    let mut unassigned: BTreeSet<ShardId> = g.shards().collect();
    let mut carved: Vec<(ShardId, BTreeSet<ShardId>)> = Vec::new();

    let try_carve = |center: ShardId,
                     unassigned: &mut BTreeSet<ShardId>,
                     carved: &mut Vec<(ShardId, BTreeSet<ShardId>)>|
     -> bool {
        if !unassigned.contains(&center) {
            return false;
        }
        let hood = g.z_neighborhood(center, nb);
        if !hood.iter().all(|m| unassigned.contains(m)) {
            return false;
        }
        let members: BTreeSet<ShardId> = g
            .z_neighborhood(center, radius)
            .into_iter()
            .filter(|m| unassigned.contains(m))
            .collect();
        for m in &members {
            unassigned.remove(m);
        }
        carved.push((center, members));
        true
    };

    for &p in priority {
        try_carve(p, &mut unassigned, &mut carved);
    }
    let order: Vec<ShardId> = (0..s).map(|i| ShardId((i + offset) % s)).collect();
    loop {
        let mut advanced = false;
        for &c in &order {
            if try_carve(c, &mut unassigned, &mut carved) {
                advanced = true;
            }
        }
        if !advanced {
            break;
        }
    }

    // Whatever remains has a carved neighbor within `nb`; fold each shard
    // into the nearest carved ball (distances measured against the carved
    // membership, so merges cannot chain).
    let snapshot: Vec<(usize, BTreeSet<ShardId>)> = carved
        .iter()
        .enumerate()
        .map(|(i, (_, m))| (i, m.clone()))
        .collect();
    let leftovers: Vec<ShardId> = unassigned.iter().copied().collect();
    for x in leftovers {
        let mut best: Option<(u64, usize)> = None;
        for (i, members) in &snapshot {
            let d = members
                .iter()
                .map(|&m| g.distance(x, m))
                .min()
                .unwrap_or(u64::MAX);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, *i));
            }
        }
        let (d, i) = best.expect("carving always produces at least one ball");
        debug_assert!(d <= nb, "leftover shard {x} is {d} away from every ball");
        carved[i].1.insert(x);
        unassigned.remove(&x);
    }
    carved
}

/// Shards whose `nb`-neighborhood is not fully inside any single cluster of
/// the given sublayers.
fn containment_violators(
    g: &ShardGraph,
    nb: u64,
    sublayers: &[Vec<(ShardId, BTreeSet<ShardId>)>],
) -> Vec<ShardId> {
    g.shards()
        .filter(|&x| {
            let hood = g.z_neighborhood(x, nb);
            !sublayers.iter().any(|sub| {
                sub.iter()
                    .any(|(_, members)| hood.iter().all(|m| members.contains(m)))
            })
        })
        .collect()
}

/// Outcome of one verification property.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    pub pass: bool,
    pub failures: Vec<String>,
}

impl PropertyCheck {
    fn new() -> PropertyCheck {
        PropertyCheck {
            pass: true,
            failures: Vec::new(),
        }
    }

    fn fail(&mut self, msg: String) {
        self.pass = false;
        if self.failures.len() < 5 {
            self.failures.push(msg);
        }
    }
}

/// Full verification report; `pass()` is the conjunction of the parts.
#[derive(Debug, Clone, Serialize)]
pub struct CoverReport {
    pub partition: PropertyCheck,
    pub diameter: PropertyCheck,
    pub membership: PropertyCheck,
    pub containment: PropertyCheck,
    pub leader_rule: PropertyCheck,
}

impl CoverReport {
    pub fn pass(&self) -> bool {
        self.partition.pass
            && self.diameter.pass
            && self.membership.pass
            && self.containment.pass
            && self.leader_rule.pass
    }

    pub fn lines(&self) -> Vec<String> {
        let fmt = |name: &str, c: &PropertyCheck| {
            if c.pass {
                format!("{name}: pass")
            } else {
                format!("{name}: FAIL ({})", c.failures.join("; "))
            }
        };
        vec![
            fmt("partition", &self.partition),
            fmt("diameter", &self.diameter),
            fmt("membership", &self.membership),
            fmt("containment", &self.containment),
            fmt("leader-rule", &self.leader_rule),
        ]
    }
}

/// Checks every hierarchy property against `g`: sublayers partition the
/// shards, cluster diameters respect `c_diam * 2^q * max(1, ceil(log2 s))`,
/// per-layer membership counts stay within the sublayer budget, every
/// shard's `(2^q - 1)`-neighborhood is contained in some cluster of the
/// layer, and every leader keeps its `(2^q - 1)`-neighborhood inside its
/// own cluster.
pub fn verify_cover(g: &ShardGraph, h: &CoverHierarchy) -> CoverReport {
    let log_s = max_log2(g.n_shards() as u64);
    let budget = h.params().c_sub as u64 * log_s;
    let mut report = CoverReport {
        partition: PropertyCheck::new(),
        diameter: PropertyCheck::new(),
        membership: PropertyCheck::new(),
        containment: PropertyCheck::new(),
        leader_rule: PropertyCheck::new(),
    };

    for q in 0..h.n_layers() {
        let nb = (1u64 << q) - 1;
        let bound = h.params().c_diam * (1u64 << q) * log_s;

        if h.n_sublayers(q) as u64 > budget {
            report.membership.fail(format!(
                "layer {q} uses {} sublayers, budget {budget}",
                h.n_sublayers(q)
            ));
        }
        for r in 0..h.n_sublayers(q) {
            let mut seen: BTreeSet<ShardId> = BTreeSet::new();
            for c in h.sublayer(q, r) {
                for &m in &c.members {
                    if !seen.insert(m) {
                        report
                            .partition
                            .fail(format!("sublayer ({q},{r}): {m} in two clusters"));
                    }
                }
            }
            for x in g.shards() {
                if !seen.contains(&x) {
                    report
                        .partition
                        .fail(format!("sublayer ({q},{r}): {x} unassigned"));
                }
            }
        }

        let mut counts = vec![0u64; g.n_shards()];
        for r in 0..h.n_sublayers(q) {
            for c in h.sublayer(q, r) {
                let d = g.set_diameter(&c.members);
                if d > bound {
                    report
                        .diameter
                        .fail(format!("{} at {} has diameter {d} > {bound}", c.id, c.height));
                }
                if !c.members.contains(&c.leader) {
                    report
                        .leader_rule
                        .fail(format!("{} leader {} not a member", c.id, c.leader));
                } else {
                    let hood = g.z_neighborhood(c.leader, nb);
                    if !hood.iter().all(|m| c.members.contains(m)) {
                        report.leader_rule.fail(format!(
                            "{} leader {} has {}-neighborhood outside the cluster",
                            c.id, c.leader, nb
                        ));
                    }
                }
                for &m in &c.members {
                    counts[m.0] += 1;
                }
            }
        }
        for x in g.shards() {
            if counts[x.0] > budget {
                report.membership.fail(format!(
                    "layer {q}: {x} belongs to {} clusters, budget {budget}",
                    counts[x.0]
                ));
            }
        }

        for x in g.shards() {
            let hood = g.z_neighborhood(x, nb);
            let covered = (0..h.n_sublayers(q)).any(|r| {
                h.sublayer(q, r)
                    .any(|c| hood.iter().all(|m| c.members.contains(m)))
            });
            if !covered {
                report.containment.fail(format!(
                    "layer {q}: no cluster contains the {nb}-neighborhood of {x}"
                ));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;

    fn build(t: &Topology) -> (ShardGraph, CoverHierarchy) {
        let g = ShardGraph::build(t).unwrap();
        let h = CoverHierarchy::build(&g, CoverParams::default()).unwrap();
        (g, h)
    }

    #[test]
    fn clique_has_single_layer() {
        let (g, h) = build(&Topology::Clique { s: 4, w: 1 });
        assert_eq!(h.n_layers(), 1);
        assert!(verify_cover(&g, &h).pass());
    }

    #[test]
    fn line_layer_counts() {
        let (g, h) = build(&Topology::Line { s: 4, w: 1 });
        assert_eq!(h.n_layers(), 3); // D = 3
        assert!(verify_cover(&g, &h).pass());

        let (g5, h5) = build(&Topology::Line { s: 5, w: 1 });
        assert_eq!(h5.n_layers(), 3); // D = 4
        assert!(verify_cover(&g5, &h5).pass());
    }

    #[test]
    fn single_shard_hierarchy() {
        let (g, h) = build(&Topology::Clique { s: 1, w: 1 });
        assert_eq!(h.n_layers(), 1);
        assert_eq!(h.clusters().len(), 1);
        assert_eq!(h.cluster(ClusterId(0)).leader, ShardId(0));
        assert!(verify_cover(&g, &h).pass());
    }

    #[test]
    fn top_layer_has_all_shard_cluster() {
        for t in [
            Topology::Line { s: 9, w: 1 },
            Topology::Grid { a: 3, b: 3, w: 2 },
            Topology::RandomMetric { s: 10, seed: 5 },
        ] {
            let (g, h) = build(&t);
            let top = h.n_layers() - 1;
            let all: BTreeSet<ShardId> = g.shards().collect();
            assert!(
                h.sublayer(top, 0).any(|c| c.members == all),
                "top layer lacks an all-shard cluster for {t:?}"
            );
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let g = ShardGraph::build(&Topology::RandomMetric { s: 16, seed: 9 }).unwrap();
        let h1 = CoverHierarchy::build(&g, CoverParams::default()).unwrap();
        let h2 = CoverHierarchy::build(&g, CoverParams::default()).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn verify_passes_across_topologies() {
        for t in [
            Topology::Clique { s: 9, w: 2 },
            Topology::Line { s: 16, w: 1 },
            Topology::Grid { a: 4, b: 4, w: 1 },
            Topology::RandomMetric { s: 25, seed: 77 },
        ] {
            let (g, h) = build(&t);
            let report = verify_cover(&g, &h);
            assert!(report.pass(), "{t:?}: {:?}", report.lines());
        }
    }

    #[test]
    fn verify_flags_partition_violation() {
        let g = ShardGraph::build(&Topology::Line { s: 4, w: 1 }).unwrap();
        let shared: BTreeSet<ShardId> = [ShardId(0), ShardId(1)].into();
        let also_shared: BTreeSet<ShardId> = [ShardId(1), ShardId(2), ShardId(3)].into();
        let h = CoverHierarchy::from_parts(
            CoverParams::default(),
            2,
            vec![vec![vec![(ShardId(0), shared), (ShardId(2), also_shared)]]],
        );
        let report = verify_cover(&g, &h);
        assert!(!report.partition.pass);
    }

    #[test]
    fn verify_flags_leader_rule_violation() {
        let g = ShardGraph::build(&Topology::Line { s: 4, w: 1 }).unwrap();
        // Layer 1 cluster whose leader S1 has S0 in its 1-neighborhood but
        // not in the cluster.
        let lonely: BTreeSet<ShardId> = [ShardId(0)].into();
        let rest: BTreeSet<ShardId> = [ShardId(1), ShardId(2), ShardId(3)].into();
        let all: BTreeSet<ShardId> = g.shards().collect();
        let h = CoverHierarchy::from_parts(
            CoverParams::default(),
            2,
            vec![
                vec![g
                    .shards()
                    .map(|x| (x, BTreeSet::from([x])))
                    .collect::<Vec<_>>()],
                vec![vec![(ShardId(0), lonely), (ShardId(1), rest)]],
                vec![vec![(ShardId(1), all)]],
            ],
        );
        let report = verify_cover(&g, &h);
        assert!(!report.leader_rule.pass);
        assert!(report.partition.pass);
    }

    #[test]
    fn home_cluster_picks_lowest_covering_height() {
        // Hand-built hierarchy over a 9-shard line shaped like the paper's
        // routing picture: singletons, then pair-scale, then half-line
        // scale, then everything.
        let g = ShardGraph::build(&Topology::Line { s: 9, w: 1 }).unwrap();
        let set = |ids: &[usize]| -> BTreeSet<ShardId> { ids.iter().map(|&i| ShardId(i)).collect() };
        let h = CoverHierarchy::from_parts(
            CoverParams::default(),
            4,
            vec![
                vec![g
                    .shards()
                    .map(|x| (x, BTreeSet::from([x])))
                    .collect::<Vec<_>>()],
                vec![vec![
                    (ShardId(0), set(&[0, 1])),
                    (ShardId(3), set(&[2, 3, 4])),
                    (ShardId(5), set(&[5, 6])),
                    (ShardId(7), set(&[7, 8])),
                ]],
                vec![vec![
                    (ShardId(0), set(&[0, 1])),
                    (ShardId(5), set(&[2, 3, 4, 5, 6, 7, 8])),
                ]],
                vec![vec![(ShardId(4), g.shards().collect())]],
            ],
        );

        // Txn at S3 touching S3 and S4: z = 1, neighborhood {S2,S3,S4}.
        let c1 = h.home_cluster(&g, ShardId(3), &set(&[3, 4]));
        assert_eq!(c1.height, Height { q: 1, r: 0 });
        assert_eq!(c1.members, set(&[2, 3, 4]));

        // Txn at S5 touching S5 and S8: z = 3, needs the half-line cluster.
        let c2 = h.home_cluster(&g, ShardId(5), &set(&[5, 8]));
        assert_eq!(c2.height, Height { q: 2, r: 0 });

        // Local-only txn stays at the bottom.
        let c0 = h.home_cluster(&g, ShardId(6), &set(&[6]));
        assert_eq!(c0.height, Height { q: 0, r: 0 });
    }

    #[test]
    fn home_cluster_height_monotone_in_destinations() {
        let g = ShardGraph::build(&Topology::Line { s: 16, w: 1 }).unwrap();
        let h = CoverHierarchy::build(&g, CoverParams::default()).unwrap();
        let home = ShardId(5);
        let mut dests = BTreeSet::from([ShardId(5)]);
        let mut last = h.home_cluster(&g, home, &dests).height;
        for d in [6usize, 8, 11, 15] {
            dests.insert(ShardId(d));
            let now = h.home_cluster(&g, home, &dests).height;
            assert!(now >= last, "height decreased when adding S{d}");
            last = now;
        }
    }

    #[test]
    fn dump_lists_every_cluster() {
        let (_, h) = build(&Topology::Line { s: 5, w: 1 });
        let dump = h.dump();
        assert_eq!(dump.lines().count(), h.clusters().len());
        assert!(dump.starts_with("cluster 0 layer 0 sublayer 0 leader "));
    }
}
