//! Python bindings: topology graphs, cluster hierarchies, the coloring
//! oracle, and whole simulation runs driven from TOML text.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use shardsim::config::{RunConfig, SEED_ENV};
use shardsim::conflict::Granularity;
use shardsim::cover::{verify_cover, CoverHierarchy, CoverParams};
use shardsim::graph::{ShardGraph, ShardId, Topology};
use shardsim::metrics::{aggregate, snapshots, verify_safety};
use shardsim::oracle::{self, PendingSnapshot};
use shardsim::sched::run_sim;
use shardsim::workload::reduction_instance;

fn perr(e: shardsim::Error) -> PyErr {
    match e {
        shardsim::Error::Config(_) | shardsim::Error::Usage(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Complete metric over shards, reduced from a named topology.
#[pyclass(frozen)]
struct Graph {
    inner: ShardGraph,
}

impl Graph {
    fn build(topo: Topology) -> PyResult<Graph> {
        Ok(Graph {
            inner: ShardGraph::build(&topo).map_err(perr)?,
        })
    }
}

#[pymethods]
impl Graph {
    #[staticmethod]
    #[pyo3(signature = (s, w=1))]
    fn clique(s: usize, w: u64) -> PyResult<Graph> {
        Graph::build(Topology::Clique { s, w })
    }

    #[staticmethod]
    #[pyo3(signature = (s, w=1))]
    fn line(s: usize, w: u64) -> PyResult<Graph> {
        Graph::build(Topology::Line { s, w })
    }

    #[staticmethod]
    #[pyo3(signature = (a, b, w=1))]
    fn grid(a: usize, b: usize, w: u64) -> PyResult<Graph> {
        Graph::build(Topology::Grid { a, b, w })
    }

    #[staticmethod]
    #[pyo3(signature = (s, seed=0))]
    fn random_metric(s: usize, seed: u64) -> PyResult<Graph> {
        Graph::build(Topology::RandomMetric { s, seed })
    }

    fn n_shards(&self) -> usize {
        self.inner.n_shards()
    }

    fn diameter(&self) -> u64 {
        self.inner.diameter()
    }

    fn distance(&self, a: usize, b: usize) -> PyResult<u64> {
        let n = self.inner.n_shards();
        if a >= n || b >= n {
            return Err(PyValueError::new_err(format!(
                "shard out of range: {a}, {b} on {n} shards"
            )));
        }
        Ok(self.inner.distance(ShardId(a), ShardId(b)))
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(n_shards={}, diameter={})",
            self.inner.n_shards(),
            self.inner.diameter()
        )
    }
}

/// Sparse cover hierarchy over a graph's shards.
#[pyclass(frozen)]
struct Hierarchy {
    g: ShardGraph,
    inner: CoverHierarchy,
}

#[pymethods]
impl Hierarchy {
    #[staticmethod]
    #[pyo3(signature = (graph, c_diam=4, c_sub=4))]
    fn build(graph: &Graph, c_diam: u64, c_sub: u32) -> PyResult<Hierarchy> {
        let inner = CoverHierarchy::build(&graph.inner, CoverParams { c_diam, c_sub })
            .map_err(perr)?;
        Ok(Hierarchy {
            g: graph.inner.clone(),
            inner,
        })
    }

    fn n_clusters(&self) -> usize {
        self.inner.clusters().len()
    }

    fn n_layers(&self) -> u32 {
        self.inner.n_layers()
    }

    /// One text record per cluster.
    fn dump(&self) -> String {
        self.inner.dump()
    }

    /// Checks partition, diameter, membership, containment and leader
    /// properties; returns overall pass plus one line per property.
    fn verify(&self) -> (bool, Vec<String>) {
        let report = verify_cover(&self.g, &self.inner);
        (report.pass(), report.lines())
    }

    fn __repr__(&self) -> String {
        format!(
            "Hierarchy(n_clusters={}, n_layers={})",
            self.inner.clusters().len(),
            self.inner.n_layers()
        )
    }
}

fn snapshot_of(n_vertices: usize, edges: &[(usize, usize)]) -> Result<PendingSnapshot, shardsim::Error> {
    let inst = reduction_instance(n_vertices, edges)?;
    Ok(PendingSnapshot::new(Granularity::Shard, inst.txns))
}

/// Exact chromatic number of the graph given as an edge list.
#[pyfunction]
fn chromatic_number(n_vertices: usize, edges: Vec<(usize, usize)>) -> PyResult<u32> {
    let snap = snapshot_of(n_vertices, &edges).map_err(perr)?;
    snap.chromatic_number().map_err(perr)
}

/// Colors the same graph with the scheduler's incremental greedy rule.
#[pyfunction]
fn greedy_colors(n_vertices: usize, edges: Vec<(usize, usize)>) -> PyResult<u32> {
    let snap = snapshot_of(n_vertices, &edges).map_err(perr)?;
    Ok(snap.greedy_colors())
}

/// Minimum ticks any scheduler needs for a pending set with this
/// chromatic number and farthest destination.
#[pyfunction]
fn lower_bound(chi: u32, max_dist: u64, stateful: bool) -> u64 {
    oracle::lower_bound_tau(chi, max_dist, stateful)
}

/// Outcome of one simulation run.
#[pyclass(frozen)]
struct RunResult {
    #[pyo3(get)]
    algo: String,
    #[pyo3(get)]
    seed: u64,
    #[pyo3(get)]
    ticks: u64,
    #[pyo3(get)]
    truncated: bool,
    #[pyo3(get)]
    n_txns: usize,
    #[pyo3(get)]
    commits: usize,
    #[pyo3(get)]
    aborts: usize,
    #[pyo3(get)]
    unresolved: usize,
    #[pyo3(get)]
    makespan: u64,
    #[pyo3(get)]
    mean_latency: f64,
    #[pyo3(get)]
    max_latency: u64,
    #[pyo3(get)]
    mean_ratio: f64,
    #[pyo3(get)]
    max_ratio: f64,
    #[pyo3(get)]
    safety_pass: bool,
    #[pyo3(get)]
    trace_hash: String,
    rows: Vec<(u64, usize, u64, Option<u64>, Option<u64>, String)>,
}

#[pymethods]
impl RunResult {
    /// Per-transaction records: (txn_id, home, ts, schedule_time,
    /// finalize_time, outcome).
    fn txns(&self) -> Vec<(u64, usize, u64, Option<u64>, Option<u64>, String)> {
        self.rows.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(algo='{}', seed={}, commits={}, aborts={}, makespan={})",
            self.algo, self.seed, self.commits, self.aborts, self.makespan
        )
    }
}

/// Runs one simulation from TOML configuration text. The optional seed
/// wins over the config file and the SHARDSIM_SEED environment variable.
#[pyfunction]
#[pyo3(signature = (config, seed=None))]
fn run(config: &str, seed: Option<u64>) -> PyResult<RunResult> {
    let cfg = RunConfig::parse(config).map_err(perr)?;
    let env = std::env::var(SEED_ENV).ok();
    let seed = cfg.resolve_seed(seed, env.as_deref()).map_err(perr)?;
    let setup = cfg.setup(seed);
    let g = ShardGraph::build(&cfg.topology).map_err(perr)?;
    let out = run_sim(&g, &setup).map_err(perr)?;

    let rows = snapshots(
        &out.trace,
        &out.bodies,
        setup.granularity,
        setup.algo.is_stateful(),
        out.ticks,
    );
    let stats = aggregate(&out.trace, &rows);
    let safety = verify_safety(&out.trace, &out.bodies, setup.granularity);
    let txn_rows = out
        .trace
        .txns
        .values()
        .map(|r| {
            let outcome = match r.committed {
                Some(true) => "commit",
                Some(false) => "abort",
                None => "unresolved",
            };
            (r.txn.0, r.home.0, r.ts, r.schedule_time, r.finalize_time, outcome.to_string())
        })
        .collect();

    Ok(RunResult {
        algo: setup.algo.name().to_string(),
        seed,
        ticks: out.ticks,
        truncated: out.truncated,
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
        trace_hash: out.trace.hash(),
        rows: txn_rows,
    })
}

#[pymodule]
fn shardsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Graph>()?;
    m.add_class::<Hierarchy>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(chromatic_number, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_colors, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::snapshot_of;

    #[test]
    fn edge_list_lifts_to_matching_snapshot() {
        let snap = snapshot_of(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(snap.chromatic_number().unwrap(), 3);
        assert_eq!(snap.greedy_colors(), 3);
    }
}
