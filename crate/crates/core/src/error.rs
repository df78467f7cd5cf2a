use crate::graph::ShardId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad run configuration: unknown keys, invalid topology parameters,
    /// out-of-range knobs. CLI maps this to exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// Bad invocation of an API or CLI subcommand (missing argument,
    /// malformed edge list, ...). Also exit code 2.
    #[error("usage error: {0}")]
    Usage(String),

    /// A scheduler handler observed a state that the protocol forbids.
    /// The run is aborted and the offending event is reported.
    #[error("protocol violation at t={time} on {shard}: {detail}")]
    Protocol {
        time: u64,
        shard: ShardId,
        detail: String,
    },

    /// Cluster hierarchy construction could not satisfy its invariants
    /// within the configured sublayer budget.
    #[error("cover construction failed: {0}")]
    Cover(String),

    /// Exact search was asked for an instance above its configured budget.
    #[error("oracle budget exceeded: {0}")]
    OracleBudget(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
