//! TOML run configuration and seed resolution.

use crate::conflict::Granularity;
use crate::cover::CoverParams;
use crate::error::{Error, Result};
use crate::graph::{ShardId, Topology};
use crate::sched::{Algo, RunSetup};
use crate::sim::{DelayModel, FaultPlan};
use crate::workload::WorkloadSpec;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SEED_ENV: &str = "SHARDSIM_SEED";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSection {
    pub algo: Algo,
    #[serde(default)]
    pub granularity: Granularity,
    #[serde(default)]
    pub leader: ShardId,
    /// Overridable: command line beats this, this beats the environment.
    pub seed: Option<u64>,
    pub max_ticks: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Where CSV and summary files land; default is the working directory.
    pub dir: Option<PathBuf>,
    /// Also write the full event trace as JSON lines.
    pub emit_trace: bool,
}

/// A whole run as read from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub topology: Topology,
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub workload: WorkloadSpec,
    pub delay: DelayModel,
    #[serde(default)]
    pub fault: FaultPlan,
    #[serde(default)]
    pub cover: CoverParams,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Seed precedence: `--seed` flag, then the config file, then the
    /// `SHARDSIM_SEED` environment variable, then zero.
    pub fn resolve_seed(&self, cli: Option<u64>, env: Option<&str>) -> Result<u64> {
        if let Some(s) = cli {
            return Ok(s);
        }
        if let Some(s) = self.scheduler.seed {
            return Ok(s);
        }
        match env {
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an integer, got {raw:?}"))),
            None => Ok(0),
        }
    }

    pub fn setup(&self, seed: u64) -> RunSetup {
        RunSetup {
            algo: self.scheduler.algo,
            granularity: self.scheduler.granularity,
            leader: self.scheduler.leader,
            workload: self.workload.clone(),
            delay: self.delay,
            seed,
            max_ticks: self.scheduler.max_ticks,
            fault: self.fault,
            cover: self.cover,
        }
    }
}
