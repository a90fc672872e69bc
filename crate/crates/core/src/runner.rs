//! Runs any algorithm on a workload under the simulator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    direct_trace, linear_ascending, oracle_direct, pairwise, scattered, spread_out, validate_batch,
    GatheredResult, PeerOrder, RankBlocks,
};
use crate::error::{Error, Result};
use crate::hier::{htuna, HierParams, InterVariant};
use crate::radix::RadixParams;
use crate::transport::{run_processes_with, SchedulerMode, SimConfig, Trace};
use crate::tuna::{tuna_alltoallv, TempStats};
use crate::workloads::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Direct,
    SpreadOut,
    Scattered,
    Pairwise,
    PairwiseXor,
    Linear,
    Tuna,
    HtunaCoalesced,
    HtunaStaggered,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Direct,
        Algorithm::SpreadOut,
        Algorithm::Scattered,
        Algorithm::Pairwise,
        Algorithm::PairwiseXor,
        Algorithm::Linear,
        Algorithm::Tuna,
        Algorithm::HtunaCoalesced,
        Algorithm::HtunaStaggered,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Direct => "direct",
            Algorithm::SpreadOut => "spread_out",
            Algorithm::Scattered => "scattered",
            Algorithm::Pairwise => "pairwise",
            Algorithm::PairwiseXor => "pairwise_xor",
            Algorithm::Linear => "linear",
            Algorithm::Tuna => "tuna",
            Algorithm::HtunaCoalesced => "htuna_coalesced",
            Algorithm::HtunaStaggered => "htuna_staggered",
        }
    }

    pub fn uses_radix(&self) -> bool {
        matches!(
            self,
            Algorithm::Tuna | Algorithm::HtunaCoalesced | Algorithm::HtunaStaggered
        )
    }

    pub fn uses_block_count(&self) -> bool {
        matches!(
            self,
            Algorithm::Scattered | Algorithm::HtunaCoalesced | Algorithm::HtunaStaggered
        )
    }

    pub fn is_hierarchical(&self) -> bool {
        matches!(self, Algorithm::HtunaCoalesced | Algorithm::HtunaStaggered)
    }

    /// Largest valid `block_count` for `P` ranks in nodes of `Q`, or 0 if
    /// there is nothing to batch.
    pub fn max_block_count(&self, processes: usize, ranks_per_node: usize) -> usize {
        let nodes = processes / ranks_per_node.max(1);
        match self {
            Algorithm::Scattered => processes.saturating_sub(1),
            Algorithm::HtunaCoalesced => nodes.saturating_sub(1),
            Algorithm::HtunaStaggered => nodes.saturating_sub(1) * ranks_per_node,
            _ => 0,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::param(format!("unknown algorithm {s:?}")))
    }
}

/// One simulated configuration. `radix` and `block_count` are ignored by
/// algorithms that do not use them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    pub algo: Algorithm,
    pub processes: usize,
    pub ranks_per_node: usize,
    pub radix: usize,
    pub block_count: usize,
    pub scheduler_seed: u64,
    pub mode: SchedulerMode,
}

impl RunSpec {
    /// Flat layout (`Q = P`), radix 2, largest block count.
    pub fn new(algo: Algorithm, processes: usize) -> Self {
        Self {
            algo,
            processes,
            ranks_per_node: processes,
            radix: 2,
            block_count: algo.max_block_count(processes, processes).max(1),
            scheduler_seed: 0,
            mode: SchedulerMode::Deterministic,
        }
    }

    pub fn nodes(&self) -> usize {
        self.processes / self.ranks_per_node.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        SimConfig::new(self.processes, self.ranks_per_node).validate()?;
        match self.algo {
            Algorithm::Tuna => {
                RadixParams::new(self.processes, self.radix)?;
            }
            Algorithm::HtunaCoalesced | Algorithm::HtunaStaggered => {
                self.hier_params()?;
            }
            Algorithm::Scattered => {
                validate_batch(self.block_count, self.processes - 1, "scattered")?;
            }
            Algorithm::PairwiseXor if !self.processes.is_power_of_two() => {
                return Err(Error::param(format!(
                    "xor pairwise needs a power-of-two process count, got {}",
                    self.processes
                )));
            }
            _ => {}
        }
        Ok(())
    }

    fn hier_params(&self) -> Result<HierParams> {
        let variant = match self.algo {
            Algorithm::HtunaStaggered => InterVariant::Staggered,
            _ => InterVariant::Coalesced,
        };
        HierParams::new(
            self.processes,
            self.ranks_per_node,
            self.radix,
            self.block_count,
            variant,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub gathered: GatheredResult,
    pub trace: Trace,
    /// Per rank, for algorithms with a temporary buffer.
    pub temp: Vec<TempStats>,
}

impl RunResult {
    pub fn peak_temp_blocks(&self) -> usize {
        self.temp.iter().map(|t| t.peak_blocks).max().unwrap_or(0)
    }

    pub fn temp_capacity_blocks(&self) -> usize {
        self.temp
            .iter()
            .map(|t| t.capacity_blocks)
            .max()
            .unwrap_or(0)
    }
}

pub fn run_algorithm(spec: &RunSpec, workload: &Workload) -> Result<RunResult> {
    spec.validate()?;
    if workload.processes() != spec.processes {
        return Err(Error::param(format!(
            "workload has {} processes but the run has {}",
            workload.processes(),
            spec.processes
        )));
    }
    if spec.algo == Algorithm::Direct {
        return Ok(RunResult {
            gathered: oracle_direct(workload),
            trace: direct_trace(workload, spec.ranks_per_node),
            temp: Vec::new(),
        });
    }
    let config = SimConfig::new(spec.processes, spec.ranks_per_node)
        .seed(spec.scheduler_seed)
        .mode(spec.mode);
    let w = workload;
    let spec = *spec;
    let hier = if spec.algo.is_hierarchical() {
        Some(spec.hier_params()?)
    } else {
        None
    };
    let out = run_processes_with(&config, |c| async move {
        let plain = |recv: RankBlocks| (recv, None);
        Ok(match spec.algo {
            Algorithm::SpreadOut => plain(spread_out(&c, w).await?),
            Algorithm::Scattered => plain(scattered(&c, w, spec.block_count).await?),
            Algorithm::Pairwise => plain(pairwise(&c, w, PeerOrder::Shift).await?),
            Algorithm::PairwiseXor => plain(pairwise(&c, w, PeerOrder::Xor).await?),
            Algorithm::Linear => plain(linear_ascending(&c, w).await?),
            Algorithm::Tuna => {
                let o = tuna_alltoallv(&c, w, spec.radix).await?;
                (o.recv, Some(o.temp))
            }
            Algorithm::HtunaCoalesced | Algorithm::HtunaStaggered => {
                let params = hier.expect("hierarchical parameters validated");
                let o = htuna(&c, w, &params).await?;
                (o.recv, Some(o.temp))
            }
            Algorithm::Direct => unreachable!("handled without the simulator"),
        })
    })?;
    let mut recv = Vec::with_capacity(spec.processes);
    let mut temp = Vec::new();
    for (blocks, stats) in out.outputs {
        recv.push(blocks);
        temp.extend(stats);
    }
    Ok(RunResult {
        gathered: GatheredResult { recv },
        trace: out.trace,
        temp,
    })
}
