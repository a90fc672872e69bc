//! Layered configuration: built-in defaults, then a JSON file, then flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;
use tuna_core::{Algorithm, CostParams, DistKind, DistSpec, RunSpec, SchedulerMode};

use crate::CliError;

const DEFAULTS_JSON: &str = include_str!("defaults.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    #[value(name = "radix")]
    Radix,
    #[value(name = "block_count")]
    BlockCount,
    #[value(name = "message_size")]
    MessageSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    Deterministic,
    Threaded,
}

/// Every setting, all optional, as read from one layer.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub algo: Option<Algorithm>,
    #[serde(rename = "P")]
    pub processes: Option<usize>,
    #[serde(rename = "Q")]
    pub ranks_per_node: Option<usize>,
    pub r: Option<usize>,
    pub block_count: Option<usize>,
    pub dist: Option<DistKind>,
    #[serde(rename = "S")]
    pub max_block: Option<usize>,
    pub mean: Option<f64>,
    pub stddev: Option<f64>,
    pub exponent: Option<f64>,
    pub seed: Option<u64>,
    pub alpha_intra: Option<f64>,
    pub alpha_inter: Option<f64>,
    pub beta_intra: Option<f64>,
    pub beta_inter: Option<f64>,
    pub meta_entry_bytes: Option<usize>,
    pub trace_out: Option<PathBuf>,
    pub csv_out: Option<PathBuf>,
    pub sweep: Option<SweepKind>,
    pub jobs: Option<usize>,
    pub sizes: Option<Vec<f64>>,
    pub congestion_penalty: Option<f64>,
    pub scheduler: Option<Scheduler>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),* $(,)?) => {
        Layer { $($field: $top.$field.or($base.$field),)* }
    };
}

impl Layer {
    pub fn defaults() -> Self {
        serde_json::from_str(DEFAULTS_JSON).expect("embedded CLI defaults parse")
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    /// Field-wise: values set in `top` win.
    pub fn under(self, top: Layer) -> Layer {
        overlay!(
            self,
            top,
            algo,
            processes,
            ranks_per_node,
            r,
            block_count,
            dist,
            max_block,
            mean,
            stddev,
            exponent,
            seed,
            alpha_intra,
            alpha_inter,
            beta_intra,
            beta_inter,
            meta_entry_bytes,
            trace_out,
            csv_out,
            sweep,
            jobs,
            sizes,
            congestion_penalty,
            scheduler,
        )
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spec: RunSpec,
    pub dist: DistSpec,
    pub cost: CostParams,
    pub trace_out: Option<PathBuf>,
    pub csv_out: Option<PathBuf>,
    pub sweep: SweepKind,
    pub jobs: usize,
    pub sizes: Vec<f64>,
    pub congestion_penalty: f64,
}

fn required<T>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing setting {name}")))
}

impl RunConfig {
    /// Defaults, then the file named by `flags` (if any), then `flags`.
    pub fn resolve(config_file: Option<&Path>, flags: Layer) -> Result<Self, CliError> {
        let mut layer = Layer::defaults();
        if let Some(path) = config_file {
            layer = layer.under(Layer::from_file(path)?);
        }
        Self::from_layer(layer.under(flags))
    }

    pub fn from_layer(l: Layer) -> Result<Self, CliError> {
        let algo = required(l.algo, "algo")?;
        let processes = required(l.processes, "P")?;
        let ranks_per_node = l.ranks_per_node.unwrap_or(processes);
        let block_count = l
            .block_count
            .unwrap_or_else(|| algo.max_block_count(processes, ranks_per_node).max(1));
        let spec = RunSpec {
            algo,
            processes,
            ranks_per_node,
            radix: required(l.r, "r")?,
            block_count,
            scheduler_seed: 0,
            mode: match required(l.scheduler, "scheduler")? {
                Scheduler::Deterministic => SchedulerMode::Deterministic,
                Scheduler::Threaded => SchedulerMode::Threaded,
            },
        };
        let dist = DistSpec {
            kind: required(l.dist, "dist")?,
            max_block: required(l.max_block, "S")?,
            mean: required(l.mean, "mean")?,
            stddev: required(l.stddev, "stddev")?,
            exponent: required(l.exponent, "exponent")?,
            seed: required(l.seed, "seed")?,
        };
        let base = CostParams::default();
        let cost = CostParams {
            alpha_intra: l.alpha_intra.unwrap_or(base.alpha_intra),
            alpha_inter: l.alpha_inter.unwrap_or(base.alpha_inter),
            beta_intra: l.beta_intra.unwrap_or(base.beta_intra),
            beta_inter: l.beta_inter.unwrap_or(base.beta_inter),
            meta_entry_bytes: l.meta_entry_bytes.unwrap_or(base.meta_entry_bytes),
        };
        let jobs = required(l.jobs, "jobs")?;
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        Ok(Self {
            spec,
            dist,
            cost,
            trace_out: l.trace_out,
            csv_out: l.csv_out,
            sweep: required(l.sweep, "sweep")?,
            jobs,
            sizes: required(l.sizes, "sizes")?,
            congestion_penalty: required(l.congestion_penalty, "congestion_penalty")?,
        })
    }
}
