//! Tunable-radix non-uniform all-to-all exchange.
//!
//! The crate provides the radix schedule arithmetic, a deterministic
//! message-passing simulator, the linear baselines, the radix algorithm and
//! its hierarchical variants, seeded workload generators, and an
//! alpha-beta cost model.

pub mod baselines;
pub mod costmodel;
pub mod error;
pub mod hier;
pub mod radix;
pub mod runner;
pub mod transport;
pub mod tuna;
pub mod workloads;

pub use baselines::{oracle_direct, Divergence, GatheredResult};
pub use costmodel::{CostParams, Prediction};
pub use error::{Error, Result};
pub use hier::{HierParams, InterVariant};
pub use radix::{RadixParams, RoundSchedule};
pub use runner::{run_algorithm, Algorithm, RunResult, RunSpec};
pub use transport::{SchedulerMode, Trace};
pub use workloads::{DistKind, DistSpec, Workload};
