//! Point-to-point communicator contract and the in-process simulator
//! that implements it.
//!
//! Algorithms are written as `async` per-rank procedures against
//! [`Communicator`]. Every blocking point is a `wait_all` (or a
//! reduction), which is where the simulator switches between ranks.

mod sim;
mod trace;

use std::future::Future;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use sim::{run_processes, run_processes_with, SchedulerMode, SimComm, SimConfig, SimOutput};
pub use trace::{metrics_from_trace, LinkCounts, MessageEvent, Metrics, PhaseCounts, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Metadata,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    #[serde(rename = "self")]
    SelfLink,
    IntraNode,
    InterNode,
}

impl LinkClass {
    /// Ranks are block-distributed: rank `p` lives on node `p / ranks_per_node`.
    pub fn classify(src: usize, dst: usize, ranks_per_node: usize) -> Self {
        if src == dst {
            LinkClass::SelfLink
        } else if src / ranks_per_node == dst / ranks_per_node {
            LinkClass::IntraNode
        } else {
            LinkClass::InterNode
        }
    }
}

/// Message tag: the round a message belongs to and its protocol phase.
/// Distinct phases never match each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag {
    pub round: u32,
    pub phase: Phase,
}

impl Tag {
    pub fn metadata(round: u32) -> Self {
        Self {
            round,
            phase: Phase::Metadata,
        }
    }

    pub fn data(round: u32) -> Self {
        Self {
            round,
            phase: Phase::Data,
        }
    }

    /// Wire value: `round·2 + (1 if data)`.
    pub fn value(&self) -> u64 {
        (u64::from(self.round) << 1) | u64::from(self.phase == Phase::Data)
    }
}

/// Handle to a posted send or receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Request(pub(crate) usize);

pub trait Communicator {
    fn rank(&self) -> usize;

    fn size(&self) -> usize;

    fn ranks_per_node(&self) -> usize;

    /// Non-blocking send. Completes once matched with a receive.
    fn post_send(&self, dst: usize, tag: Tag, payload: Vec<u8>) -> Result<Request>;

    /// Non-blocking receive, matched FIFO per `(src, dst, tag)` channel.
    fn post_recv(&self, src: usize, tag: Tag) -> Result<Request>;

    /// Blocks until every listed request has completed.
    fn wait_all(&self, requests: &[Request]) -> impl Future<Output = Result<()>> + Send;

    /// Moves the payload out of a completed receive.
    fn take_payload(&self, request: Request) -> Result<Vec<u8>>;

    /// Global maximum over all ranks. Collective; not part of the
    /// point-to-point trace.
    fn allreduce_max(&self, value: u64) -> impl Future<Output = Result<u64>> + Send;
}

/// Sends `payload` to `dst` and receives one message from `src` under
/// the same tag, waiting for both.
pub async fn sendrecv<C: Communicator>(
    comm: &C,
    dst: usize,
    src: usize,
    tag: Tag,
    payload: Vec<u8>,
) -> Result<Vec<u8>> {
    let recv = comm.post_recv(src, tag)?;
    let send = comm.post_send(dst, tag, payload)?;
    comm.wait_all(&[recv, send]).await?;
    comm.take_payload(recv)
}

/// Encodes block lengths as 64-bit little-endian entries.
pub fn encode_lengths<I: IntoIterator<Item = usize>>(lengths: I) -> Vec<u8> {
    lengths
        .into_iter()
        .flat_map(|l| (l as u64).to_le_bytes())
        .collect()
}

pub fn decode_lengths(bytes: &[u8]) -> Result<Vec<usize>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Protocol(format!(
            "metadata of {} bytes is not a whole number of entries",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")) as usize)
        .collect())
}

/// Splits a concatenated payload by `lengths`.
pub fn split_blocks(payload: &[u8], lengths: &[usize]) -> Result<Vec<Vec<u8>>> {
    let total: usize = lengths.iter().sum();
    if total != payload.len() {
        return Err(Error::Protocol(format!(
            "metadata announced {total} bytes but {} arrived",
            payload.len()
        )));
    }
    let mut out = Vec::with_capacity(lengths.len());
    let mut at = 0;
    for &len in lengths {
        out.push(payload[at..at + len].to_vec());
        at += len;
    }
    Ok(out)
}
