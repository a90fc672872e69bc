//! Linear alltoallv algorithms and the transport-free oracle.
//!
//! Every per-rank procedure returns the blocks received by that rank,
//! indexed by source. Self blocks are copied locally and zero-length
//! blocks still produce a message.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transport::{Communicator, LinkClass, MessageEvent, Phase, Tag, Trace};
use crate::workloads::Workload;

/// Blocks received by one rank, indexed by source rank.
pub type RankBlocks = Vec<Vec<u8>>;

/// `recv[d][s]` is the block rank `d` received from rank `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatheredResult {
    pub recv: Vec<RankBlocks>,
}

/// First byte where two results disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub rank: usize,
    pub source: usize,
    pub offset: usize,
}

impl GatheredResult {
    pub fn first_divergence(&self, expected: &GatheredResult) -> Option<Divergence> {
        let ranks = self.recv.len().max(expected.recv.len());
        for rank in 0..ranks {
            let (Some(got), Some(want)) = (self.recv.get(rank), expected.recv.get(rank)) else {
                return Some(Divergence {
                    rank,
                    source: 0,
                    offset: 0,
                });
            };
            for source in 0..got.len().max(want.len()) {
                let a = got.get(source).map(Vec::as_slice).unwrap_or_default();
                let b = want.get(source).map(Vec::as_slice).unwrap_or_default();
                if a != b || got.get(source).is_none() != want.get(source).is_none() {
                    let offset = a
                        .iter()
                        .zip(b)
                        .position(|(x, y)| x != y)
                        .unwrap_or(a.len().min(b.len()));
                    return Some(Divergence {
                        rank,
                        source,
                        offset,
                    });
                }
            }
        }
        None
    }
}

/// Ground truth: `recv[d][s] = payloads[s][d]`.
pub fn oracle_direct(workload: &Workload) -> GatheredResult {
    let p = workload.processes();
    GatheredResult {
        recv: (0..p)
            .map(|d| (0..p).map(|s| workload.payload(s, d).to_vec()).collect())
            .collect(),
    }
}

/// Single-round model of the oracle exchange: every rank sends each
/// off-diagonal block once. Used for costing the `direct` algorithm.
pub fn direct_trace(workload: &Workload, ranks_per_node: usize) -> Trace {
    let p = workload.processes();
    let mut events = Vec::new();
    for src in 0..p {
        for dst in (0..p).filter(|&d| d != src) {
            events.push(MessageEvent {
                ts: events.len() as u64,
                src,
                dst,
                tag: Tag::data(0).value(),
                phase: Phase::Data,
                round: 0,
                bytes: workload.send_sizes()[src][dst],
                link: LinkClass::classify(src, dst, ranks_per_node),
            });
        }
    }
    Trace {
        processes: p,
        ranks_per_node,
        events,
        peak_outstanding: vec![0; p],
    }
}

pub(crate) fn check_size<C: Communicator>(comm: &C, workload: &Workload) -> Result<()> {
    if workload.processes() != comm.size() {
        return Err(Error::param(format!(
            "workload has {} processes but communicator has {}",
            workload.processes(),
            comm.size()
        )));
    }
    Ok(())
}

fn self_copy(workload: &Workload, rank: usize) -> RankBlocks {
    let mut recv = vec![Vec::new(); workload.processes()];
    recv[rank] = workload.payload(rank, rank).to_vec();
    recv
}

/// Destinations in spread-out order: `(p + i) mod P` for `i = 1..P`.
pub fn spread_out_order(rank: usize, processes: usize) -> Vec<usize> {
    (1..processes).map(|i| (rank + i) % processes).collect()
}

/// Posts all receives and sends in round-robin order, then one wait.
pub async fn spread_out<C: Communicator>(comm: &C, workload: &Workload) -> Result<RankBlocks> {
    check_size(comm, workload)?;
    let peers = spread_out_order(comm.rank(), comm.size());
    let mut recv = self_copy(workload, comm.rank());
    let got = exchange_batch(comm, workload, &peers, &peers, 0).await?;
    place(&mut recv, &peers, got);
    Ok(recv)
}

fn place(recv: &mut RankBlocks, peers: &[usize], blocks: Vec<Vec<u8>>) {
    for (&peer, block) in peers.iter().zip(blocks) {
        recv[peer] = block;
    }
}

/// Receives from every rank in `sources` and sends to every rank in
/// `dests` under one round id; returns the received blocks in `sources`
/// order.
async fn exchange_batch<C: Communicator>(
    comm: &C,
    workload: &Workload,
    sources: &[usize],
    dests: &[usize],
    round: u32,
) -> Result<Vec<Vec<u8>>> {
    let me = comm.rank();
    let tag = Tag::data(round);
    let recvs = sources
        .iter()
        .map(|&peer| comm.post_recv(peer, tag))
        .collect::<Result<Vec<_>>>()?;
    let mut all = recvs.clone();
    for &peer in dests {
        all.push(comm.post_send(peer, tag, workload.payload(me, peer).to_vec())?);
    }
    comm.wait_all(&all).await?;
    recvs.into_iter().map(|r| comm.take_payload(r)).collect()
}

/// Spread-out in batches of `block_count` peers with a wait per batch.
pub async fn scattered<C: Communicator>(
    comm: &C,
    workload: &Workload,
    block_count: usize,
) -> Result<RankBlocks> {
    check_size(comm, workload)?;
    let p = comm.size();
    validate_batch(block_count, p.saturating_sub(1), "scattered")?;
    let me = comm.rank();
    let order = spread_out_order(me, p);
    let sources: Vec<usize> = (1..p).map(|i| (me + p - i) % p).collect();
    let mut recv = self_copy(workload, me);
    for (round, (dests, srcs)) in order
        .chunks(block_count)
        .zip(sources.chunks(block_count))
        .enumerate()
    {
        let got = exchange_batch(comm, workload, srcs, dests, round as u32).await?;
        place(&mut recv, srcs, got);
    }
    Ok(recv)
}

/// `block_count ∈ [1, limit]`; with nothing to exchange any positive
/// batch size is accepted.
pub(crate) fn validate_batch(block_count: usize, limit: usize, what: &str) -> Result<()> {
    if block_count == 0 || (limit > 0 && block_count > limit) {
        return Err(Error::param(format!(
            "{what} block_count {block_count} outside [1, {}]",
            limit.max(1)
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerOrder {
    /// Send to `p + i`, receive from `p − i`.
    Shift,
    /// Exchange with `p ⊕ i`; needs a power-of-two process count.
    Xor,
}

/// `(send_to, recv_from)` of rank `p` in round `i`.
pub fn pairwise_peers(order: PeerOrder, rank: usize, processes: usize, i: usize) -> (usize, usize) {
    match order {
        PeerOrder::Shift => ((rank + i) % processes, (rank + processes - i) % processes),
        PeerOrder::Xor => (rank ^ i, rank ^ i),
    }
}

/// One receive and one blocking send per round.
pub async fn pairwise<C: Communicator>(
    comm: &C,
    workload: &Workload,
    order: PeerOrder,
) -> Result<RankBlocks> {
    check_size(comm, workload)?;
    let p = comm.size();
    if order == PeerOrder::Xor && !p.is_power_of_two() {
        return Err(Error::param(format!(
            "xor pairwise needs a power-of-two process count, got {p}"
        )));
    }
    let me = comm.rank();
    let mut recv = self_copy(workload, me);
    for i in 1..p {
        let (dst, src) = pairwise_peers(order, me, p, i);
        let tag = Tag::data(i as u32);
        let r = comm.post_recv(src, tag)?;
        let s = comm.post_send(dst, tag, workload.payload(me, dst).to_vec())?;
        comm.wait_all(&[s]).await?;
        comm.wait_all(&[r]).await?;
        recv[src] = comm.take_payload(r)?;
    }
    Ok(recv)
}

/// All receives then all sends in ascending rank order, one wait.
pub async fn linear_ascending<C: Communicator>(
    comm: &C,
    workload: &Workload,
) -> Result<RankBlocks> {
    check_size(comm, workload)?;
    let me = comm.rank();
    let peers: Vec<usize> = (0..comm.size()).filter(|&d| d != me).collect();
    let mut recv = self_copy(workload, me);
    let got = exchange_batch(comm, workload, &peers, &peers, 0).await?;
    place(&mut recv, &peers, got);
    Ok(recv)
}
