//! Two-level exchange for ranks block-distributed over nodes of `Q`.
//!
//! The intra-node phase runs one radix exchange per node that carries
//! all `N` destination-node groups on the same messages. Afterwards rank
//! `(n, g)` holds, for each node `m`, the blocks its node-mates send to
//! rank `m·Q + g`. The inter-node phase then trades those with the
//! matching rank `(m, g)` of every other node, either one message per
//! peer node (coalesced) or one per block (staggered).

use serde::{Deserialize, Serialize};

use crate::baselines::{check_size, validate_batch, RankBlocks};
use crate::error::{Error, Result};
use crate::radix::RadixParams;
use crate::transport::{decode_lengths, encode_lengths, split_blocks, Communicator, Tag};
use crate::tuna::{radix_exchange, TempStats};
use crate::workloads::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterVariant {
    Coalesced,
    Staggered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HierParams {
    processes: usize,
    ranks_per_node: usize,
    intra: RadixParams,
    block_count: usize,
    variant: InterVariant,
}

impl HierParams {
    pub fn new(
        processes: usize,
        ranks_per_node: usize,
        radix: usize,
        block_count: usize,
        variant: InterVariant,
    ) -> Result<Self> {
        if processes == 0 {
            return Err(Error::param("process count must be at least 1"));
        }
        if ranks_per_node == 0 || !processes.is_multiple_of(ranks_per_node) {
            return Err(Error::param(format!(
                "ranks per node {ranks_per_node} does not divide process count {processes}"
            )));
        }
        let intra = RadixParams::new(ranks_per_node, radix)?;
        let params = Self {
            processes,
            ranks_per_node,
            intra,
            block_count,
            variant,
        };
        let what = match variant {
            InterVariant::Coalesced => "coalesced",
            InterVariant::Staggered => "staggered",
        };
        validate_batch(block_count, params.max_block_count(), what)?;
        Ok(params)
    }

    pub fn processes(&self) -> usize {
        self.processes
    }

    pub fn ranks_per_node(&self) -> usize {
        self.ranks_per_node
    }

    pub fn nodes(&self) -> usize {
        self.processes / self.ranks_per_node
    }

    pub fn radix(&self) -> usize {
        self.intra.radix()
    }

    pub fn intra(&self) -> &RadixParams {
        &self.intra
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn variant(&self) -> InterVariant {
        self.variant
    }

    /// Inter-node requests per direction: `N − 1` peer messages
    /// (coalesced) or `(N − 1)·Q` block messages (staggered).
    pub fn max_block_count(&self) -> usize {
        let peers = self.nodes() - 1;
        match self.variant {
            InterVariant::Coalesced => peers,
            InterVariant::Staggered => peers * self.ranks_per_node,
        }
    }
}

/// `I[i·Q + j] = i·Q + (2g − j + Q) mod Q`: the rotation applied within
/// every node-sized group of destinations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupRotation {
    pub indices: Vec<usize>,
}

impl GroupRotation {
    pub fn new(slot: usize, ranks_per_node: usize, nodes: usize) -> Self {
        let q = ranks_per_node;
        let indices = (0..nodes)
            .flat_map(|i| (0..q).map(move |j| i * q + (2 * slot + q - j) % q))
            .collect();
        Self { indices }
    }
}

/// State of rank `(node, slot)` after the intra-node phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Staging {
    pub node: usize,
    pub slot: usize,
    /// Final blocks by source rank; filled for the own node so far.
    pub recv: RankBlocks,
    /// `blocks[m][q]`: from `(node, q)` to `m·Q + slot`. Empty for `m = node`.
    pub blocks: Vec<Vec<Vec<u8>>>,
    pub temp: TempStats,
}

pub async fn intra_node_exchange<C: Communicator>(
    comm: &C,
    workload: &Workload,
    params: &HierParams,
) -> Result<Staging> {
    check_size(comm, workload)?;
    check_layout(comm, params)?;
    let q = params.ranks_per_node();
    let nodes = params.nodes();
    let me = comm.rank();
    let (n, g) = (me / q, me % q);
    let local_max = workload.row(me).iter().map(Vec::len).max().unwrap_or(0);
    let max_block = comm.allreduce_max(local_max as u64).await? as usize;
    let rotation = GroupRotation::new(g, q, nodes);

    let mut recv = vec![Vec::new(); comm.size()];
    let mut blocks = vec![vec![Vec::new(); q]; nodes];
    for (m, staged) in blocks.iter_mut().enumerate() {
        let own = workload.payload(me, m * q + g).to_vec();
        if m == n {
            recv[me] = own;
        } else {
            staged[g] = own;
        }
    }
    let temp = radix_exchange(
        comm,
        params.intra(),
        g,
        |local| n * q + local,
        nodes,
        max_block,
        |m, i| workload.payload(me, rotation.indices[m * q + (g + i) % q]),
        |m, src, block| {
            if m == n {
                recv[n * q + src] = block;
            } else {
                blocks[m][src] = block;
            }
        },
    )
    .await?;
    Ok(Staging {
        node: n,
        slot: g,
        recv,
        blocks,
        temp,
    })
}

fn check_layout<C: Communicator>(comm: &C, params: &HierParams) -> Result<()> {
    if comm.size() != params.processes() || comm.ranks_per_node() != params.ranks_per_node() {
        return Err(Error::param(format!(
            "communicator is {}×{} but parameters are {}×{}",
            comm.size() / comm.ranks_per_node(),
            comm.ranks_per_node(),
            params.nodes(),
            params.ranks_per_node()
        )));
    }
    Ok(())
}

/// Staged blocks packed without gaps, node by node (own node skipped),
/// source slot ascending within a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompactedStaging {
    pub ranks_per_node: usize,
    /// Destination nodes in buffer order.
    pub nodes: Vec<usize>,
    pub lengths: Vec<usize>,
    pub offsets: Vec<usize>,
    pub buffer: Vec<u8>,
}

impl CompactedStaging {
    /// Lengths and bytes of the `Q` blocks bound for node `m`.
    pub fn segment(&self, m: usize) -> Option<(&[usize], &[u8])> {
        let k = self.nodes.iter().position(|&x| x == m)?;
        let q = self.ranks_per_node;
        let lengths = &self.lengths[k * q..(k + 1) * q];
        let start = self.offsets[k * q];
        let end = start + lengths.iter().sum::<usize>();
        Some((lengths, &self.buffer[start..end]))
    }
}

pub fn rearrange_staging(state: &Staging) -> CompactedStaging {
    let q = state.blocks.first().map_or(0, Vec::len);
    let mut out = CompactedStaging {
        ranks_per_node: q,
        nodes: Vec::new(),
        lengths: Vec::new(),
        offsets: Vec::new(),
        buffer: Vec::new(),
    };
    for (m, group) in state.blocks.iter().enumerate() {
        if m == state.node {
            continue;
        }
        out.nodes.push(m);
        for block in group {
            out.lengths.push(block.len());
            out.offsets.push(out.buffer.len());
            out.buffer.extend_from_slice(block);
        }
    }
    out
}

/// One message per peer node, `block_count` peers per batch.
pub async fn inter_node_coalesced<C: Communicator>(
    comm: &C,
    state: Staging,
    params: &HierParams,
) -> Result<RankBlocks> {
    check_layout(comm, params)?;
    let packed = rearrange_staging(&state);
    let Staging {
        node: n,
        slot: g,
        mut recv,
        ..
    } = state;
    let q = params.ranks_per_node();
    let nodes = params.nodes();
    let base = params.intra().round_count();
    let offsets: Vec<usize> = (1..nodes).collect();
    for (b, batch) in offsets.chunks(params.block_count()).enumerate() {
        let round = (base + b) as u32;
        let sources: Vec<usize> = batch.iter().map(|&i| (n + i) % nodes).collect();
        let dests: Vec<usize> = batch.iter().map(|&i| (n + nodes - i) % nodes).collect();
        let mut segments = Vec::with_capacity(dests.len());
        for &m in &dests {
            segments.push(
                packed
                    .segment(m)
                    .ok_or_else(|| Error::Protocol(format!("no staged blocks for node {m}")))?,
            );
        }

        let meta_recvs = sources
            .iter()
            .map(|&m| comm.post_recv(m * q + g, Tag::metadata(round)))
            .collect::<Result<Vec<_>>>()?;
        let mut pending = meta_recvs.clone();
        for (&m, (lengths, _)) in dests.iter().zip(&segments) {
            let meta = encode_lengths(lengths.iter().copied());
            pending.push(comm.post_send(m * q + g, Tag::metadata(round), meta)?);
        }
        comm.wait_all(&pending).await?;
        let mut announced = Vec::with_capacity(sources.len());
        for (&m, req) in sources.iter().zip(meta_recvs) {
            let lengths = decode_lengths(&comm.take_payload(req)?)?;
            if lengths.len() != q {
                return Err(Error::Protocol(format!(
                    "node {m} announced {} blocks, expected {q}",
                    lengths.len()
                )));
            }
            announced.push(lengths);
        }

        let data_recvs = sources
            .iter()
            .map(|&m| comm.post_recv(m * q + g, Tag::data(round)))
            .collect::<Result<Vec<_>>>()?;
        let mut pending = data_recvs.clone();
        for (&m, (_, bytes)) in dests.iter().zip(&segments) {
            pending.push(comm.post_send(m * q + g, Tag::data(round), bytes.to_vec())?);
        }
        comm.wait_all(&pending).await?;
        for ((&m, req), lengths) in sources.iter().zip(data_recvs).zip(&announced) {
            let payload = comm.take_payload(req)?;
            for (src_slot, block) in split_blocks(&payload, lengths)?.into_iter().enumerate() {
                recv[m * q + src_slot] = block;
            }
        }
    }
    Ok(recv)
}

/// One message per staged block, `block_count` blocks per batch. Each
/// batch opens with one length vector per distinct peer.
pub async fn inter_node_staggered<C: Communicator>(
    comm: &C,
    state: Staging,
    params: &HierParams,
) -> Result<RankBlocks> {
    check_layout(comm, params)?;
    let Staging {
        node: n,
        slot: g,
        mut recv,
        blocks,
        ..
    } = state;
    let q = params.ranks_per_node();
    let nodes = params.nodes();
    let base = params.intra().round_count();
    let steps: Vec<(usize, usize)> = (0..(nodes - 1) * q).map(|k| (k / q + 1, k % q)).collect();
    for (b, batch) in steps.chunks(params.block_count()).enumerate() {
        let round = (base + b) as u32;
        let mut peers: Vec<usize> = Vec::new();
        for &(gi, _) in batch {
            if !peers.contains(&gi) {
                peers.push(gi);
            }
        }

        let meta_recvs = peers
            .iter()
            .map(|&gi| comm.post_recv(((n + gi) % nodes) * q + g, Tag::metadata(round)))
            .collect::<Result<Vec<_>>>()?;
        let mut pending = meta_recvs.clone();
        for &gi in &peers {
            let m = (n + nodes - gi) % nodes;
            let lengths = batch
                .iter()
                .filter(|&&(gj, _)| gj == gi)
                .map(|&(_, gr)| blocks[m][gr].len());
            pending.push(comm.post_send(
                m * q + g,
                Tag::metadata(round),
                encode_lengths(lengths),
            )?);
        }
        comm.wait_all(&pending).await?;
        let mut expected = Vec::with_capacity(batch.len());
        for (&gi, req) in peers.iter().zip(meta_recvs) {
            let lengths = decode_lengths(&comm.take_payload(req)?)?;
            let count = batch.iter().filter(|&&(gj, _)| gj == gi).count();
            if lengths.len() != count {
                return Err(Error::Protocol(format!(
                    "peer offset {gi} announced {} blocks, expected {count}",
                    lengths.len()
                )));
            }
            expected.push((gi, lengths.into_iter()));
        }

        let data_recvs = batch
            .iter()
            .map(|&(gi, _)| comm.post_recv(((n + gi) % nodes) * q + g, Tag::data(round)))
            .collect::<Result<Vec<_>>>()?;
        let mut pending = data_recvs.clone();
        for &(gi, gr) in batch {
            let m = (n + nodes - gi) % nodes;
            pending.push(comm.post_send(m * q + g, Tag::data(round), blocks[m][gr].clone())?);
        }
        comm.wait_all(&pending).await?;
        for (&(gi, gr), req) in batch.iter().zip(data_recvs) {
            let block = comm.take_payload(req)?;
            let announced = expected
                .iter_mut()
                .find(|(gj, _)| *gj == gi)
                .and_then(|(_, it)| it.next());
            if announced != Some(block.len()) {
                return Err(Error::Protocol(format!(
                    "block of {} bytes does not match announced length {announced:?}",
                    block.len()
                )));
            }
            recv[((n + gi) % nodes) * q + gr] = block;
        }
    }
    Ok(recv)
}

/// Blocks received by one rank plus its intra-phase buffer statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierOutput {
    pub recv: RankBlocks,
    pub temp: TempStats,
}

pub async fn htuna<C: Communicator>(
    comm: &C,
    workload: &Workload,
    params: &HierParams,
) -> Result<HierOutput> {
    let state = intra_node_exchange(comm, workload, params).await?;
    let temp = state.temp;
    let recv = match params.variant() {
        InterVariant::Coalesced => inter_node_coalesced(comm, state, params).await?,
        InterVariant::Staggered => inter_node_staggered(comm, state, params).await?,
    };
    Ok(HierOutput { recv, temp })
}
