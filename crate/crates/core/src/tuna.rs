//! Tunable-radix non-uniform all-to-all.
//!
//! Position `i` of rank `p` starts out holding the block for rank
//! `(p − i) mod P` and moves down by `z·r^x` in every round `(x, z)` where
//! digit `x` of `i` is `z`. Each round is a metadata message (block
//! lengths) followed by one concatenated data message. Blocks that still
//! have higher digits to travel wait in a fixed-stride temporary buffer.

use crate::baselines::{check_size, RankBlocks};
use crate::error::{Error, Result};
use crate::radix::{build_schedule, rotation_index, RadixParams};
use crate::transport::{decode_lengths, encode_lengths, sendrecv, split_blocks, Communicator, Tag};
use crate::workloads::Workload;

/// Staging store of `slots` blocks, each at most `stride` bytes, at
/// fixed offsets `slot·stride`.
#[derive(Debug, Clone)]
pub struct TempBuffer {
    stride: usize,
    data: Vec<u8>,
    lens: Vec<Option<usize>>,
    occupied: usize,
    peak: usize,
}

impl TempBuffer {
    pub fn new(slots: usize, stride: usize) -> Self {
        Self {
            stride,
            data: Vec::new(),
            lens: vec![None; slots],
            occupied: 0,
            peak: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.lens.len()
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn store(&mut self, slot: usize, block: &[u8]) -> Result<()> {
        let cap = self.capacity();
        let entry = self
            .lens
            .get_mut(slot)
            .ok_or_else(|| Error::TempBuffer(format!("slot {slot} outside capacity {cap}")))?;
        if entry.is_some() {
            return Err(Error::TempBuffer(format!("slot {slot} already occupied")));
        }
        if block.len() > self.stride {
            return Err(Error::TempBuffer(format!(
                "block of {} bytes exceeds slot stride {}",
                block.len(),
                self.stride
            )));
        }
        *entry = Some(block.len());
        let at = slot * self.stride;
        if self.data.len() < at + self.stride {
            self.data.resize(at + self.stride, 0);
        }
        self.data[at..at + block.len()].copy_from_slice(block);
        self.occupied += 1;
        self.peak = self.peak.max(self.occupied);
        Ok(())
    }

    /// Copies out and frees `slot`.
    pub fn take(&mut self, slot: usize) -> Result<&[u8]> {
        let len = self
            .lens
            .get_mut(slot)
            .and_then(Option::take)
            .ok_or_else(|| Error::TempBuffer(format!("slot {slot} is empty")))?;
        self.occupied -= 1;
        let at = slot * self.stride;
        Ok(&self.data[at..at + len])
    }
}

/// Temporary-buffer sizing and the high-water mark of one rank's run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TempStats {
    pub capacity_blocks: usize,
    pub peak_blocks: usize,
}

/// Radix exchange among the `params.processes()` ranks of a group.
///
/// The group carries `lanes` independent block sets on the same
/// messages. `peer` maps a group-local index to a global rank, `source`
/// yields the initial block at `(lane, position)` and `deliver` receives
/// each block that has arrived, tagged with its group-local source.
#[allow(clippy::too_many_arguments)]
pub(crate) async fn radix_exchange<'w, C, P, S, D>(
    comm: &C,
    params: &RadixParams,
    local: usize,
    peer: P,
    lanes: usize,
    max_block: usize,
    source: S,
    mut deliver: D,
) -> Result<TempStats>
where
    C: Communicator,
    P: Fn(usize) -> usize,
    S: Fn(usize, usize) -> &'w [u8],
    D: FnMut(usize, usize, Vec<u8>),
{
    let g = params.processes();
    let r = params.radix();
    let per_lane = params.temp_capacity();
    let mut temp = TempBuffer::new(lanes * per_lane, max_block);
    let schedule = build_schedule(params);
    for (k, round) in schedule.rounds.iter().enumerate() {
        let place = params.place(round.x);
        let send_to = peer((local + g - round.send_offset) % g);
        let recv_from = peer((local + round.send_offset) % g);
        let slots = round
            .block_indices
            .iter()
            .map(|&i| {
                if i < place * r {
                    Ok(None)
                } else {
                    params.temp_slot(i).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let mut lengths = Vec::with_capacity(round.block_indices.len() * lanes);
        let mut data = Vec::new();
        for &i in &round.block_indices {
            let staged = i % place != 0;
            for lane in 0..lanes {
                let block = if staged {
                    let t = params.temp_slot(i)?;
                    temp.take(lane * per_lane + t)?
                } else {
                    source(lane, i)
                };
                lengths.push(block.len());
                data.extend_from_slice(block);
            }
        }

        let round_id = k as u32;
        let meta = sendrecv(
            comm,
            send_to,
            recv_from,
            Tag::metadata(round_id),
            encode_lengths(lengths),
        )
        .await?;
        let incoming = decode_lengths(&meta)?;
        if incoming.len() != round.block_indices.len() * lanes {
            return Err(Error::Protocol(format!(
                "round {k}: expected {} lengths from rank {recv_from}, got {}",
                round.block_indices.len() * lanes,
                incoming.len()
            )));
        }
        let payload = sendrecv(comm, send_to, recv_from, Tag::data(round_id), data).await?;
        let mut blocks = split_blocks(&payload, &incoming)?.into_iter();
        for (&i, slot) in round.block_indices.iter().zip(&slots) {
            for lane in 0..lanes {
                let block = blocks.next().expect("length count checked");
                match slot {
                    None => deliver(lane, (local + i) % g, block),
                    Some(t) => temp.store(lane * per_lane + t, &block)?,
                }
            }
        }
    }
    if temp.occupied() != 0 {
        return Err(Error::TempBuffer(format!(
            "{} block(s) left staged after the last round",
            temp.occupied()
        )));
    }
    Ok(TempStats {
        capacity_blocks: temp.capacity(),
        peak_blocks: temp.peak(),
    })
}

/// Blocks received by one rank plus its buffer statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TunaOutput {
    pub recv: RankBlocks,
    pub temp: TempStats,
}

pub async fn tuna_alltoallv<C: Communicator>(
    comm: &C,
    workload: &Workload,
    radix: usize,
) -> Result<TunaOutput> {
    check_size(comm, workload)?;
    let p = comm.size();
    let me = comm.rank();
    let params = RadixParams::new(p, radix)?;
    let local_max = workload.row(me).iter().map(Vec::len).max().unwrap_or(0);
    let max_block = comm.allreduce_max(local_max as u64).await? as usize;
    let rotation = rotation_index(me, p)?;

    let mut recv = vec![Vec::new(); p];
    recv[me] = workload.payload(me, me).to_vec();
    let temp = radix_exchange(
        comm,
        &params,
        me,
        |q| q,
        1,
        max_block,
        |_, i| workload.payload(me, rotation[(me + i) % p]),
        |_, src, block| recv[src] = block,
    )
    .await?;
    Ok(TunaOutput { recv, temp })
}
