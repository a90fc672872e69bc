//! Radix-r schedule arithmetic shared by every logarithmic exchange.
//!
//! Block indices are relative positions `i ∈ [0, P)`. Position `i` is
//! transmitted once for every non-zero base-r digit it has, in ascending
//! digit order, so a block travels a total rank distance of exactly `i`.
//! Everything here is pure and allocation-light.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Process count and radix of one exchange, with the derived digit count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RadixParams {
    processes: usize,
    radix: usize,
    width: u32,
}

impl RadixParams {
    /// Validates `2 ≤ radix ≤ processes`. A single process accepts any
    /// radix ≥ 2 and yields an empty schedule.
    pub fn new(processes: usize, radix: usize) -> Result<Self> {
        if processes == 0 {
            return Err(Error::param("process count must be at least 1"));
        }
        if radix < 2 {
            return Err(Error::param(format!("radix {radix} is below 2")));
        }
        if processes > 1 && radix > processes {
            return Err(Error::param(format!(
                "radix {radix} exceeds process count {processes}"
            )));
        }
        let mut width = 0u32;
        let mut span = 1usize;
        while span < processes {
            span = span.saturating_mul(radix);
            width += 1;
        }
        Ok(Self {
            processes,
            radix,
            width,
        })
    }

    pub fn processes(&self) -> usize {
        self.processes
    }

    pub fn radix(&self) -> usize {
        self.radix
    }

    /// Digit count `w = ⌈log_r P⌉`.
    pub fn width(&self) -> u32 {
        self.width
    }

    /// `r^x`, the rank distance unit of digit position `x`.
    pub fn place(&self, x: u32) -> usize {
        self.radix.pow(x)
    }

    /// Base-r digit of `i` at position `x`.
    pub fn digit(&self, i: usize, x: u32) -> usize {
        (i / self.place(x)) % self.radix
    }

    /// Position and value of the highest non-zero digit of `i > 0`.
    pub fn leading_digit(&self, i: usize) -> (u32, usize) {
        debug_assert!(i > 0);
        let mut x = 0;
        let mut rest = i;
        while rest >= self.radix {
            rest /= self.radix;
            x += 1;
        }
        (x, rest)
    }

    /// Number of non-empty rounds `K`, counted without building the sets.
    /// Round `(x, z)` is non-empty iff its smallest member `z·r^x` is < P.
    pub fn round_count(&self) -> usize {
        let mut k = 0;
        let mut place = 1usize;
        for _ in 0..self.width {
            k += ((self.processes - 1) / place).min(self.radix - 1);
            place = place.saturating_mul(self.radix);
        }
        k
    }

    /// Total blocks sent per process `D`: the non-zero digits of every
    /// index in `[1, P)`.
    pub fn block_volume(&self) -> usize {
        (1..self.processes)
            .map(|i| {
                let mut n = 0;
                let mut rest = i;
                while rest > 0 {
                    n += usize::from(rest % self.radix != 0);
                    rest /= self.radix;
                }
                n
            })
            .sum()
    }

    /// Temporary-buffer capacity in blocks, `B = P − (K + 1)`.
    pub fn temp_capacity(&self) -> usize {
        self.processes.saturating_sub(self.round_count() + 1)
    }

    /// Radices `P − 1` and `P` produce the same schedule (every index has
    /// one non-zero digit); this names the pair by `P`.
    pub fn canonical_radix(&self) -> usize {
        if self.processes >= 3 && self.radix == self.processes - 1 {
            self.processes
        } else {
            self.radix
        }
    }

    /// True if `o` is the first block of some round, `z·r^x`.
    pub fn is_direct(&self, o: usize) -> bool {
        if o == 0 || o >= self.processes {
            return false;
        }
        let (x, z) = self.leading_digit(o);
        o == z * self.place(x)
    }

    /// Slot in the temporary buffer for non-direct block `o`:
    /// `t = o − 1 − dx·(r − 1) − dz`, where `(dx, dz)` is the leading digit.
    pub fn temp_slot(&self, o: usize) -> Result<usize> {
        if o == 0 || o >= self.processes {
            return Err(Error::Domain {
                index: o,
                domain: format!("non-direct blocks of [1, {})", self.processes),
            });
        }
        let (dx, dz) = self.leading_digit(o);
        if o == dz * self.place(dx) {
            return Err(Error::Domain {
                index: o,
                domain: "non-direct blocks (index is direct)".into(),
            });
        }
        Ok(o - 1 - dx as usize * (self.radix - 1) - dz)
    }
}

/// Fixed-width base-r digits of `i`, least significant first.
pub fn digits_base_r(i: usize, params: &RadixParams) -> Result<Vec<usize>> {
    if i >= params.processes() {
        return Err(Error::Domain {
            index: i,
            domain: format!("[0, {})", params.processes()),
        });
    }
    let mut rest = i;
    Ok((0..params.width())
        .map(|_| {
            let d = rest % params.radix();
            rest /= params.radix();
            d
        })
        .collect())
}

/// One communication round `(x, z)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundSpec {
    pub x: u32,
    pub z: usize,
    /// Rank distance `z·r^x`.
    pub send_offset: usize,
    /// Ascending positions whose digit `x` equals `z`.
    pub block_indices: Vec<usize>,
}

impl RoundSpec {
    /// First block of the round; it reaches its destination in one hop.
    pub fn direct_block(&self) -> usize {
        self.block_indices[0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundSchedule {
    pub params: RadixParams,
    pub rounds: Vec<RoundSpec>,
}

impl RoundSchedule {
    /// `K`, the number of non-empty rounds.
    pub fn round_count(&self) -> usize {
        self.rounds.len()
    }

    /// `D`, blocks transmitted by one process over all rounds.
    pub fn block_transmissions(&self) -> usize {
        self.rounds.iter().map(|r| r.block_indices.len()).sum()
    }
}

/// Rounds ordered by `(x, z)`; empty rounds are dropped.
pub fn build_schedule(params: &RadixParams) -> RoundSchedule {
    let r = params.radix();
    let w = params.width() as usize;
    let mut sets = vec![Vec::new(); w * (r - 1)];
    for i in 1..params.processes() {
        let mut rest = i;
        for x in 0..w {
            let d = rest % r;
            if d != 0 {
                sets[x * (r - 1) + d - 1].push(i);
            }
            rest /= r;
        }
    }
    let rounds = sets
        .into_iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(k, block_indices)| {
            let x = (k / (r - 1)) as u32;
            let z = k % (r - 1) + 1;
            RoundSpec {
                x,
                z,
                send_offset: z * params.place(x),
                block_indices,
            }
        })
        .collect();
    RoundSchedule {
        params: *params,
        rounds,
    }
}

/// `I[i] = (2p − i + P) mod P`.
pub fn rotation_index(p: usize, processes: usize) -> Result<Vec<usize>> {
    if p >= processes {
        return Err(Error::InvalidRank {
            rank: p,
            size: processes,
        });
    }
    Ok((0..processes)
        .map(|i| (2 * p + processes - i) % processes)
        .collect())
}

pub fn direct_blocks(schedule: &RoundSchedule) -> BTreeSet<usize> {
    schedule
        .rounds
        .iter()
        .map(RoundSpec::direct_block)
        .collect()
}

pub fn temp_capacity(params: &RadixParams) -> usize {
    params.temp_capacity()
}

pub fn temp_slot(o: usize, params: &RadixParams) -> Result<usize> {
    params.temp_slot(o)
}

/// Materialized buffer layout: direct set plus the `o → t` slot map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TempLayout {
    pub capacity_blocks: usize,
    pub slot_of: BTreeMap<usize, usize>,
    pub direct_set: BTreeSet<usize>,
}

impl TempLayout {
    pub fn new(params: &RadixParams) -> Self {
        let schedule = build_schedule(params);
        let direct_set = direct_blocks(&schedule);
        let slot_of = (1..params.processes())
            .filter(|o| !direct_set.contains(o))
            .map(|o| (o, params.temp_slot(o).expect("non-direct index")))
            .collect();
        Self {
            capacity_blocks: params.temp_capacity(),
            slot_of,
            direct_set,
        }
    }
}
