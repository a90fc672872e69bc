//! Seeded alltoallv problem instances.
//!
//! All randomness comes from SplitMix64 so other implementations can
//! reproduce a workload bit for bit. Reference outputs for seed 0 are
//! `0xe220a8397b1dcdaf`, `0x6e789e6aa1b965f4`, `0x06c45d188009454f`.
//!
//! Sizes are drawn row-major (source, then destination) from one stream
//! seeded with `seed`. Payload bytes are a separate keyed stream per
//! `(seed, src, dst)`, so content never depends on the size draws.

use std::fmt;
use std::str::FromStr;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-source, per-destination blocks of one alltoallv call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    send_sizes: Vec<Vec<usize>>,
    payloads: Vec<Vec<Vec<u8>>>,
}

impl Workload {
    /// Builds a workload from explicit payloads, `payloads[src][dst]`.
    pub fn from_payloads(payloads: Vec<Vec<Vec<u8>>>) -> Result<Self> {
        let p = payloads.len();
        if p == 0 {
            return Err(Error::param("workload needs at least one process"));
        }
        if let Some(bad) = payloads.iter().position(|row| row.len() != p) {
            return Err(Error::param(format!(
                "row {bad} has {} blocks, expected {p}",
                payloads[bad].len()
            )));
        }
        let send_sizes = payloads
            .iter()
            .map(|row| row.iter().map(Vec::len).collect())
            .collect();
        Ok(Self {
            send_sizes,
            payloads,
        })
    }

    /// Builds a workload from a size matrix, filling content from `seed`.
    pub fn from_sizes(send_sizes: Vec<Vec<usize>>, seed: u64) -> Result<Self> {
        let payloads = send_sizes
            .iter()
            .enumerate()
            .map(|(src, row)| {
                row.iter()
                    .enumerate()
                    .map(|(dst, &len)| payload_bytes(seed, src, dst, len))
                    .collect()
            })
            .collect();
        Self::from_payloads(payloads)
    }

    pub fn processes(&self) -> usize {
        self.send_sizes.len()
    }

    pub fn send_sizes(&self) -> &[Vec<usize>] {
        &self.send_sizes
    }

    pub fn payload(&self, src: usize, dst: usize) -> &[u8] {
        &self.payloads[src][dst]
    }

    /// Everything rank `src` sends, indexed by destination.
    pub fn row(&self, src: usize) -> &[Vec<u8>] {
        &self.payloads[src]
    }

    pub fn max_block(&self) -> usize {
        self.send_sizes.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn total_bytes(&self) -> usize {
        self.send_sizes.iter().flatten().sum()
    }
}

/// Content of block `(src, dst)`: little-endian words of a SplitMix64
/// stream keyed by `(seed, src, dst)`, truncated to `len` bytes.
pub fn payload_bytes(seed: u64, src: usize, dst: usize, len: usize) -> Vec<u8> {
    let key = splitmix(splitmix(seed) ^ ((src as u64) << 32 | dst as u64));
    let mut rng = SplitMix64::seed_from_u64(key);
    let mut out = Vec::with_capacity(len + 8);
    while out.len() < len {
        out.extend_from_slice(&rng.next_u64().to_le_bytes());
    }
    out.truncate(len);
    out
}

fn splitmix(x: u64) -> u64 {
    SplitMix64::seed_from_u64(x).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    Uniform,
    Normal,
    Powerlaw,
    FftN1,
    FftN2,
}

impl DistKind {
    pub const ALL: [DistKind; 5] = [
        DistKind::Uniform,
        DistKind::Normal,
        DistKind::Powerlaw,
        DistKind::FftN1,
        DistKind::FftN2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DistKind::Uniform => "uniform",
            DistKind::Normal => "normal",
            DistKind::Powerlaw => "powerlaw",
            DistKind::FftN1 => "fft_n1",
            DistKind::FftN2 => "fft_n2",
        }
    }
}

impl fmt::Display for DistKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param(format!("unknown distribution '{s}'")))
    }
}

/// Block-size distribution plus seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistSpec {
    pub kind: DistKind,
    /// Largest block in bytes (`S`); ignored by the FFT patterns.
    pub max_block: usize,
    pub mean: f64,
    pub stddev: f64,
    pub exponent: f64,
    pub seed: u64,
}

impl DistSpec {
    pub fn new(kind: DistKind, max_block: usize, seed: u64) -> Self {
        Self {
            kind,
            max_block,
            mean: 1000.0,
            stddev: 240.0,
            exponent: 0.95,
            seed,
        }
    }

    pub fn uniform(max_block: usize, seed: u64) -> Self {
        Self::new(DistKind::Uniform, max_block, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() {
            return Err(Error::param("mean must be finite"));
        }
        if !(self.stddev.is_finite() && self.stddev >= 0.0) {
            return Err(Error::param("stddev must be finite and non-negative"));
        }
        if !(self.exponent.is_finite() && self.exponent > 0.0) {
            return Err(Error::param("power-law exponent must be positive"));
        }
        Ok(())
    }
}

/// Draws from the size stream.
struct Sampler(SplitMix64);

impl Sampler {
    /// Integer in `[0, n)` by multiply-shift.
    fn below(&mut self, n: u64) -> u64 {
        ((u128::from(self.0.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Float in `[0, 1)` from the top 53 bits.
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by Box-Muller, cosine branch only (two draws).
    fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// `⌈a·P/b⌉` in integer arithmetic.
fn ceil_frac(p: usize, a: usize, b: usize) -> usize {
    (a * p).div_ceil(b)
}

/// Ranks that carry data in the first FFT pattern: `⌈0.625·P⌉`.
pub fn fft_n1_workers(p: usize) -> usize {
    ceil_frac(p, 5, 8)
}

/// Destinations each FFT worker fills: `⌈0.78125·P⌉`.
pub fn fft_n1_destinations(p: usize) -> usize {
    ceil_frac(p, 25, 32)
}

/// 8 FP64 values per block.
pub const FFT_N1_BLOCK: usize = 64;
/// 64 FP64 values per block.
pub const FFT_N2_BLOCK: usize = 512;
/// 16 FP64 values per block, sent by the last rank.
pub const FFT_N2_LAST_BLOCK: usize = 128;

pub fn generate(spec: &DistSpec, processes: usize) -> Result<Workload> {
    Workload::from_sizes(generate_sizes(spec, processes)?, spec.seed)
}

/// The `P×P` size matrix of [`generate`], without payloads.
pub fn generate_sizes(spec: &DistSpec, processes: usize) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    if processes == 0 {
        return Err(Error::param("workload needs at least one process"));
    }
    let p = processes;
    let s = spec.max_block;
    let mut rng = Sampler(SplitMix64::seed_from_u64(spec.seed));
    let sizes: Vec<Vec<usize>> = match spec.kind {
        DistKind::Uniform => (0..p)
            .map(|_| (0..p).map(|_| rng.below(s as u64 + 1) as usize).collect())
            .collect(),
        DistKind::Normal => (0..p)
            .map(|_| {
                (0..p)
                    .map(|_| {
                        let v = (spec.mean + spec.stddev * rng.standard_normal()).round();
                        v.clamp(0.0, s as f64) as usize
                    })
                    .collect()
            })
            .collect(),
        DistKind::Powerlaw => {
            // bounded Pareto on [1, S] by inverse CDF
            let a = spec.exponent;
            let tail = 1.0 - (s.max(1) as f64).powf(-a);
            (0..p)
                .map(|_| {
                    (0..p)
                        .map(|_| {
                            let u = rng.unit();
                            if s == 0 {
                                return 0;
                            }
                            let x = (1.0 - u * tail).powf(-1.0 / a);
                            (x.floor() as usize).clamp(1, s)
                        })
                        .collect()
                })
                .collect()
        }
        DistKind::FftN1 => {
            let workers = fft_n1_workers(p);
            let filled = fft_n1_destinations(p);
            (0..p)
                .map(|src| {
                    (0..p)
                        .map(|dst| {
                            if src < workers && dst < filled {
                                FFT_N1_BLOCK
                            } else {
                                0
                            }
                        })
                        .collect()
                })
                .collect()
        }
        DistKind::FftN2 => (0..p)
            .map(|src| {
                let len = if src + 1 == p {
                    FFT_N2_LAST_BLOCK
                } else {
                    FFT_N2_BLOCK
                };
                vec![len; p]
            })
            .collect(),
    };
    Ok(sizes)
}

/// Mean over all `P²` entries of a size matrix.
pub fn mean_block_size(sizes: &[Vec<usize>]) -> f64 {
    let count: usize = sizes.iter().map(Vec::len).sum();
    if count == 0 {
        return 0.0;
    }
    sizes.iter().flatten().sum::<usize>() as f64 / count as f64
}

/// Serialized form of a generated workload. Payloads are regenerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadHeader {
    pub kind: DistKind,
    pub params: DistParams,
    #[serde(rename = "P")]
    pub processes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistParams {
    #[serde(rename = "S")]
    pub max_block: usize,
    pub mean: f64,
    pub stddev: f64,
    pub exponent: f64,
}

impl WorkloadHeader {
    pub fn new(spec: &DistSpec, processes: usize) -> Self {
        Self {
            kind: spec.kind,
            params: DistParams {
                max_block: spec.max_block,
                mean: spec.mean,
                stddev: spec.stddev,
                exponent: spec.exponent,
            },
            processes,
            seed: spec.seed,
        }
    }

    pub fn spec(&self) -> DistSpec {
        DistSpec {
            kind: self.kind,
            max_block: self.params.max_block,
            mean: self.params.mean,
            stddev: self.params.stddev,
            exponent: self.params.exponent,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn regenerate(&self) -> Result<Workload> {
        generate(&self.spec(), self.processes)
    }
}
