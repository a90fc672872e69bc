//! Alpha-beta cost model over traces and closed-form schedules.
//!
//! Rounds are bulk-synchronous: a round costs `alpha` times the message
//! count of its busiest rank plus `beta` times the largest byte count any
//! rank sends in it, separately per link class. Self copies are free.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radix::{build_schedule, RadixParams};
use crate::transport::{LinkClass, Phase, Trace};

/// Built-in parameter set; illustrative, not measured on any machine.
pub const DEFAULT_COST_JSON: &str = include_str!("default_cost.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Seconds per message.
    pub alpha_intra: f64,
    pub alpha_inter: f64,
    /// Seconds per byte.
    pub beta_intra: f64,
    pub beta_inter: f64,
    pub meta_entry_bytes: usize,
}

impl Default for CostParams {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_COST_JSON).expect("embedded cost defaults parse")
    }
}

impl CostParams {
    /// Rejects negative or non-finite values; returns advisory warnings
    /// when inter-node links are cheaper than intra-node ones.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [
            ("alpha_intra", self.alpha_intra),
            ("alpha_inter", self.alpha_inter),
            ("beta_intra", self.beta_intra),
            ("beta_inter", self.beta_inter),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::param(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        let mut warnings = Vec::new();
        if self.alpha_inter < self.alpha_intra {
            warnings.push(format!(
                "alpha_inter ({}) is below alpha_intra ({})",
                self.alpha_inter, self.alpha_intra
            ));
        }
        if self.beta_inter < self.beta_intra {
            warnings.push(format!(
                "beta_inter ({}) is below beta_intra ({})",
                self.beta_inter, self.beta_intra
            ));
        }
        Ok(warnings)
    }

    pub fn alpha(&self, link: LinkClass) -> f64 {
        match link {
            LinkClass::SelfLink => 0.0,
            LinkClass::IntraNode => self.alpha_intra,
            LinkClass::InterNode => self.alpha_inter,
        }
    }

    pub fn beta(&self, link: LinkClass) -> f64 {
        match link {
            LinkClass::SelfLink => 0.0,
            LinkClass::IntraNode => self.beta_intra,
            LinkClass::InterNode => self.beta_inter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CostTerm {
    /// Per-message latency and per-byte transfer of the round's messages.
    Transfer,
    /// One extra latency for the wait that closes a batch.
    Sync,
    /// Contention surrogate for concurrently outstanding messages.
    Contention,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundCost {
    pub round: u32,
    pub link: LinkClass,
    pub term: CostTerm,
    pub latency_seconds: f64,
    pub bandwidth_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub total_seconds: f64,
    pub breakdown: Vec<RoundCost>,
}

impl Prediction {
    pub fn from_breakdown(breakdown: Vec<RoundCost>) -> Self {
        let total_seconds = breakdown
            .iter()
            .fold(0.0, |acc, c| acc + c.latency_seconds + c.bandwidth_seconds);
        Self {
            total_seconds,
            breakdown,
        }
    }
}

#[derive(Default)]
struct RankLoad {
    messages: usize,
    bytes: usize,
}

/// Per `(round, link)`: the busiest rank's message count and the largest
/// per-rank byte count.
fn round_loads(trace: &Trace) -> BTreeMap<(u32, LinkClass), (usize, usize)> {
    let mut per_rank: BTreeMap<(u32, LinkClass, usize), RankLoad> = BTreeMap::new();
    for e in &trace.events {
        if e.link == LinkClass::SelfLink {
            continue;
        }
        let load = per_rank.entry((e.round, e.link, e.src)).or_default();
        load.messages += 1;
        load.bytes += e.bytes;
    }
    let mut rounds: BTreeMap<(u32, LinkClass), (usize, usize)> = BTreeMap::new();
    for ((round, link, _), load) in per_rank {
        let entry = rounds.entry((round, link)).or_default();
        entry.0 = entry.0.max(load.messages);
        entry.1 = entry.1.max(load.bytes);
    }
    rounds
}

pub fn predict_from_trace(trace: &Trace, params: &CostParams) -> Prediction {
    let breakdown = round_loads(trace)
        .into_iter()
        .map(|((round, link), (messages, bytes))| RoundCost {
            round,
            link,
            term: CostTerm::Transfer,
            latency_seconds: params.alpha(link) * messages as f64,
            bandwidth_seconds: params.beta(link) * bytes as f64,
        })
        .collect();
    Prediction::from_breakdown(breakdown)
}

/// Closed-form cost of a radix exchange over inter-node links:
/// `2·K·alpha + beta·D·(s + meta_entry_bytes)`.
pub fn tuna_cost_closed_form(
    rounds: usize,
    blocks: usize,
    mean_block_bytes: f64,
    params: &CostParams,
) -> f64 {
    2.0 * rounds as f64 * params.alpha_inter
        + params.beta_inter * blocks as f64 * (mean_block_bytes + params.meta_entry_bytes as f64)
}

/// Per-round analytic prediction for a radix exchange in which every
/// block has `mean_block_bytes` bytes and every message crosses nodes.
pub fn analytic_tuna_cost(
    processes: usize,
    radix: usize,
    mean_block_bytes: f64,
    params: &CostParams,
) -> Result<Prediction> {
    let rp = RadixParams::new(processes, radix)?;
    let per_block = mean_block_bytes + params.meta_entry_bytes as f64;
    let link = LinkClass::InterNode;
    let breakdown = build_schedule(&rp)
        .rounds
        .iter()
        .enumerate()
        .map(|(k, round)| RoundCost {
            round: k as u32,
            link,
            term: CostTerm::Transfer,
            latency_seconds: params.alpha(link) * 2.0,
            bandwidth_seconds: params.beta(link) * (round.block_indices.len() as f64 * per_block),
        })
        .collect();
    Ok(Prediction::from_breakdown(breakdown))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadixPoint {
    pub radix: usize,
    pub seconds: f64,
    pub rounds: usize,
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadixSweep {
    pub processes: usize,
    pub mean_block_bytes: f64,
    /// Argmin over the curve, ties toward the smaller radix, reported by
    /// its canonical name (`P − 1` and `P` are the same schedule).
    pub best_radix: usize,
    pub curve: Vec<RadixPoint>,
}

pub const SWEEP_SCHEMA: &str = "tuna-sweep/1";

impl RadixSweep {
    pub fn best(&self) -> &RadixPoint {
        argmin(&self.curve, |p| p.seconds)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("schema,P,r,predicted_seconds,K,D\n");
        for p in &self.curve {
            let _ = writeln!(
                out,
                "{SWEEP_SCHEMA},{},{},{},{},{}",
                self.processes, p.radix, p.seconds, p.rounds, p.blocks
            );
        }
        out
    }
}

/// First minimum, so ties go to the earliest point.
fn argmin<T>(points: &[T], key: impl Fn(&T) -> f64) -> &T {
    let mut best = &points[0];
    for p in &points[1..] {
        if key(p) < key(best) {
            best = p;
        }
    }
    best
}

/// Evaluates the closed-form cost for every `r ∈ [2, P]`.
pub fn sweep_radix(
    processes: usize,
    mean_block_bytes: f64,
    params: &CostParams,
) -> Result<RadixSweep> {
    if processes < 2 {
        return Err(Error::param(format!(
            "a radix sweep needs at least 2 processes, got {processes}"
        )));
    }
    params.validate()?;
    let curve: Vec<RadixPoint> = (2..=processes)
        .map(|radix| {
            let rp = RadixParams::new(processes, radix)?;
            let (rounds, blocks) = (rp.round_count(), rp.block_volume());
            Ok(RadixPoint {
                radix,
                seconds: tuna_cost_closed_form(rounds, blocks, mean_block_bytes, params),
                rounds,
                blocks,
            })
        })
        .collect::<Result<_>>()?;
    let raw = argmin(&curve, |p| p.seconds).radix;
    Ok(RadixSweep {
        processes,
        mean_block_bytes,
        best_radix: RadixParams::new(processes, raw)?.canonical_radix(),
        curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizePoint {
    pub mean_block_bytes: f64,
    pub best_radix: usize,
    pub seconds: f64,
    pub rounds: usize,
    pub blocks: usize,
}

/// Best radix for each mean block size.
pub fn sweep_message_size(
    processes: usize,
    sizes: &[f64],
    params: &CostParams,
) -> Result<Vec<SizePoint>> {
    sizes
        .iter()
        .map(|&s| {
            let sweep = sweep_radix(processes, s, params)?;
            let best = sweep.best();
            Ok(SizePoint {
                mean_block_bytes: s,
                best_radix: sweep.best_radix,
                seconds: best.seconds,
                rounds: best.rounds,
                blocks: best.blocks,
            })
        })
        .collect()
}

pub fn size_sweep_csv(processes: usize, points: &[SizePoint]) -> String {
    let mut out = String::from("schema,P,mean_block_bytes,best_r,predicted_seconds,K,D\n");
    for p in points {
        let _ = writeln!(
            out,
            "{SWEEP_SCHEMA},{processes},{},{},{},{},{}",
            p.mean_block_bytes, p.best_radix, p.seconds, p.rounds, p.blocks
        );
    }
    out
}

/// Trace cost plus one synchronization latency per round and a
/// contention charge of `congestion_penalty · B · (m − 1)` per round,
/// where `m` is the busiest rank's data-message count in the round and
/// `B` the largest per-rank data bytes. `congestion_penalty` is in
/// seconds per byte per additional concurrent message.
pub fn block_count_cost(trace: &Trace, params: &CostParams, congestion_penalty: f64) -> Prediction {
    let mut breakdown = predict_from_trace(trace, params).breakdown;
    let mut per_rank: BTreeMap<(u32, usize), RankLoad> = BTreeMap::new();
    let mut links: BTreeMap<u32, LinkClass> = BTreeMap::new();
    for e in &trace.events {
        if e.link == LinkClass::SelfLink || e.phase != Phase::Data {
            continue;
        }
        let load = per_rank.entry((e.round, e.src)).or_default();
        load.messages += 1;
        load.bytes += e.bytes;
        let link = links.entry(e.round).or_insert(e.link);
        *link = (*link).max(e.link);
    }
    let mut per_round: BTreeMap<u32, (LinkClass, usize, usize)> = BTreeMap::new();
    for ((round, _), load) in per_rank {
        let entry = per_round.entry(round).or_insert((links[&round], 0, 0));
        entry.1 = entry.1.max(load.messages);
        entry.2 = entry.2.max(load.bytes);
    }
    for (round, (link, messages, bytes)) in per_round {
        breakdown.push(RoundCost {
            round,
            link,
            term: CostTerm::Sync,
            latency_seconds: params.alpha(link),
            bandwidth_seconds: 0.0,
        });
        breakdown.push(RoundCost {
            round,
            link,
            term: CostTerm::Contention,
            latency_seconds: 0.0,
            bandwidth_seconds: congestion_penalty
                * bytes as f64
                * messages.saturating_sub(1) as f64,
        });
    }
    Prediction::from_breakdown(breakdown)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockCountPoint {
    pub block_count: usize,
    pub seconds: f64,
    /// Batches with data traffic.
    pub rounds: usize,
    /// Data messages sent by the busiest rank.
    pub data_messages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCountSweep {
    pub processes: usize,
    pub best_block_count: usize,
    pub curve: Vec<BlockCountPoint>,
}

impl BlockCountSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("schema,P,block_count,predicted_seconds,K,D\n");
        for p in &self.curve {
            let _ = writeln!(
                out,
                "{SWEEP_SCHEMA},{},{},{},{},{}",
                self.processes, p.block_count, p.seconds, p.rounds, p.data_messages
            );
        }
        out
    }
}

/// Costs the trace produced for each block count; ties toward the
/// smaller block count.
pub fn sweep_block_count<I, F>(
    block_counts: I,
    mut trace_for: F,
    params: &CostParams,
    congestion_penalty: f64,
) -> Result<BlockCountSweep>
where
    I: IntoIterator<Item = usize>,
    F: FnMut(usize) -> Result<Trace>,
{
    if !congestion_penalty.is_finite() || congestion_penalty < 0.0 {
        return Err(Error::param(format!(
            "congestion penalty {congestion_penalty} must be finite and >= 0"
        )));
    }
    params.validate()?;
    let mut processes = 0;
    let mut curve = Vec::new();
    for block_count in block_counts {
        let trace = trace_for(block_count)?;
        processes = trace.processes;
        let metrics = trace.metrics();
        curve.push(BlockCountPoint {
            block_count,
            seconds: block_count_cost(&trace, params, congestion_penalty).total_seconds,
            rounds: metrics.rounds,
            data_messages: trace
                .sends_by_rank(Phase::Data)
                .into_iter()
                .max()
                .unwrap_or(0),
        });
    }
    if curve.is_empty() {
        return Err(Error::param("block_count sweep over an empty range"));
    }
    curve.sort_by_key(|p| p.block_count);
    Ok(BlockCountSweep {
        processes,
        best_block_count: argmin(&curve, |p| p.seconds).block_count,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::{run_algorithm, Algorithm, RunSpec};
    use crate::transport::MessageEvent;
    use crate::workloads::{generate, DistSpec, Workload};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn defaults_parse_and_validate() {
        let p = CostParams::default();
        assert_eq!(p.alpha_inter, 2e-6);
        assert_eq!(p.meta_entry_bytes, 8);
        assert!(p.validate().unwrap().is_empty());
        let swapped = CostParams {
            alpha_inter: 1e-9,
            ..p
        };
        assert_eq!(swapped.validate().unwrap().len(), 1);
        let bad = CostParams {
            beta_intra: -1.0,
            ..p
        };
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<CostParams>(r#"{"alpha": 1}"#).is_err());
    }

    #[test]
    fn empty_trace_costs_nothing() {
        let p = predict_from_trace(&Trace::default(), &CostParams::default());
        assert_eq!(p.total_seconds, 0.0);
        assert!(p.breakdown.is_empty());
    }

    #[test]
    fn single_inter_node_round() {
        let params = CostParams::default();
        let events = (0..4)
            .map(|src| MessageEvent {
                ts: src as u64,
                src,
                dst: (src + 2) % 4,
                tag: 1,
                phase: Phase::Data,
                round: 0,
                bytes: 100,
                link: LinkClass::InterNode,
            })
            .collect();
        let trace = Trace {
            processes: 4,
            ranks_per_node: 2,
            events,
            peak_outstanding: vec![1; 4],
        };
        let p = predict_from_trace(&trace, &params);
        assert_eq!(
            p.total_seconds,
            params.alpha_inter + 100.0 * params.beta_inter
        );
    }

    #[test]
    fn analytic_examples() {
        let params = CostParams::default();
        let a = analytic_tuna_cost(8, 2, 1.0, &params).unwrap();
        let expect = 6.0 * params.alpha_inter + 12.0 * 9.0 * params.beta_inter;
        assert!(close(a.total_seconds, expect, 1e-12));
        let mut sum = 0.0;
        for c in &a.breakdown {
            sum = sum + c.latency_seconds + c.bandwidth_seconds;
        }
        assert_eq!(sum, a.total_seconds);

        let p = 16;
        let linear = analytic_tuna_cost(p, p, 100.0, &params).unwrap();
        let expect = 2.0 * 15.0 * params.alpha_inter + 15.0 * 108.0 * params.beta_inter;
        assert!(close(linear.total_seconds, expect, 1e-12));

        let zero = analytic_tuna_cost(8, 2, 0.0, &params).unwrap();
        let expect = 6.0 * params.alpha_inter + 12.0 * 8.0 * params.beta_inter;
        assert!(close(zero.total_seconds, expect, 1e-12));
        assert!(analytic_tuna_cost(8, 9, 1.0, &params).is_err());
    }

    fn flat_trace(p: usize, r: usize, s: usize) -> Trace {
        let w = Workload::from_sizes(vec![vec![s; p]; p], 0).unwrap();
        let mut spec = RunSpec::new(Algorithm::Tuna, p);
        spec.ranks_per_node = 1;
        spec.radix = r;
        run_algorithm(&spec, &w).unwrap().trace
    }

    #[test]
    fn trace_prediction_matches_analytic() {
        let params = CostParams::default();
        for p in [2, 5, 8, 13, 16, 27] {
            for r in 2..=p {
                for s in [0, 1, 37] {
                    let t = predict_from_trace(&flat_trace(p, r, s), &params).total_seconds;
                    let a = analytic_tuna_cost(p, r, s as f64, &params)
                        .unwrap()
                        .total_seconds;
                    assert!(close(t, a, 1e-12), "P={p} r={r} s={s}: {t} vs {a}");
                    let rp = RadixParams::new(p, r).unwrap();
                    let c = tuna_cost_closed_form(
                        rp.round_count(),
                        rp.block_volume(),
                        s as f64,
                        &params,
                    );
                    assert!(close(c, a, 1e-12));
                }
            }
        }
    }

    #[test]
    fn radix_limits() {
        let base = CostParams::default();
        let no_alpha = CostParams {
            alpha_inter: 0.0,
            ..base
        };
        let no_beta = CostParams {
            beta_inter: 0.0,
            ..base
        };
        for p in [2, 4, 5, 8, 16, 64, 100, 256] {
            for s in [16.0, 4096.0] {
                assert_eq!(sweep_radix(p, s, &no_alpha).unwrap().best_radix, p);
                assert_eq!(sweep_radix(p, s, &no_beta).unwrap().best_radix, 2);
            }
        }
        assert!(sweep_radix(1, 1.0, &base).is_err());
    }

    #[test]
    fn radix_staircase_p1024() {
        let params = CostParams::default();
        let sizes: Vec<f64> = (4..=14).map(|e| (1u64 << e) as f64).collect();
        let best: Vec<usize> = sweep_message_size(1024, &sizes, &params)
            .unwrap()
            .iter()
            .map(|p| p.best_radix)
            .collect();
        assert!(best.windows(2).all(|w| w[0] <= w[1]), "{best:?}");
        assert!(best[0] <= 4);
        assert!(best.iter().any(|&r| (16..=64).contains(&r)), "{best:?}");
        assert_eq!(*best.last().unwrap(), 1024);
    }

    #[test]
    fn csv_is_stable() {
        let sweep = sweep_radix(4, 8.0, &CostParams::default()).unwrap();
        let csv = sweep.to_csv();
        assert!(csv.starts_with("schema,P,r,predicted_seconds,K,D\ntuna-sweep/1,4,2,"));
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(
            csv,
            sweep_radix(4, 8.0, &CostParams::default())
                .unwrap()
                .to_csv()
        );
    }

    fn scattered_sweep(s: usize, penalty: f64) -> BlockCountSweep {
        let p = 16;
        let w = Workload::from_sizes(vec![vec![s; p]; p], 0).unwrap();
        sweep_block_count(
            1..p,
            |bc| {
                let mut spec = RunSpec::new(Algorithm::Scattered, p);
                spec.block_count = bc;
                Ok(run_algorithm(&spec, &w)?.trace)
            },
            &CostParams::default(),
            penalty,
        )
        .unwrap()
    }

    #[test]
    fn block_count_limits() {
        assert_eq!(scattered_sweep(256, 0.0).best_block_count, 15);
        assert_eq!(scattered_sweep(256, 1.0).best_block_count, 1);
        let csv = scattered_sweep(4, 0.0).to_csv();
        assert!(csv.starts_with("schema,P,block_count,predicted_seconds,K,D\n"));
        assert_eq!(csv.lines().count(), 16);
    }

    #[test]
    fn block_count_shrinks_with_message_size() {
        let best: Vec<usize> = [1, 16, 256, 4096, 65536]
            .iter()
            .map(|&s| scattered_sweep(s, 1e-11).best_block_count)
            .collect();
        assert!(best.windows(2).all(|w| w[0] >= w[1]), "{best:?}");
        assert!(best[0] > *best.last().unwrap(), "{best:?}");
    }

    #[test]
    fn hierarchical_block_count_sweep() {
        let w = generate(&DistSpec::uniform(512, 3), 16).unwrap();
        let sweep = sweep_block_count(
            1..=12,
            |bc| {
                let mut spec = RunSpec::new(Algorithm::HtunaStaggered, 16);
                spec.ranks_per_node = 4;
                spec.block_count = bc;
                Ok(run_algorithm(&spec, &w)?.trace)
            },
            &CostParams::default(),
            0.0,
        )
        .unwrap();
        assert_eq!(sweep.best_block_count, 12);
    }
}
