use proptest::prelude::*;
use tuna_core::radix::RadixParams;
use tuna_core::transport::{LinkClass, Phase};
use tuna_core::{oracle_direct, run_algorithm, Algorithm, RunSpec, Workload};

fn sizes(p: usize, max: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0..=max, p), p)
}

fn data_sends(trace: &tuna_core::Trace, link: LinkClass) -> Vec<usize> {
    let mut n = vec![0; trace.processes];
    for e in trace.events.iter().filter(|e| e.phase == Phase::Data && e.link == link) {
        n[e.src] += 1;
    }
    n
}

fn tuna_case() -> impl Strategy<Value = (usize, usize, Vec<Vec<usize>>, u64)> {
    (1usize..=40)
        .prop_flat_map(|p| (Just(p), 2..=p.max(2), sizes(p, 24), any::<u64>()))
}

fn hier_case() -> impl Strategy<Value = (Algorithm, usize, usize, usize, usize, Vec<Vec<usize>>, u64)>
{
    (1usize..=36)
        .prop_flat_map(|p| {
            let qs: Vec<usize> = (1..=p).filter(|q| p % q == 0).collect();
            (Just(p), prop::sample::select(qs))
        })
        .prop_flat_map(|(p, q)| {
            let algo = prop::sample::select(vec![Algorithm::HtunaCoalesced, Algorithm::HtunaStaggered]);
            (Just(p), Just(q), algo)
        })
        .prop_flat_map(|(p, q, algo)| {
            let top = algo.max_block_count(p, q).max(1);
            (
                Just(algo),
                Just(p),
                Just(q),
                2..=q.max(2),
                1..=top,
                sizes(p, 16),
                any::<u64>(),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn tuna_matches_oracle((p, r, m, seed) in tuna_case()) {
        let w = Workload::from_sizes(m, seed).unwrap();
        let spec = RunSpec { radix: r, ..RunSpec::new(Algorithm::Tuna, p) };
        let out = run_algorithm(&spec, &w).unwrap();
        prop_assert_eq!(&out.gathered, &oracle_direct(&w));
        let params = RadixParams::new(p, r).unwrap();
        let k = params.round_count();
        prop_assert!(data_sends(&out.trace, LinkClass::IntraNode).iter().all(|&n| n == k));
        for t in &out.temp {
            prop_assert_eq!(t.capacity_blocks, params.temp_capacity());
            prop_assert!(t.peak_blocks <= t.capacity_blocks);
        }
    }

    #[test]
    fn hierarchical_matches_oracle((algo, p, q, r, bc, m, seed) in hier_case()) {
        let w = Workload::from_sizes(m, seed).unwrap();
        let spec = RunSpec {
            ranks_per_node: q,
            radix: r,
            block_count: bc,
            ..RunSpec::new(algo, p)
        };
        let out = run_algorithm(&spec, &w).unwrap();
        prop_assert_eq!(&out.gathered, &oracle_direct(&w));
        let n = p / q;
        let inter = match algo {
            Algorithm::HtunaCoalesced => n - 1,
            _ => (n - 1) * q,
        };
        prop_assert!(data_sends(&out.trace, LinkClass::InterNode).iter().all(|&c| c == inter));
        prop_assert!(out
            .trace
            .events
            .iter()
            .filter(|e| e.link == LinkClass::InterNode)
            .all(|e| e.src % q == e.dst % q));
        prop_assert!(out.temp.iter().all(|t| t.peak_blocks <= t.capacity_blocks));
    }

    #[test]
    fn linear_baselines_match_oracle(
        (p, bc, m, seed) in (1usize..=40).prop_flat_map(|p| {
            (Just(p), 1..=p.saturating_sub(1).max(1), sizes(p, 24), any::<u64>())
        })
    ) {
        let w = Workload::from_sizes(m, seed).unwrap();
        let expect = oracle_direct(&w);
        for algo in [Algorithm::SpreadOut, Algorithm::Pairwise, Algorithm::Linear, Algorithm::Scattered] {
            let spec = RunSpec { block_count: bc, ..RunSpec::new(algo, p) };
            let out = run_algorithm(&spec, &w).unwrap();
            prop_assert_eq!(&out.gathered, &expect, "{}", algo);
            if algo == Algorithm::Scattered {
                prop_assert!(out.trace.metrics().max_outstanding <= 2 * bc);
            }
        }
        if p.is_power_of_two() {
            let out = run_algorithm(&RunSpec::new(Algorithm::PairwiseXor, p), &w).unwrap();
            prop_assert_eq!(&out.gathered, &expect);
        }
    }

    #[test]
    fn scheduler_seed_changes_order_not_results(
        (p, m, seed, sched) in (2usize..=24).prop_flat_map(|p| (Just(p), sizes(p, 12), any::<u64>(), 1u64..))
    ) {
        let w = Workload::from_sizes(m, seed).unwrap();
        for algo in [Algorithm::Tuna, Algorithm::SpreadOut, Algorithm::Scattered] {
            let base = RunSpec { radix: 3.min(p), block_count: 1, ..RunSpec::new(algo, p) };
            let a = run_algorithm(&base, &w).unwrap();
            let b = run_algorithm(&RunSpec { scheduler_seed: sched, ..base }, &w).unwrap();
            prop_assert_eq!(&a.gathered, &b.gathered);
            prop_assert_eq!(a.trace.metrics().messages, b.trace.metrics().messages);
            prop_assert_eq!(a.trace.metrics().bytes, b.trace.metrics().bytes);
        }
    }
}

#[test]
fn tuna_twenty_workloads_per_radix() {
    for p in [2usize, 3, 5, 7, 8, 12, 16, 17] {
        for r in 2..=p {
            for seed in 0..20u64 {
                let m: Vec<Vec<usize>> = (0..p)
                    .map(|s| (0..p).map(|d| (s * 7 + d * 13 + seed as usize * 5) % 19).collect())
                    .collect();
                let w = Workload::from_sizes(m, seed).unwrap();
                let spec = RunSpec { radix: r, ..RunSpec::new(Algorithm::Tuna, p) };
                let out = run_algorithm(&spec, &w).unwrap();
                assert_eq!(out.gathered, oracle_direct(&w), "P={p} r={r} seed={seed}");
            }
        }
    }
}
