//! Randomized invariant checks across the core modules.

use proptest::prelude::*;

use coalkit_core::dist::cpois_pmf_into;
use coalkit_core::{
    explore_block, merge_rate, restriction_factor, simulate, CompoundPoissonSpec,
    LengthDistribution, Partition, PmfVector, SimOptions, StopRule, TupleEvent,
};

/// A finite-support length law with random masses on {1..8} and guaranteed
/// mass above 1.
fn length_table() -> impl Strategy<Value = LengthDistribution> {
    proptest::collection::vec(0.01f64..1.0, 8).prop_map(|mut w| {
        // Keep p(1) well below 1 by boosting one higher slot.
        w[3] += 1.0;
        let total: f64 = w.iter().sum();
        let pairs: Vec<(usize, f64)> = w
            .iter()
            .enumerate()
            .map(|(i, &x)| (i + 1, x / total))
            .collect();
        LengthDistribution::from_table(&pairs).unwrap()
    })
}

/// A jump law on {0..5} with mass off {0,1}.
fn jump_law() -> impl Strategy<Value = PmfVector> {
    proptest::collection::vec(0.01f64..1.0, 6).prop_map(|mut w| {
        w[2] += 0.5;
        let total: f64 = w.iter().sum();
        PmfVector::new(w.iter().map(|&x| x / total).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tilt_composes(p in length_table(), a in 0.2f64..0.95, b in 0.2f64..0.95) {
        let lhs = p.tilt(a).unwrap().tilt(b).unwrap();
        let rhs = p.tilt(a * b).unwrap();
        for k in 0..=8 {
            prop_assert!((lhs.p(k) - rhs.p(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn size_biased_mean_matches_moment_ratio(p in length_table()) {
        let mean = p.size_biased().unwrap().mean();
        prop_assert!((mean - p.factorial_moment(2) / p.m_star()).abs() < 1e-12);
    }

    #[test]
    fn pgf_is_monotone_and_normalized(p in length_table(), s in 0.0f64..1.0) {
        let g1 = p.pgf(1.0).unwrap();
        prop_assert!((g1 - (1.0 - p.truncation_defect())).abs() < 1e-12);
        let gs = p.pgf(s).unwrap();
        prop_assert!(gs >= 0.0 && gs <= g1 + 1e-12);
    }

    #[test]
    fn cpois_mass_accounting(rate in 0.1f64..3.0, nu in jump_law()) {
        let pmf = cpois_pmf_into(rate, &nu, 400);
        prop_assert!((pmf.sum() + pmf.defect() - 1.0).abs() < 1e-9);
        prop_assert!(pmf.defect() < 1e-8);
    }

    #[test]
    fn cpois_tilt_identity(rate in 0.1f64..2.0, nu in jump_law(), a in 0.3f64..0.95) {
        let spec = CompoundPoissonSpec::new(rate, nu).unwrap();
        let tilted = spec.tilted(a).unwrap();
        let base = spec.pmf(60);
        let hat = tilted.pmf(60);
        let g = spec.jump().pgf(a).unwrap();
        let scale = (rate * (1.0 - g)).exp();
        for k in 0..=40usize {
            let expected = a.powi(k as i32) * scale * base.get(k);
            prop_assert!((hat.get(k) - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn partition_merge_invariants(
        n in 2usize..40,
        tuples in proptest::collection::vec(proptest::collection::vec(0u32..40, 2..5), 0..20),
    ) {
        let mut part = Partition::singletons(n).unwrap();
        let singles = Partition::singletons(n).unwrap();
        for t in &tuples {
            let tuple: Vec<u32> = t.iter().map(|&x| 1 + x % n as u32).collect();
            part.merge_tuple(&tuple);
        }
        let sizes = part.block_sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert_eq!(sizes.len(), part.block_count());
        prop_assert!(part.largest() >= part.second_largest());
        prop_assert!(part.largest() >= 1);
        prop_assert!(part.finer_than(&part));
        prop_assert!(singles.finer_than(&part));
    }

    #[test]
    fn merge_rate_is_symmetric_and_nonnegative(
        p in length_table(),
        sizes in proptest::collection::vec(1usize..6, 2..5),
    ) {
        let n: usize = sizes.iter().sum::<usize>() + 5;
        let fwd = merge_rate(&sizes, n, &p).unwrap();
        let mut rev = sizes.clone();
        rev.reverse();
        let bwd = merge_rate(&rev, n, &p).unwrap();
        prop_assert!(fwd >= -1e-15);
        prop_assert!((fwd - bwd).abs() < 1e-12);
    }

    #[test]
    fn restriction_factor_bounds(
        t in 0.0f64..3.0,
        m in 1usize..30,
        k in 1usize..30,
    ) {
        let p = LengthDistribution::dirac(2).unwrap();
        let n = 30;
        let h = restriction_factor(&p, t, n, m, k).unwrap();
        prop_assert!(h >= 0.0);
        if k > m {
            prop_assert_eq!(h, 0.0);
        }
        if m == n {
            prop_assert!((h - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exploration_trace_is_consistent(
        n in 3usize..25,
        raw in proptest::collection::vec(proptest::collection::vec(0u32..25, 2..5), 0..15),
        x in 1usize..25,
    ) {
        let x = 1 + (x - 1) % n;
        let events: Vec<TupleEvent> = raw
            .iter()
            .enumerate()
            .map(|(i, t)| TupleEvent {
                time: i as f64,
                tuple: t.iter().map(|&v| 1 + v % n as u32).collect(),
            })
            .filter(|ev| ev.is_nontrivial())
            .collect();
        let trace = explore_block(x, n, &events).unwrap();
        // The walk visits each vertex of the block exactly once, starting at x.
        prop_assert_eq!(trace.explored[0] as usize, x);
        let mut seen = trace.explored.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), trace.explored.len());
        prop_assert!(trace.block().contains(&(x as u32)));
        // Set-based counts never exceed the multiplicity-based counts.
        let xi_total: usize = trace.xi.iter().sum();
        let zeta_total: usize = trace.zeta1.iter().sum();
        prop_assert!(xi_total <= zeta_total.max(trace.block_size() - 1 + zeta_total));
        prop_assert!(trace.block_size() <= n);
    }

    #[test]
    fn simulation_is_seed_deterministic(seed in 0u64..1000, n in 2usize..30) {
        let p = LengthDistribution::dirac(2).unwrap();
        let opts = SimOptions {
            record_events: true,
            record_series: true,
            ..Default::default()
        };
        let a = simulate(n, &p, StopRule::Horizon(2.0), seed, &opts).unwrap();
        let b = simulate(n, &p, StopRule::Horizon(2.0), seed, &opts).unwrap();
        prop_assert_eq!(a.log.events.len(), b.log.events.len());
        for (ea, eb) in a.log.events.iter().zip(&b.log.events) {
            prop_assert_eq!(ea.time.to_bits(), eb.time.to_bits());
            prop_assert_eq!(&ea.tuple, &eb.tuple);
        }
        prop_assert_eq!(a.partition.block_sizes(), b.partition.block_sizes());
    }
}
