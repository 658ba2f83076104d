//! Randomized invariants over the rate algebra and the collision factors.

use proptest::prelude::*;

use chainlab::rates::{rates_coding, rates_no_coding};
use chainlab::solver::RateSelector;
use chainlab::*;

fn link_map(k: usize, probs: &[f64]) -> LinkProbMap {
    let mut map = LinkProbMap::new();
    let mut it = probs.iter().copied().cycle();
    for i in 1..k {
        map.set(i, i + 1, it.next().unwrap());
        map.set(i + 1, i, it.next().unwrap());
    }
    map
}

proptest! {
    #[test]
    fn success_probability_stays_in_unit_interval(
        rates in proptest::collection::vec(0.0f64..180.0, 1..4),
        delta in 0.0f64..2e-3,
    ) {
        let mut ledger = RateLedger::zeroed(5);
        let mut set = Vec::new();
        for (i, r) in rates.iter().enumerate() {
            ledger.node_mut(i + 2).native_out = [*r, 0.0];
            set.push((i + 2, RateSelector::Total));
        }
        let p = success_probability(&set, delta, &ledger, InterferenceRate::Total).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);

        // Monotone non-increasing in delta for fixed rates.
        let p2 = success_probability(&set, delta * 0.5, &ledger, InterferenceRate::Total).unwrap();
        prop_assert!(p2 >= p - 1e-15);
    }

    #[test]
    fn coding_ledger_conserves_classes_and_boundaries(
        g1 in 1.0f64..40.0,
        gk in 1.0f64..40.0,
        p_mix in 0.0f64..=1.0,
        retx in proptest::bool::ANY,
        probs in proptest::collection::vec(0.55f64..=1.0, 8),
    ) {
        let topo = build_chain(5).unwrap();
        let sc = Scenario::coding(retx, 7, p_mix);
        let params = ModelParams::new(0.0, DEFAULT_MU, g1, gk);
        let p = link_map(5, &probs);
        let ledger = rates_coding(&topo, &sc, &p, &params, 1e-12, 50_000).unwrap();

        for i in 2..=4 {
            let n = ledger.node(i);
            let lhs = n.native_queue[0] + n.native_queue[1] + 2.0 * n.coded_queue;
            let rhs = n.flow[0] + n.flow[1];
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
            prop_assert!(n.coded_queue >= -1e-12);
            prop_assert!(n.native_queue[0] >= -1e-12 && n.native_queue[1] >= -1e-12);
        }
        // Boundary zeros hold for any parameters.
        prop_assert_eq!(ledger.node(1).native_out[1], 0.0);
        prop_assert_eq!(ledger.node(5).native_out[0], 0.0);
        prop_assert_eq!(ledger.node(1).coded_out, 0.0);
        prop_assert_eq!(ledger.node(5).coded_out, 0.0);
        prop_assert_eq!(ledger.node(2).coded_in[0], 0.0);
        prop_assert_eq!(ledger.node(4).coded_in[1], 0.0);
    }

    #[test]
    fn retransmission_ledger_telescopes_flow_conservation(
        gamma in 1.0f64..60.0,
        probs in proptest::collection::vec(0.3f64..=1.0, 4),
    ) {
        // Over every traversed link the successfully forwarded rate equals
        // the source rate: lambda_i * p_(i,i+1) = gamma.
        let topo = build_chain(5).unwrap();
        let sc = Scenario::one_flow(true, 7);
        let params = ModelParams::new(0.0, DEFAULT_MU, gamma, 0.0);
        let mut p = LinkProbMap::new();
        for (i, v) in probs.iter().enumerate() {
            p.set(i + 1, i + 2, *v);
        }
        let ledger = rates_no_coding(&topo, &sc, &p, &params).unwrap();
        for i in 1..=4 {
            let forwarded = ledger.node(i).flow[0] * p.get(i, i + 1).unwrap();
            prop_assert!(
                (forwarded - gamma).abs() <= 1e-9 * gamma,
                "link {}->{}: forwarded {} vs gamma {}", i, i + 1, forwarded, gamma
            );
        }
        prop_assert!((ledger.node(5).flow[0] - gamma).abs() <= 1e-9 * gamma);
    }

    #[test]
    fn one_flow_ledger_never_gains_rate(
        gamma in 1.0f64..60.0,
        probs in proptest::collection::vec(0.05f64..=1.0, 4),
    ) {
        let topo = build_chain(5).unwrap();
        let sc = Scenario::one_flow(false, 1);
        let params = ModelParams::new(0.0, DEFAULT_MU, gamma, 0.0);
        let mut p = LinkProbMap::new();
        for (i, v) in probs.iter().enumerate() {
            p.set(i + 1, i + 2, *v);
        }
        let ledger = rates_no_coding(&topo, &sc, &p, &params).unwrap();
        let mut prev = gamma;
        for i in 1..=5 {
            let lambda = ledger.node(i).flow[0];
            prop_assert!(lambda <= prev + 1e-12);
            prop_assert!(lambda >= 0.0);
            prev = lambda;
        }
    }
}
