//! Rate propagation and throughput formulas for the six model steps.
//!
//! All rates are packets/second. The ledger keys nodes by their 1-based
//! chain index. Flow 0 runs N1 -> Nk, flow 1 runs Nk -> N1 (the ledger uses
//! 0-based flow indices internally; display code maps them to flows 1/2).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{ModelParams, Scenario};
use crate::solver::LinkProbMap;
use crate::topology::{ChainTopology, NodeId};

/// Per-node entries of the rate ledger.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeRates {
    /// Total arrival rate at the node's queueing system.
    pub lambda_total: f64,
    /// Per-flow rate at the node (decoder output in coding scenarios).
    pub flow: [f64; 2],
    /// Arrival rate of native packets of each flow, over the air or from
    /// the local source.
    pub native_in: [f64; 2],
    /// Arrival rate of coded packets carrying each flow.
    pub coded_in: [f64; 2],
    /// Per-flow arrival rate into the native queue.
    pub native_queue: [f64; 2],
    /// Per-flow output rate of native packets.
    pub native_out: [f64; 2],
    /// Arrival rate into the coded queue.
    pub coded_queue: f64,
    /// Output rate of coded packets.
    pub coded_out: f64,
}

impl NodeRates {
    /// Transmit rate of this node: everything it actually puts on the air.
    pub fn transmit_total(&self) -> f64 {
        self.native_out[0] + self.native_out[1] + self.coded_out
    }

    pub fn transmit_native(&self) -> f64 {
        self.native_out[0] + self.native_out[1]
    }

    fn max_abs_diff(&self, other: &NodeRates) -> f64 {
        let mut d: f64 = (self.lambda_total - other.lambda_total).abs();
        for j in 0..2 {
            d = d.max((self.flow[j] - other.flow[j]).abs());
            d = d.max((self.native_in[j] - other.native_in[j]).abs());
            d = d.max((self.coded_in[j] - other.coded_in[j]).abs());
            d = d.max((self.native_queue[j] - other.native_queue[j]).abs());
            d = d.max((self.native_out[j] - other.native_out[j]).abs());
        }
        d.max((self.coded_queue - other.coded_queue).abs())
            .max((self.coded_out - other.coded_out).abs())
    }
}

/// Per-node, per-class arrival and departure rates for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateLedger {
    nodes: Vec<NodeRates>,
    /// Number of numerically negative intermediates clamped to zero.
    pub clamp_warnings: usize,
}

impl RateLedger {
    pub fn zeroed(k: usize) -> Self {
        RateLedger {
            nodes: vec![NodeRates::default(); k],
            clamp_warnings: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: NodeId) -> &NodeRates {
        &self.nodes[i - 1]
    }

    pub fn node_mut(&mut self, i: NodeId) -> &mut NodeRates {
        &mut self.nodes[i - 1]
    }

    /// Largest absolute difference over every ledger entry.
    pub fn max_abs_diff(&self, other: &RateLedger) -> f64 {
        self.nodes
            .iter()
            .zip(&other.nodes)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

fn positive_prob(p: &LinkProbMap, from: NodeId, to: NodeId) -> Result<f64> {
    let v = p.get(from, to)?;
    if v <= 0.0 {
        return Err(Error::ModelDomain(format!(
            "success probability on link {from}->{to} is {v}; retransmission \
             rates would diverge"
        )));
    }
    Ok(v)
}

/// Rate ledger for the no-coding scenarios (steps 1-4).
///
/// Without retransmission each flow decays hop by hop with the link success
/// probabilities. With retransmission the self-referential balance
/// `lambda = in + lambda * (1 - p_next)` is solved in closed form per node,
/// so the forwarded rate over every traversed link telescopes back to the
/// source rate.
pub fn rates_no_coding(
    topo: &ChainTopology,
    scenario: &Scenario,
    p: &LinkProbMap,
    params: &ModelParams,
) -> Result<RateLedger> {
    assert!(!scenario.coding, "coding scenarios use rates_coding");
    let k = topo.node_count();
    let mut ledger = RateLedger::zeroed(k);
    let retx = scenario.retransmission;

    // Flow 0: N1 -> Nk.
    let mut inbound = params.gamma_1;
    for i in 1..=k {
        let flow = if i < k && retx {
            inbound / positive_prob(p, i, i + 1)?
        } else {
            inbound
        };
        let node = ledger.node_mut(i);
        node.native_in[0] = inbound;
        node.flow[0] = flow;
        node.native_queue[0] = flow;
        node.native_out[0] = if i < k { flow } else { 0.0 };
        if i < k {
            inbound = ledger.node(i).native_out[0] * p.get(i, i + 1)?;
        }
    }

    // Flow 1: Nk -> N1.
    if scenario.flows == 2 {
        let mut inbound = params.gamma_k;
        for i in (1..=k).rev() {
            let flow = if i > 1 && retx {
                inbound / positive_prob(p, i, i - 1)?
            } else {
                inbound
            };
            let node = ledger.node_mut(i);
            node.native_in[1] = inbound;
            node.flow[1] = flow;
            node.native_queue[1] = flow;
            node.native_out[1] = if i > 1 { flow } else { 0.0 };
            if i > 1 {
                inbound = ledger.node(i).native_out[1] * p.get(i, i - 1)?;
            }
        }
    }

    for i in 1..=k {
        let node = ledger.node_mut(i);
        node.lambda_total = node.flow[0] + node.flow[1];
    }
    Ok(ledger)
}

fn clamp_rate(value: f64, tolerance: f64, warnings: &mut usize, what: &str) -> Result<f64> {
    if value >= 0.0 {
        return Ok(value);
    }
    if value > -tolerance {
        *warnings += 1;
        return Ok(0.0);
    }
    Err(Error::ModelDomain(format!(
        "negative rate {value:.6e} for {what}"
    )))
}

/// Rate ledger for the coding scenarios (steps 5-6), solved by sweep
/// iteration over the coupled per-node decoder/encoder equations.
///
/// Decoder: the flow rate entering a node's encoder is the native arrivals
/// plus the decodable share of coded arrivals; with retransmission the
/// node's own failed transmissions feed back and the balance is solved in
/// closed form per node. Encoder: a fraction `p_mix` of the smaller flow is
/// combined, the rest stays native. The chain's endpoints never encode, and
/// a delivered flow leaves the network there.
pub fn rates_coding(
    topo: &ChainTopology,
    scenario: &Scenario,
    p: &LinkProbMap,
    params: &ModelParams,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<RateLedger> {
    assert!(scenario.coding, "non-coding scenarios use rates_no_coding");
    let k = topo.node_count();
    let retx = scenario.retransmission;
    let beta = i32::try_from(scenario.effective_beta()).unwrap_or(i32::MAX);
    let p_mix = scenario.p_mix;

    let mut ledger = RateLedger::zeroed(k);
    let mut warnings = 0usize;

    for sweep in 0..max_sweeps {
        let mut delta_max: f64 = 0.0;
        for i in 1..=k {
            let native_in = [
                if i == 1 {
                    params.gamma_1
                } else {
                    ledger.node(i - 1).native_out[0] * p.get(i - 1, i)?
                },
                if i == k {
                    params.gamma_k
                } else {
                    ledger.node(i + 1).native_out[1] * p.get(i + 1, i)?
                },
            ];
            let coded_in = [
                if i <= 2 {
                    0.0
                } else {
                    ledger.node(i - 1).coded_out * p.get(i - 1, i)?
                },
                if i >= k - 1 {
                    0.0
                } else {
                    ledger.node(i + 1).coded_out * p.get(i + 1, i)?
                },
            ];

            // Decoder output per flow. The decode-survival factor uses the
            // link the decode partner travelled; at a flow's destination the
            // node originated every partner itself, so the factor is 1 and
            // nothing is retransmitted onward.
            let flow0 = if i < k {
                let decode = if retx {
                    1.0 - (1.0 - p.get(i + 1, i)?).powi(beta)
                } else {
                    p.get(i + 1, i)?
                };
                let gross = native_in[0] + coded_in[0] * decode;
                if retx {
                    gross / positive_prob(p, i, i + 1)?
                } else {
                    gross
                }
            } else {
                native_in[0] + coded_in[0]
            };
            let flow1 = if i > 1 {
                let decode = if retx {
                    1.0 - (1.0 - p.get(i - 1, i)?).powi(beta)
                } else {
                    p.get(i - 1, i)?
                };
                let gross = native_in[1] + coded_in[1] * decode;
                if retx {
                    gross / positive_prob(p, i, i - 1)?
                } else {
                    gross
                }
            } else {
                native_in[1] + coded_in[1]
            };

            // Encoder split. Endpoints never code: the delivered flow exits
            // the network, so there is no opposite-flow stream to mix with.
            let coded = if i > 1 && i < k {
                flow0.min(flow1) * p_mix
            } else {
                0.0
            };
            let mut native = [
                clamp_rate(flow0 - coded, tolerance, &mut warnings, "native queue")?,
                clamp_rate(flow1 - coded, tolerance, &mut warnings, "native queue")?,
            ];
            if i == 1 {
                native[1] = 0.0;
            }
            if i == k {
                native[0] = 0.0;
            }

            let prev = *ledger.node(i);
            let node = ledger.node_mut(i);
            node.native_in = native_in;
            node.coded_in = coded_in;
            node.flow = [flow0, flow1];
            node.native_queue = native;
            node.native_out = native;
            node.coded_queue = coded;
            node.coded_out = coded;
            node.lambda_total = native[0] + native[1] + coded;

            delta_max = delta_max
                .max((node.native_out[0] - prev.native_out[0]).abs())
                .max((node.native_out[1] - prev.native_out[1]).abs())
                .max((node.coded_out - prev.coded_out).abs())
                .max((node.flow[0] - prev.flow[0]).abs())
                .max((node.flow[1] - prev.flow[1]).abs());
        }
        if delta_max <= tolerance && sweep > 0 {
            ledger.clamp_warnings = warnings;
            return Ok(ledger);
        }
    }
    Err(Error::ModelDomain(format!(
        "coding rate sweep did not settle within {max_sweeps} passes"
    )))
}

/// Rate ledger for any scenario, dispatching on the coding flag.
pub fn rates_for_scenario(
    topo: &ChainTopology,
    scenario: &Scenario,
    p: &LinkProbMap,
    params: &ModelParams,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<RateLedger> {
    if scenario.coding {
        rates_coding(topo, scenario, p, params, tolerance, max_sweeps)
    } else {
        rates_no_coding(topo, scenario, p, params)
    }
}

/// Total throughput: the arrival rate at each flow's destination.
pub fn throughput(ledger: &RateLedger, scenario: &Scenario) -> f64 {
    let k = ledger.node_count();
    if scenario.flows == 1 {
        ledger.node(k).flow[0]
    } else {
        ledger.node(1).flow[1] + ledger.node(k).flow[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::DEFAULT_MU;
    use crate::topology::build_chain;

    fn forward_probs(values: &[f64]) -> LinkProbMap {
        let mut p = LinkProbMap::new();
        for (i, &v) in values.iter().enumerate() {
            p.set(i + 1, i + 2, v);
        }
        p
    }

    fn all_probs(k: usize, v: f64) -> LinkProbMap {
        let mut p = LinkProbMap::new();
        for i in 1..k {
            p.set(i, i + 1, v);
            p.set(i + 1, i, v);
        }
        p
    }

    #[test]
    fn one_flow_no_retx_decays_per_link() {
        let topo = build_chain(5).unwrap();
        let sc = Scenario::one_flow(false, 1);
        let params = ModelParams::new(0.0, DEFAULT_MU, 10.0, 0.0);
        let p = forward_probs(&[0.9, 0.8, 1.0, 1.0]);
        let ledger = rates_no_coding(&topo, &sc, &p, &params).unwrap();
        let lambdas: Vec<f64> = (1..=5).map(|i| ledger.node(i).flow[0]).collect();
        assert_eq!(lambdas, vec![10.0, 9.0, 7.2, 7.2, 7.2]);
        assert_eq!(throughput(&ledger, &sc), 7.2);
    }

    #[test]
    fn one_flow_retx_inflates_queues_and_telescopes() {
        let topo = build_chain(5).unwrap();
        let sc = Scenario::one_flow(true, 7);
        let params = ModelParams::new(0.0, DEFAULT_MU, 10.0, 0.0);
        let p = forward_probs(&[0.8, 0.8, 0.8, 0.8]);
        let ledger = rates_no_coding(&topo, &sc, &p, &params).unwrap();
        for i in 1..=4 {
            assert!((ledger.node(i).flow[0] - 12.5).abs() < 1e-12, "node {i}");
        }
        assert!((ledger.node(5).flow[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn retx_with_dead_link_is_a_domain_error() {
        let topo = build_chain(5).unwrap();
        let sc = Scenario::one_flow(true, 7);
        let params = ModelParams::new(0.0, DEFAULT_MU, 10.0, 0.0);
        let p = forward_probs(&[0.8, 0.0, 0.8, 0.8]);
        assert!(matches!(
            rates_no_coding(&topo, &sc, &p, &params),
            Err(Error::ModelDomain(_))
        ));
    }

    #[test]
    fn encoder_split_follows_min_rule() {
        // With perfect links and asymmetric sources the interior encoder
        // rates reduce to min(flow0, flow1) * p_mix.
        let topo = build_chain(5).unwrap();
        let sc = Scenario::coding(false, 1, 0.5);
        let params = ModelParams::new(0.0, DEFAULT_MU, 4.0, 10.0);
        let p = all_probs(5, 1.0);
        let ledger = rates_coding(&topo, &sc, &p, &params, 1e-12, 10_000).unwrap();
        for i in 2..=4 {
            let n = ledger.node(i);
            assert!((n.flow[0] - 4.0).abs() < 1e-9);
            assert!((n.flow[1] - 10.0).abs() < 1e-9);
            assert!((n.coded_queue - 2.0).abs() < 1e-9, "node {i}");
            assert!((n.native_queue[0] - 2.0).abs() < 1e-9);
            assert!((n.native_queue[1] - 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn p_mix_zero_matches_plain_two_flow_ledger() {
        let topo = build_chain(5).unwrap();
        let params = ModelParams::new(0.0, DEFAULT_MU, 10.0, 10.0);
        let p = all_probs(5, 0.93);
        for retx in [false, true] {
            let coded = rates_coding(
                &topo,
                &Scenario::coding(retx, 7, 0.0),
                &p,
                &params,
                1e-12,
                10_000,
            )
            .unwrap();
            let plain = rates_no_coding(&topo, &Scenario::two_flows(retx, 7), &p, &params).unwrap();
            for i in 1..=5 {
                assert!(
                    (coded.node(i).flow[0] - plain.node(i).flow[0]).abs() < 1e-9,
                    "retx={retx} node {i}"
                );
                assert!((coded.node(i).flow[1] - plain.node(i).flow[1]).abs() < 1e-9);
                assert!(coded.node(i).coded_queue.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coding_boundary_rates_match_source_identities() {
        let topo = build_chain(5).unwrap();
        let sc = Scenario::coding(false, 1, 0.5);
        let params = ModelParams::new(0.0, DEFAULT_MU, 12.0, 9.0);
        let p = all_probs(5, 0.95);
        let ledger = rates_coding(&topo, &sc, &p, &params, 1e-12, 10_000).unwrap();
        // Sources emit exactly their input rate without retransmission.
        assert!((ledger.node(1).native_out[0] - 12.0).abs() < 1e-9);
        assert!((ledger.node(5).native_out[1] - 9.0).abs() < 1e-9);
        // Delivered flows and coded packets never leave the endpoints.
        assert_eq!(ledger.node(1).native_out[1], 0.0);
        assert_eq!(ledger.node(5).native_out[0], 0.0);
        assert_eq!(ledger.node(1).coded_out, 0.0);
        assert_eq!(ledger.node(5).coded_out, 0.0);
        // Coded input is structurally zero near each flow's source.
        assert_eq!(ledger.node(1).coded_in[0], 0.0);
        assert_eq!(ledger.node(2).coded_in[0], 0.0);
        assert_eq!(ledger.node(4).coded_in[1], 0.0);
        assert_eq!(ledger.node(5).coded_in[1], 0.0);
    }

    #[test]
    fn class_conservation_at_interior_nodes() {
        let topo = build_chain(6).unwrap();
        let sc = Scenario::coding(true, 7, 0.7);
        let params = ModelParams::new(0.0, DEFAULT_MU, 8.0, 14.0);
        let p = all_probs(6, 0.9);
        let ledger = rates_coding(&topo, &sc, &p, &params, 1e-12, 10_000).unwrap();
        for i in 2..=5 {
            let n = ledger.node(i);
            let lhs = n.native_queue[0] + n.native_queue[1] + 2.0 * n.coded_queue;
            let rhs = n.flow[0] + n.flow[1];
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs(), "node {i}");
        }
    }

    #[test]
    fn throughput_adds_both_destinations() {
        let topo = build_chain(5).unwrap();
        let sc = Scenario::two_flows(false, 1);
        let params = ModelParams::new(0.0, DEFAULT_MU, 3.0, 4.0);
        let mut ledger = rates_no_coding(&topo, &sc, &all_probs(5, 1.0), &params).unwrap();
        ledger.node_mut(1).flow[1] = 3.0;
        ledger.node_mut(5).flow[0] = 4.0;
        assert_eq!(throughput(&ledger, &sc), 7.0);
    }
}
