//! Per-link success probabilities and the joint fixed point.
//!
//! A transmission from Ni to Nj fails if Nj itself or another neighbor of
//! Nj starts transmitting within the 2-delta vulnerable window around the
//! transmission start, so each such interferer with transmit rate lambda
//! contributes a factor (1 - 2 * delta * lambda). The link probabilities
//! depend on the node rates and the rates depend on the probabilities;
//! `solve_joint` resolves both by damped fixed-point iteration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::RateLedger;
use crate::scenario::{ModelParams, Scenario};
use crate::topology::{ChainTopology, Link, NodeId};

/// Success probability per directed chain-adjacent link.
///
/// Only links used by the active scenario are present: the forward
/// direction for one flow, both directions otherwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkProbMap {
    probs: BTreeMap<Link, f64>,
}

impl LinkProbMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// All ones over the scenario's links: the delta -> 0 limit and the
    /// solver's starting point.
    pub fn ones(topo: &ChainTopology, scenario: &Scenario) -> Self {
        let mut map = LinkProbMap::new();
        for l in scenario_links(topo, scenario) {
            map.probs.insert(l, 1.0);
        }
        map
    }

    pub fn set(&mut self, from: NodeId, to: NodeId, p: f64) {
        self.probs.insert((from, to), p);
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> Result<f64> {
        self.probs
            .get(&(from, to))
            .copied()
            .ok_or_else(|| Error::Topology(format!("no link {from}->{to} in this scenario")))
    }

    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        self.probs.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Link, f64)> + '_ {
        self.probs.iter().map(|(&l, &p)| (l, p))
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn max_abs_diff(&self, other: &LinkProbMap) -> f64 {
        self.probs
            .iter()
            .map(|(l, &p)| (p - other.probs.get(l).copied().unwrap_or(f64::NAN)).abs())
            .fold(0.0, f64::max)
    }
}

/// Directed links carrying traffic in the given scenario.
pub fn scenario_links(topo: &ChainTopology, scenario: &Scenario) -> Vec<Link> {
    let mut links: Vec<Link> = topo.forward_links().collect();
    if scenario.flows == 2 {
        links.extend(topo.backward_links());
    }
    links
}

/// Which transmit rate of an interfering node enters the collision factor.
///
/// Interior nodes occupy the channel with everything they forward; a source
/// endpoint only transmits its own outbound flow, so only that rate counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateSelector {
    /// All classes the node transmits (native both flows, plus coded).
    Total,
    /// Outbound native rate of one flow (0-based index).
    Flow(usize),
}

/// Whether coded transmissions count toward interference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceRate {
    /// A transmitting node occupies the channel regardless of packet class.
    #[default]
    Total,
    /// Count only native transmissions.
    NativeOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Damping factor in (0, 1]; 1 is undamped Picard.
    pub damping: f64,
    /// Max-norm residual threshold.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub interference: InterferenceRate,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            damping: 0.5,
            tolerance: 1e-10,
            max_iterations: 10_000,
            interference: InterferenceRate::Total,
        }
    }
}

impl SolverOptions {
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.damping) || self.damping == 0.0 {
            return Err(Error::Config(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Config("tolerance must be > 0".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Max-norm of |p - F(lambda)| at the returned point.
    pub residual: f64,
    pub converged: bool,
}

/// Nodes whose transmissions can collide with an i -> j reception: j itself
/// and j's neighbors other than i, each with the rate class it transmits.
/// Nodes that never transmit in the scenario (the far endpoint of a
/// one-flow chain) are omitted, which is what makes p equal 1 on the last
/// hop.
pub fn interferer_set(
    topo: &ChainTopology,
    i: NodeId,
    j: NodeId,
    scenario: &Scenario,
) -> Result<Vec<(NodeId, RateSelector)>> {
    if !topo.are_adjacent(i, j) {
        return Err(Error::Topology(format!(
            "nodes {i} and {j} are not chain-adjacent"
        )));
    }
    let k = topo.node_count();
    let mut set = Vec::new();
    let mut candidates = vec![j];
    candidates.extend(topo.neighbors(j));
    for x in candidates {
        if x == i {
            continue;
        }
        let selector = if x == 1 {
            Some(RateSelector::Flow(0))
        } else if x == k {
            if scenario.flows == 2 {
                Some(RateSelector::Flow(1))
            } else {
                None // Nk never transmits with a single flow.
            }
        } else {
            Some(RateSelector::Total)
        };
        if let Some(sel) = selector {
            set.push((x, sel));
        }
    }
    Ok(set)
}

fn selected_rate(
    ledger: &RateLedger,
    node: NodeId,
    selector: RateSelector,
    mode: InterferenceRate,
) -> f64 {
    let rates = ledger.node(node);
    match selector {
        RateSelector::Flow(j) => rates.native_out[j],
        RateSelector::Total => match mode {
            InterferenceRate::Total => rates.transmit_total(),
            InterferenceRate::NativeOnly => rates.transmit_native(),
        },
    }
}

/// Product of (1 - 2 * delta * lambda_x) over the interferer set; the empty
/// set yields 1.
pub fn success_probability(
    interferers: &[(NodeId, RateSelector)],
    delta: f64,
    ledger: &RateLedger,
    mode: InterferenceRate,
) -> Result<f64> {
    let mut p = 1.0;
    for &(node, selector) in interferers {
        let rate = selected_rate(ledger, node, selector, mode);
        if rate < 0.0 {
            return Err(Error::ModelDomain(format!(
                "negative transmit rate {rate} at node {node}"
            )));
        }
        let window = 2.0 * delta * rate;
        if window >= 1.0 {
            return Err(Error::ModelDomain(format!(
                "collision window saturated at node {node}: 2*delta*lambda = {window:.4}"
            )));
        }
        p *= 1.0 - window;
    }
    Ok(p)
}

/// Solves p = F(lambda) and lambda = rate_model(p) simultaneously.
///
/// Starts from p = 1 everywhere and alternates a rate evaluation with a
/// damped probability update. The rate ledger is re-evaluated at the
/// current p each iteration, so the lambda component of the residual is
/// zero by construction and the reported residual is the probability
/// mismatch alone. Non-convergence is not an error here; the diagnostics
/// carry `converged = false` and the caller decides.
pub fn solve_joint<F>(
    topo: &ChainTopology,
    scenario: &Scenario,
    params: &ModelParams,
    rate_model: F,
    opts: &SolverOptions,
) -> Result<(LinkProbMap, RateLedger, SolverDiagnostics)>
where
    F: Fn(&LinkProbMap) -> Result<RateLedger>,
{
    opts.check()?;
    let links = scenario_links(topo, scenario);
    let interferers: Vec<Vec<(NodeId, RateSelector)>> = links
        .iter()
        .map(|&(i, j)| interferer_set(topo, i, j, scenario))
        .collect::<Result<_>>()?;

    let mut p = LinkProbMap::ones(topo, scenario);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut ledger = rate_model(&p)?;

    while iterations < opts.max_iterations {
        iterations += 1;
        ledger = rate_model(&p)?;
        let mut targets = Vec::with_capacity(links.len());
        residual = 0.0;
        for (link, set) in links.iter().zip(&interferers) {
            let target = success_probability(set, params.delta, &ledger, opts.interference)?;
            residual = residual.max((p.get(link.0, link.1)? - target).abs());
            targets.push(target);
        }
        if residual <= opts.tolerance {
            let diag = SolverDiagnostics {
                iterations,
                residual,
                converged: true,
            };
            return Ok((p, ledger, diag));
        }
        for (link, target) in links.iter().zip(targets) {
            let old = p.get(link.0, link.1)?;
            p.set(
                link.0,
                link.1,
                (1.0 - opts.damping) * old + opts.damping * target,
            );
        }
    }

    let diag = SolverDiagnostics {
        iterations,
        residual,
        converged: false,
    };
    Ok((p, ledger, diag))
}
