//! Scenario taxonomy and global model parameters.
//!
//! A scenario selects one of six model variants: one or two flows, with or
//! without retransmission, with or without inter-flow coding. Coding
//! requires two flows; the remaining combinations are all valid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::ChainTopology;

/// Default service rate in packets/second: a 2 Mbps link carrying
/// 1000-byte datagrams serves 2e6 / 8000 = 250 packets per second.
pub const DEFAULT_MU: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// 1 (N1 -> Nk only) or 2 (opposite unicast flows).
    pub flows: u8,
    /// Whether a failed transmission is retried (up to `beta` attempts).
    pub retransmission: bool,
    /// Whether relays may XOR packets of the two flows.
    pub coding: bool,
    /// Maximum number of transmissions of one packet. Forced to 1 when
    /// retransmission is off.
    pub beta: u32,
    /// Probability of combining two eligible opposite-flow packets.
    #[serde(default = "default_p_mix")]
    pub p_mix: f64,
}

fn default_p_mix() -> f64 {
    0.5
}

impl Scenario {
    pub fn one_flow(retransmission: bool, beta: u32) -> Self {
        Scenario {
            flows: 1,
            retransmission,
            coding: false,
            beta,
            p_mix: 0.0,
        }
    }

    pub fn two_flows(retransmission: bool, beta: u32) -> Self {
        Scenario {
            flows: 2,
            retransmission,
            coding: false,
            beta,
            p_mix: 0.0,
        }
    }

    pub fn coding(retransmission: bool, beta: u32, p_mix: f64) -> Self {
        Scenario {
            flows: 2,
            retransmission,
            coding: true,
            beta,
            p_mix,
        }
    }

    /// The model step (1-6) this scenario corresponds to.
    pub fn step(&self) -> u8 {
        match (self.flows, self.retransmission, self.coding) {
            (1, false, false) => 1,
            (2, false, false) => 2,
            (1, true, false) => 3,
            (2, true, false) => 4,
            (2, false, true) => 5,
            (2, true, true) => 6,
            _ => 0,
        }
    }

    /// Effective attempt cap: 1 when retransmission is off.
    pub fn effective_beta(&self) -> u32 {
        if self.retransmission {
            self.beta
        } else {
            1
        }
    }

    /// Short human-readable descriptor, used in tables.
    pub fn label(&self) -> String {
        format!(
            "step{} {}f{}{}",
            self.step(),
            self.flows,
            if self.retransmission { " retx" } else { "" },
            if self.coding { " coding" } else { "" },
        )
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.flows != 1 && self.flows != 2 {
            return Err(Error::InvalidScenario(format!(
                "flows must be 1 or 2, got {}",
                self.flows
            )));
        }
        if self.coding && self.flows != 2 {
            return Err(Error::InvalidScenario("coding requires two flows".into()));
        }
        if self.beta < 1 {
            return Err(Error::Config("beta must be at least 1".into()));
        }
        if self.coding && !(0.0..=1.0).contains(&self.p_mix) {
            return Err(Error::Config(format!(
                "p_mix must lie in [0, 1], got {}",
                self.p_mix
            )));
        }
        Ok(())
    }
}

/// Global rate and timing parameters of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Maximum propagation delay, seconds.
    pub delta: f64,
    /// Queue service rate, packets/second.
    pub mu: f64,
    /// Source rate at N1, packets/second.
    pub gamma_1: f64,
    /// Source rate at Nk, packets/second (0 with one flow).
    pub gamma_k: f64,
}

impl ModelParams {
    pub fn new(delta: f64, mu: f64, gamma_1: f64, gamma_k: f64) -> Self {
        ModelParams {
            delta,
            mu,
            gamma_1,
            gamma_k,
        }
    }

    fn check(&self) -> Result<()> {
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::Config(format!(
                "propagation delay must be >= 0, got {}",
                self.delta
            )));
        }
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return Err(Error::Config(format!(
                "service rate must be > 0, got {}",
                self.mu
            )));
        }
        if !self.gamma_1.is_finite() || self.gamma_1 < 0.0 {
            return Err(Error::Config(format!(
                "gamma_1 must be >= 0, got {}",
                self.gamma_1
            )));
        }
        if !self.gamma_k.is_finite() || self.gamma_k < 0.0 {
            return Err(Error::Config(format!(
                "gamma_k must be >= 0, got {}",
                self.gamma_k
            )));
        }
        if self.gamma_1 == 0.0 && self.gamma_k == 0.0 {
            return Err(Error::Config("at least one source rate must be > 0".into()));
        }
        Ok(())
    }
}

/// A topology/scenario/parameter triple that passed structural validation.
///
/// Validation is total: every input yields either this bundle or a typed
/// error. It does not prove queue stability; that needs solved rates and is
/// checked by `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedConfig {
    pub topo: ChainTopology,
    pub scenario: Scenario,
    pub params: ModelParams,
}

/// Validates a configuration bundle before analysis or simulation.
pub fn validate(
    scenario: Scenario,
    params: ModelParams,
    topo: ChainTopology,
) -> Result<ValidatedConfig> {
    scenario.check()?;
    params.check()?;
    match scenario.flows {
        1 => {
            if params.gamma_1 <= 0.0 {
                return Err(Error::Config("one-flow scenarios need gamma_1 > 0".into()));
            }
        }
        2 => {
            if params.gamma_k <= 0.0 {
                return Err(Error::InvalidScenario(
                    "two-flow scenarios need gamma_k > 0".into(),
                ));
            }
            if params.gamma_1 <= 0.0 {
                return Err(Error::InvalidScenario(
                    "two-flow scenarios need gamma_1 > 0".into(),
                ));
            }
        }
        _ => unreachable!("checked above"),
    }
    Ok(ValidatedConfig {
        topo,
        scenario,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_chain;

    fn params(delta: f64, g1: f64, gk: f64) -> ModelParams {
        ModelParams::new(delta, DEFAULT_MU, g1, gk)
    }

    #[test]
    fn coding_scenario_with_equal_sources_is_valid() {
        let topo = build_chain(5).unwrap();
        let sc = Scenario::coding(false, 1, 0.5);
        let cfg = validate(sc, params(5e-4, 10.0, 10.0), topo).unwrap();
        assert_eq!(cfg.scenario.step(), 5);
    }

    #[test]
    fn coding_with_one_flow_rejected() {
        let topo = build_chain(5).unwrap();
        let sc = Scenario {
            flows: 1,
            retransmission: false,
            coding: true,
            beta: 1,
            p_mix: 0.5,
        };
        assert!(matches!(
            validate(sc, params(0.0, 10.0, 0.0), topo),
            Err(Error::InvalidScenario(_))
        ));
    }

    #[test]
    fn negative_delay_rejected() {
        let topo = build_chain(5).unwrap();
        let sc = Scenario::one_flow(false, 1);
        assert!(matches!(
            validate(sc, params(-1.0, 10.0, 0.0), topo),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn two_flows_without_second_source_rejected() {
        let topo = build_chain(5).unwrap();
        let sc = Scenario::two_flows(false, 1);
        assert!(matches!(
            validate(sc, params(0.0, 10.0, 0.0), topo),
            Err(Error::InvalidScenario(_))
        ));
    }

    #[test]
    fn steps_cover_all_valid_combinations() {
        let steps: Vec<u8> = [
            Scenario::one_flow(false, 1),
            Scenario::two_flows(false, 1),
            Scenario::one_flow(true, 7),
            Scenario::two_flows(true, 7),
            Scenario::coding(false, 1, 0.5),
            Scenario::coding(true, 7, 0.5),
        ]
        .iter()
        .map(Scenario::step)
        .collect();
        assert_eq!(steps, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn beta_forced_to_one_without_retransmission() {
        assert_eq!(Scenario::one_flow(false, 9).effective_beta(), 1);
        assert_eq!(Scenario::one_flow(true, 9).effective_beta(), 9);
    }
}
