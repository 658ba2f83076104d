//! End-to-end analytic run: joint solve, throughput, stability check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{rates_for_scenario, throughput, RateLedger};
use crate::scenario::ValidatedConfig;
use crate::solver::{solve_joint, LinkProbMap, SolverDiagnostics, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    /// Total throughput, packets/second.
    pub theta: f64,
    /// Queue utilization rho_i = lambda_i / mu, indexed by node - 1.
    pub utilization: Vec<f64>,
    /// Converged per-link success probabilities.
    pub link_probs: LinkProbMap,
    pub diagnostics: SolverDiagnostics,
    /// The converged rate ledger behind `theta`.
    pub ledger: RateLedger,
}

impl ThroughputReport {
    pub fn max_utilization(&self) -> f64 {
        self.utilization.iter().copied().fold(0.0, f64::max)
    }
}

/// Runs the scenario's rate model jointly with the collision solver,
/// computes throughput, and verifies every queue is stable.
pub fn analyze(cfg: &ValidatedConfig, opts: &SolverOptions) -> Result<ThroughputReport> {
    opts.check()?;
    // The inner rate sweep settles two orders tighter than the outer loop
    // so the reported residual is dominated by the probability mismatch.
    let inner_tol = opts.tolerance * 1e-2;
    let (link_probs, ledger, diagnostics) = solve_joint(
        &cfg.topo,
        &cfg.scenario,
        &cfg.params,
        |p| {
            rates_for_scenario(
                &cfg.topo,
                &cfg.scenario,
                p,
                &cfg.params,
                inner_tol,
                opts.max_iterations,
            )
        },
        opts,
    )?;
    if !diagnostics.converged {
        return Err(Error::NonConvergence {
            residual: diagnostics.residual,
            iterations: diagnostics.iterations,
            diagnostics,
        });
    }

    let utilization: Vec<f64> = (1..=cfg.topo.node_count())
        .map(|i| ledger.node(i).lambda_total / cfg.params.mu)
        .collect();
    if let Some((idx, &rho)) = utilization.iter().enumerate().find(|&(_, &rho)| rho >= 1.0) {
        return Err(Error::Unstable { node: idx + 1, rho });
    }

    let theta = throughput(&ledger, &cfg.scenario);
    Ok(ThroughputReport {
        theta,
        utilization,
        link_probs,
        diagnostics,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{validate, ModelParams, Scenario, DEFAULT_MU};
    use crate::topology::build_chain;

    fn config(scenario: Scenario, delta: f64, g1: f64, gk: f64) -> ValidatedConfig {
        let topo = build_chain(5).unwrap();
        validate(scenario, ModelParams::new(delta, DEFAULT_MU, g1, gk), topo).unwrap()
    }

    #[test]
    fn lossless_chain_delivers_everything() {
        let cfg = config(Scenario::one_flow(false, 1), 0.0, 10.0, 0.0);
        let report = analyze(&cfg, &SolverOptions::default()).unwrap();
        assert_eq!(report.theta, 10.0);
        for rho in &report.utilization {
            assert!((rho - 0.04).abs() < 1e-15);
        }
    }

    #[test]
    fn retransmission_restores_the_source_rate() {
        for (delta, gamma) in [(1e-4, 10.0), (5e-4, 25.0), (9e-4, 14.286)] {
            let cfg = config(Scenario::one_flow(true, 7), delta, gamma, 0.0);
            let report = analyze(&cfg, &SolverOptions::default()).unwrap();
            assert!(
                (report.theta - gamma).abs() <= 1e-9 * gamma,
                "delta={delta} gamma={gamma}: theta={}",
                report.theta
            );
        }
    }

    #[test]
    fn overload_reports_the_offending_node() {
        let cfg = config(Scenario::one_flow(false, 1), 0.0, 300.0, 0.0);
        match analyze(&cfg, &SolverOptions::default()) {
            Err(Error::Unstable { node, rho }) => {
                assert_eq!(node, 1);
                assert!(rho > 1.0);
            }
            other => panic!("expected stability error, got {other:?}"),
        }
    }

    #[test]
    fn throughput_never_exceeds_offered_load() {
        for sc in [
            Scenario::one_flow(false, 1),
            Scenario::two_flows(false, 1),
            Scenario::coding(false, 1, 0.5),
            Scenario::coding(true, 7, 0.5),
        ] {
            let gk = if sc.flows == 2 { 10.0 } else { 0.0 };
            for delta in [0.0, 1e-4, 1e-3] {
                let cfg = config(sc, delta, 10.0, gk);
                let report = analyze(&cfg, &SolverOptions::default()).unwrap();
                let offered = 10.0 + gk;
                assert!(
                    report.theta <= offered + 1e-9,
                    "{} delta={delta}",
                    sc.label()
                );
                if delta == 0.0 {
                    assert!((report.theta - offered).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn throughput_monotone_in_delta() {
        for sc in [
            Scenario::one_flow(false, 1),
            Scenario::two_flows(false, 1),
            Scenario::coding(false, 1, 0.5),
        ] {
            let gk = if sc.flows == 2 { 10.0 } else { 0.0 };
            let mut prev = f64::INFINITY;
            for delta in [0.0, 1e-5, 1e-4, 1e-3] {
                let cfg = config(sc, delta, 10.0, gk);
                let theta = analyze(&cfg, &SolverOptions::default()).unwrap().theta;
                assert!(theta <= prev + 1e-12, "{} delta={delta}", sc.label());
                prev = theta;
            }
        }
    }

    #[test]
    fn p_mix_zero_matches_no_coding_throughput() {
        for retx in [false, true] {
            let coded = config(Scenario::coding(retx, 7, 0.0), 5e-4, 10.0, 10.0);
            let plain = config(Scenario::two_flows(retx, 7), 5e-4, 10.0, 10.0);
            let t_coded = analyze(&coded, &SolverOptions::default()).unwrap().theta;
            let t_plain = analyze(&plain, &SolverOptions::default()).unwrap().theta;
            assert!(
                (t_coded - t_plain).abs() <= 1e-8,
                "retx={retx}: {t_coded} vs {t_plain}"
            );
        }
    }
}
