use thiserror::Error;

use crate::solver::SolverDiagnostics;

/// Errors produced by configuration, the analytic engine, and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its allowed range (negative delay, k < 3, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The scenario combination itself is invalid (e.g. coding with one flow).
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// A link or node reference does not exist in the chain.
    #[error("topology error: {0}")]
    Topology(String),

    /// The model left its domain of validity (collision window saturated,
    /// division by a zero success probability, negative rate).
    #[error("model domain error: {0}")]
    ModelDomain(String),

    /// A queue's arrival rate reached or exceeded its service rate.
    #[error("unstable queue at node {node}: utilization {rho:.4} >= 1")]
    Unstable { node: usize, rho: f64 },

    /// A simulated queue blew past the runtime cap.
    #[error("simulated queue at node {node} exceeded the cap ({queued} packets)")]
    SimUnstable { node: usize, queued: usize },

    /// The fixed-point solver did not reach the residual tolerance.
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        residual: f64,
        iterations: usize,
        diagnostics: SolverDiagnostics,
    },

    /// Bisection target was outside the supplied bracket or did not converge.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// A simulation run failed (runtime instability, bad options).
    #[error("simulation error: {0}")]
    Simulation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 config, 2 model/stability, 3 solver,
    /// 4 simulation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidScenario(_) | Error::Topology(_) => 1,
            Error::ModelDomain(_) | Error::Unstable { .. } | Error::Calibration(_) => 2,
            Error::NonConvergence { .. } => 3,
            Error::Simulation(_) | Error::SimUnstable { .. } => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SolverDiagnostics;

    #[test]
    fn exit_codes_follow_the_documented_mapping() {
        assert_eq!(Error::Config("x".into()).exit_code(), 1);
        assert_eq!(Error::InvalidScenario("x".into()).exit_code(), 1);
        assert_eq!(Error::Topology("x".into()).exit_code(), 1);
        assert_eq!(Error::ModelDomain("x".into()).exit_code(), 2);
        assert_eq!(Error::Unstable { node: 1, rho: 1.2 }.exit_code(), 2);
        assert_eq!(Error::Calibration("x".into()).exit_code(), 2);
        let diag = SolverDiagnostics {
            iterations: 3,
            residual: 1.0,
            converged: false,
        };
        assert_eq!(
            Error::NonConvergence {
                residual: 1.0,
                iterations: 3,
                diagnostics: diag
            }
            .exit_code(),
            3
        );
        assert_eq!(Error::Simulation("x".into()).exit_code(), 4);
        assert_eq!(Error::SimUnstable { node: 2, queued: 9 }.exit_code(), 4);
    }
}
