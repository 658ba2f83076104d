//! Throughput models for XOR inter-flow network coding on a multi-hop
//! wireless chain: a queueing-theoretic analytic engine, a packet-level
//! discrete-event simulator sharing the same channel abstraction, and a
//! scenario harness that compares the two.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod rates;
pub mod scenario;
pub mod sim;
pub mod solver;
pub mod topology;

pub use analysis::{analyze, ThroughputReport};
pub use error::{Error, Result};
pub use rates::{rates_coding, rates_for_scenario, rates_no_coding, throughput, RateLedger};
pub use scenario::{validate, ModelParams, Scenario, ValidatedConfig, DEFAULT_MU};
pub use sim::{run_replications, simulate, simulate_traced, SimOptions, SimResult};
pub use solver::{
    interferer_set, solve_joint, success_probability, InterferenceRate, LinkProbMap,
    SolverDiagnostics, SolverOptions,
};
pub use topology::{build_chain, ChainTopology, NodeId};
