//! Experiment configuration: a documented TOML schema covering topology,
//! scenario rows, the parameter grid, solver and simulation options, and
//! the output format. See `configs/example.toml` for the canonical file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Scenario, DEFAULT_MU};
use crate::sim::SimOptions;
use crate::solver::{InterferenceRate, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!(
                "unknown output format '{other}' (expected text, csv, or json)"
            ))),
        }
    }
}

/// One scenario row of the experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub flows: u8,
    #[serde(default)]
    pub retransmission: bool,
    #[serde(default)]
    pub coding: bool,
    #[serde(default = "default_beta")]
    pub beta: u32,
    #[serde(default = "default_p_mix")]
    pub p_mix: f64,
    /// Fixed propagation delay for this row, overriding `[params] delta`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Per-gamma analytic throughput targets, aligned with `grid.gamma`;
    /// when present, delta is calibrated by bisection per cell.
    #[serde(default)]
    pub calibrate_targets: Option<Vec<f64>>,
    /// Reuse the resolved (possibly calibrated) delta of an earlier row,
    /// per gamma.
    #[serde(default)]
    pub delta_from_row: Option<usize>,
}

fn default_beta() -> u32 {
    1
}

fn default_p_mix() -> f64 {
    0.5
}

impl ScenarioRow {
    pub fn scenario(&self) -> Scenario {
        Scenario {
            flows: self.flows,
            retransmission: self.retransmission,
            coding: self.coding,
            beta: self.beta,
            p_mix: if self.coding { self.p_mix } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySection {
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSection {
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_mu() -> f64 {
    DEFAULT_MU
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection {
            delta: 0.0,
            mu: DEFAULT_MU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSection {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub interference_rate: InterferenceRate,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverSection {
            damping: o.damping,
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
            interference_rate: o.interference,
        }
    }
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            damping: self.damping,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            interference: self.interference_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSection {
    pub horizon_s: f64,
    pub warmup_s: f64,
    pub seed: u64,
    pub replications: usize,
    pub queue_cap: usize,
    pub history_cap: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let o = SimOptions::default();
        SimSection {
            horizon_s: o.horizon_s,
            warmup_s: o.warmup_s,
            seed: o.seed,
            replications: 10,
            queue_cap: o.queue_cap,
            history_cap: o.history_cap,
        }
    }
}

impl SimSection {
    pub fn options(&self) -> SimOptions {
        SimOptions {
            horizon_s: self.horizon_s,
            warmup_s: self.warmup_s,
            seed: self.seed,
            queue_cap: self.queue_cap,
            history_cap: self.history_cap,
        }
    }
}

/// Grid of source rates; each scenario row runs once per gamma. One-flow
/// rows use gamma_1 = gamma; two-flow rows use gamma_1 = gamma_k = gamma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub gamma: Vec<f64>,
}

/// Sweep description for `run_sweep`: one axis varied over explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Also simulate each point (slower).
    #[serde(default)]
    pub simulate: bool,
    /// Source rate used while sweeping a non-gamma axis.
    #[serde(default = "default_sweep_gamma")]
    pub gamma: f64,
}

fn default_sweep_gamma() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Gamma,
    Delta,
    Beta,
    PMix,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepAxis::Gamma => write!(f, "gamma"),
            SweepAxis::Delta => write!(f, "delta"),
            SweepAxis::Beta => write!(f, "beta"),
            SweepAxis::PMix => write!(f, "p_mix"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topology: TopologySection,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<ScenarioRow>,
    pub grid: GridSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn check(&self) -> Result<()> {
        if self.grid.gamma.is_empty() {
            return Err(Error::Config("grid.gamma must be non-empty".into()));
        }
        crate::topology::build_chain(self.topology.nodes)?;
        for (i, row) in self.scenarios.iter().enumerate() {
            row.scenario()
                .check()
                .map_err(|e| Error::Config(format!("scenario row {i}: {e}")))?;
            if let Some(d) = row.delta {
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Config(format!(
                        "scenario row {i}: delta must be >= 0, got {d}"
                    )));
                }
            }
            if let Some(targets) = &row.calibrate_targets {
                if targets.len() != self.grid.gamma.len() {
                    return Err(Error::Config(format!(
                        "scenario row {i}: calibrate_targets has {} entries but \
                         grid.gamma has {}",
                        targets.len(),
                        self.grid.gamma.len()
                    )));
                }
            }
            if let Some(src) = row.delta_from_row {
                if src >= i {
                    return Err(Error::Config(format!(
                        "scenario row {i}: delta_from_row must reference an \
                         earlier row, got {src}"
                    )));
                }
                if self.scenarios[src].delta_from_row.is_some() {
                    return Err(Error::Config(format!(
                        "scenario row {i}: delta_from_row target {src} is \
                         itself derived; reference a calibrated or fixed row"
                    )));
                }
            }
        }
        Ok(())
    }
}
