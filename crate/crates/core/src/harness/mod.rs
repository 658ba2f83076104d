//! Scenario execution: analysis/simulation comparison tables, parameter
//! sweeps, and delta calibration.

pub mod config;
pub mod format;

use serde::{Deserialize, Serialize};

use crate::analysis::analyze;
use crate::error::{Error, Result};
use crate::scenario::{validate, ModelParams, Scenario, ValidatedConfig};
use crate::sim::run_replications;
use crate::solver::SolverOptions;
use crate::topology::{build_chain, ChainTopology};

pub use config::{ExperimentConfig, OutputFormat, ScenarioRow, SweepAxis};

/// Maximum bisection steps for delta calibration.
const CALIBRATION_MAX_STEPS: usize = 200;
/// Relative throughput tolerance the bisection stops at.
const CALIBRATION_REL_TOL: f64 = 1e-3;

/// One (scenario, gamma) cell of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub step: u8,
    pub gamma: f64,
    pub delta: f64,
    pub theta_analysis: Option<f64>,
    pub theta_sim: Option<f64>,
    pub ci95_half_width: Option<f64>,
    pub rel_error: Option<f64>,
    /// Populated when this cell failed; the rest of the table continues.
    pub error: Option<String>,
}

/// One point of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub step: u8,
    pub axis: String,
    pub value: f64,
    pub theta_analysis: Option<f64>,
    pub theta_sim: Option<f64>,
    pub ci95_half_width: Option<f64>,
    /// Set on delta-axis rows where throughput increased over the previous
    /// point: a model-consistency alarm.
    pub monotonicity_alarm: bool,
    pub error: Option<String>,
}

fn params_for(gamma: f64, delta: f64, mu: f64, flows: u8) -> ModelParams {
    let gamma_k = if flows == 2 { gamma } else { 0.0 };
    ModelParams::new(delta, mu, gamma, gamma_k)
}

fn validated(
    topo: &ChainTopology,
    scenario: Scenario,
    gamma: f64,
    delta: f64,
    mu: f64,
) -> Result<ValidatedConfig> {
    validate(
        scenario,
        params_for(gamma, delta, mu, scenario.flows),
        topo.clone(),
    )
}

/// Bisects delta until the analytic throughput of the scenario hits
/// `target` to 0.1% relative. Requires a bracketing pair:
/// theta(lo) >= target >= theta(hi), which monotonicity of throughput in
/// delta makes meaningful.
pub fn calibrate_delta(
    topo: &ChainTopology,
    scenario: Scenario,
    gamma: f64,
    mu: f64,
    target: f64,
    bounds: (f64, f64),
    opts: &SolverOptions,
) -> Result<f64> {
    let (mut lo, mut hi) = bounds;
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::Calibration(format!("invalid bracket [{lo}, {hi}]")));
    }
    let theta_at = |delta: f64| -> Result<f64> {
        let cfg = validated(topo, scenario, gamma, delta, mu)?;
        Ok(analyze(&cfg, opts)?.theta)
    };
    let tol = CALIBRATION_REL_TOL * target;

    let t_lo = theta_at(lo)?;
    if (t_lo - target).abs() < tol {
        return Ok(lo);
    }
    // The supplied upper bound may sit beyond the model's domain (saturated
    // collision window or diverging fixed point); shrink it until the
    // analysis succeeds there.
    let mut t_hi = theta_at(hi);
    let mut shrinks = 0;
    while matches!(
        t_hi,
        Err(Error::ModelDomain(_))
            | Err(Error::NonConvergence { .. })
            | Err(Error::Unstable { .. })
    ) && shrinks < 20
    {
        hi = lo + 0.5 * (hi - lo);
        t_hi = theta_at(hi);
        shrinks += 1;
    }
    let t_hi = t_hi?;
    if t_lo < target || target < t_hi {
        return Err(Error::Calibration(format!(
            "target {target} outside bracket: theta({lo}) = {t_lo:.6}, \
             theta({hi}) = {t_hi:.6}"
        )));
    }

    for _ in 0..CALIBRATION_MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        let t = theta_at(mid)?;
        if (t - target).abs() < tol {
            return Ok(mid);
        }
        if t > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration(format!(
        "no convergence to {target} within {CALIBRATION_MAX_STEPS} bisections"
    )))
}

/// Resolved per-cell delta values: `deltas[row][gamma_index]`.
pub fn resolve_deltas(config: &ExperimentConfig) -> Result<Vec<Vec<Result<f64>>>> {
    let topo = build_chain(config.topology.nodes)?;
    let opts = config.solver.options();
    let mut resolved: Vec<Vec<Result<f64>>> = Vec::with_capacity(config.scenarios.len());
    for row in &config.scenarios {
        let base = row.delta.unwrap_or(config.params.delta);
        let mut per_gamma: Vec<Result<f64>> = Vec::with_capacity(config.grid.gamma.len());
        for (gi, &gamma) in config.grid.gamma.iter().enumerate() {
            let value: Result<f64> = if let Some(targets) = &row.calibrate_targets {
                calibrate_delta(
                    &topo,
                    row.scenario(),
                    gamma,
                    config.params.mu,
                    targets[gi],
                    calibration_bracket(gamma),
                    &opts,
                )
            } else if let Some(src) = row.delta_from_row {
                match &resolved[src][gi] {
                    Ok(d) => Ok(*d),
                    Err(e) => Err(Error::Calibration(format!(
                        "row {src} delta unavailable: {e}"
                    ))),
                }
            } else {
                Ok(base)
            };
            per_gamma.push(value);
        }
        resolved.push(per_gamma);
    }
    Ok(resolved)
}

/// Default calibration bracket: from the lossless limit up to a delay deep
/// enough for every table row in this corpus; `calibrate_delta` shrinks the
/// top when the solver cannot follow it that far.
fn calibration_bracket(_gamma: f64) -> (f64, f64) {
    (0.0, 2e-3)
}

/// Runs every (scenario, gamma) cell: analysis plus replicated simulation.
/// Rows appear in scenario-then-gamma order; a failing cell is recorded in
/// its row and the table continues.
pub fn run_compare(config: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let topo = build_chain(config.topology.nodes)?;
    let solver_opts = config.solver.options();
    let sim_opts = config.sim.options();
    let deltas = resolve_deltas(config)?;

    let mut rows = Vec::new();
    for (ri, row) in config.scenarios.iter().enumerate() {
        let scenario = row.scenario();
        for (gi, &gamma) in config.grid.gamma.iter().enumerate() {
            let mut out = ComparisonRow {
                scenario: scenario.label(),
                step: scenario.step(),
                gamma,
                delta: f64::NAN,
                theta_analysis: None,
                theta_sim: None,
                ci95_half_width: None,
                rel_error: None,
                error: None,
            };
            let cell = (|| -> Result<()> {
                let delta = match &deltas[ri][gi] {
                    Ok(d) => *d,
                    Err(e) => return Err(Error::Calibration(e.to_string())),
                };
                out.delta = delta;
                let cfg = validated(&topo, scenario, gamma, delta, config.params.mu)?;
                let report = analyze(&cfg, &solver_opts)?;
                out.theta_analysis = Some(report.theta);
                let sim = run_replications(&cfg, &sim_opts, config.sim.replications)?;
                out.theta_sim = Some(sim.theta_hat);
                out.ci95_half_width = Some(sim.ci_half_width);
                out.rel_error = Some((sim.theta_hat - report.theta).abs() / report.theta);
                Ok(())
            })();
            if let Err(e) = cell {
                out.error = Some(e.to_string());
            }
            rows.push(out);
        }
    }
    Ok(rows)
}

/// Analysis-only variant of `run_compare`.
pub fn run_analyze(config: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let topo = build_chain(config.topology.nodes)?;
    let solver_opts = config.solver.options();
    let deltas = resolve_deltas(config)?;

    let mut rows = Vec::new();
    for (ri, row) in config.scenarios.iter().enumerate() {
        let scenario = row.scenario();
        for (gi, &gamma) in config.grid.gamma.iter().enumerate() {
            let mut out = ComparisonRow {
                scenario: scenario.label(),
                step: scenario.step(),
                gamma,
                delta: f64::NAN,
                theta_analysis: None,
                theta_sim: None,
                ci95_half_width: None,
                rel_error: None,
                error: None,
            };
            let cell = (|| -> Result<()> {
                let delta = match &deltas[ri][gi] {
                    Ok(d) => *d,
                    Err(e) => return Err(Error::Calibration(e.to_string())),
                };
                out.delta = delta;
                let cfg = validated(&topo, scenario, gamma, delta, config.params.mu)?;
                out.theta_analysis = Some(analyze(&cfg, &solver_opts)?.theta);
                Ok(())
            })();
            if let Err(e) = cell {
                out.error = Some(e.to_string());
            }
            rows.push(out);
        }
    }
    Ok(rows)
}

/// Simulation-only variant of `run_compare`.
pub fn run_simulate(config: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let topo = build_chain(config.topology.nodes)?;
    let sim_opts = config.sim.options();
    let deltas = resolve_deltas(config)?;

    let mut rows = Vec::new();
    for (ri, row) in config.scenarios.iter().enumerate() {
        let scenario = row.scenario();
        for (gi, &gamma) in config.grid.gamma.iter().enumerate() {
            let mut out = ComparisonRow {
                scenario: scenario.label(),
                step: scenario.step(),
                gamma,
                delta: f64::NAN,
                theta_analysis: None,
                theta_sim: None,
                ci95_half_width: None,
                rel_error: None,
                error: None,
            };
            let cell = (|| -> Result<()> {
                let delta = match &deltas[ri][gi] {
                    Ok(d) => *d,
                    Err(e) => return Err(Error::Calibration(e.to_string())),
                };
                out.delta = delta;
                let cfg = validated(&topo, scenario, gamma, delta, config.params.mu)?;
                let sim = run_replications(&cfg, &sim_opts, config.sim.replications)?;
                out.theta_sim = Some(sim.theta_hat);
                out.ci95_half_width = Some(sim.ci_half_width);
                Ok(())
            })();
            if let Err(e) = cell {
                out.error = Some(e.to_string());
            }
            rows.push(out);
        }
    }
    Ok(rows)
}

/// Sweeps one axis over explicit values for every scenario row. Delta-axis
/// sweeps flag any throughput increase as a model-consistency alarm.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [sweep] section".into()))?;
    if sweep.values.is_empty() {
        return Err(Error::Config("sweep.values must be non-empty".into()));
    }
    let topo = build_chain(config.topology.nodes)?;
    let solver_opts = config.solver.options();
    let sim_opts = config.sim.options();

    let mut rows = Vec::new();
    for row in &config.scenarios {
        let base = row.scenario();
        let mut prev_theta: Option<f64> = None;
        for &value in &sweep.values {
            let mut scenario = base;
            let mut gamma = sweep.gamma;
            let mut delta = row.delta.unwrap_or(config.params.delta);
            match sweep.axis {
                SweepAxis::Gamma => gamma = value,
                SweepAxis::Delta => delta = value,
                SweepAxis::Beta => scenario.beta = value as u32,
                SweepAxis::PMix => scenario.p_mix = value,
            }
            let mut out = SweepRow {
                scenario: scenario.label(),
                step: scenario.step(),
                axis: sweep.axis.to_string(),
                value,
                theta_analysis: None,
                theta_sim: None,
                ci95_half_width: None,
                monotonicity_alarm: false,
                error: None,
            };
            let cell = (|| -> Result<()> {
                let cfg = validated(&topo, scenario, gamma, delta, config.params.mu)?;
                let theta = analyze(&cfg, &solver_opts)?.theta;
                out.theta_analysis = Some(theta);
                if sweep.axis == SweepAxis::Delta {
                    if let Some(prev) = prev_theta {
                        // Allow solver-tolerance wiggle.
                        if theta > prev + 1e-6 {
                            out.monotonicity_alarm = true;
                        }
                    }
                    prev_theta = Some(theta);
                }
                if sweep.simulate {
                    let sim = run_replications(&cfg, &sim_opts, config.sim.replications)?;
                    out.theta_sim = Some(sim.theta_hat);
                    out.ci95_half_width = Some(sim.ci_half_width);
                }
                Ok(())
            })();
            if let Err(e) = cell {
                out.error = Some(e.to_string());
            }
            rows.push(out);
        }
    }
    Ok(rows)
}

/// Calibration table: one row per (scenario, gamma) cell that carries a
/// target; reports the calibrated delta and the analytic check value.
pub fn run_calibrate(config: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let topo = build_chain(config.topology.nodes)?;
    let solver_opts = config.solver.options();

    let mut rows = Vec::new();
    for row in &config.scenarios {
        let Some(targets) = &row.calibrate_targets else {
            continue;
        };
        let scenario = row.scenario();
        for (gi, &gamma) in config.grid.gamma.iter().enumerate() {
            let target = targets[gi];
            let mut out = ComparisonRow {
                scenario: scenario.label(),
                step: scenario.step(),
                gamma,
                delta: f64::NAN,
                theta_analysis: None,
                theta_sim: None,
                ci95_half_width: None,
                rel_error: None,
                error: None,
            };
            let cell = (|| -> Result<()> {
                let delta = calibrate_delta(
                    &topo,
                    scenario,
                    gamma,
                    config.params.mu,
                    target,
                    calibration_bracket(gamma),
                    &solver_opts,
                )?;
                out.delta = delta;
                let cfg = validated(&topo, scenario, gamma, delta, config.params.mu)?;
                let theta = analyze(&cfg, &solver_opts)?.theta;
                out.theta_analysis = Some(theta);
                out.rel_error = Some((theta - target).abs() / target);
                Ok(())
            })();
            if let Err(e) = cell {
                out.error = Some(e.to_string());
            }
            rows.push(out);
        }
    }
    if rows.is_empty() {
        return Err(Error::Config(
            "no scenario row carries calibrate_targets".into(),
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::DEFAULT_MU;

    #[test]
    fn calibration_hits_the_lossless_limit_at_zero() {
        let topo = build_chain(5).unwrap();
        let delta = calibrate_delta(
            &topo,
            Scenario::one_flow(false, 1),
            10.0,
            DEFAULT_MU,
            10.0,
            (0.0, 1e-3),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(delta, 0.0);
    }

    #[test]
    fn calibration_rejects_unreachable_targets() {
        let topo = build_chain(5).unwrap();
        let err = calibrate_delta(
            &topo,
            Scenario::one_flow(false, 1),
            10.0,
            DEFAULT_MU,
            11.0,
            (0.0, 1e-3),
            &SolverOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Calibration(_)));
    }

    #[test]
    fn calibration_round_trip_on_table_rows() {
        let topo = build_chain(5).unwrap();
        let opts = SolverOptions::default();
        for (scenario, gamma, target, tol) in [
            (Scenario::one_flow(false, 1), 10.0, 9.37, 0.01),
            (Scenario::two_flows(false, 1), 14.286, 26.77, 0.027),
        ] {
            let delta = calibrate_delta(
                &topo,
                scenario,
                gamma,
                DEFAULT_MU,
                target,
                (0.0, 2e-3),
                &opts,
            )
            .unwrap();
            assert!(delta > 0.0);
            let cfg = validated(&topo, scenario, gamma, delta, DEFAULT_MU).unwrap();
            let theta = analyze(&cfg, &opts).unwrap().theta;
            assert!((theta - target).abs() <= tol, "theta = {theta} vs {target}");
        }
    }

    #[test]
    fn beta_sweep_is_non_decreasing_for_coding_retransmission() {
        // Deeper retry budgets recover more coded-decode failures, so the
        // analytic throughput can only rise with beta.
        let cfg = ExperimentConfig::from_toml_str(
            r#"
[topology]
nodes = 5
[params]
delta = 1.8e-3
[grid]
gamma = [20.0]
[sweep]
axis = "beta"
values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]
gamma = 20.0
[[scenario]]
flows = 2
coding = true
retransmission = true
p_mix = 0.5
"#,
        )
        .unwrap();
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 7);
        let mut prev = 0.0;
        for row in &rows {
            let theta = row.theta_analysis.unwrap();
            assert!(
                theta >= prev - 1e-9,
                "theta fell to {theta} at beta={}",
                row.value
            );
            prev = theta;
        }
        // The axis must actually bite: beta = 1 loses measurably more
        // than beta = 7 at this depth.
        assert!(rows[6].theta_analysis.unwrap() > rows[0].theta_analysis.unwrap());
    }

    #[test]
    fn empty_scenario_list_yields_empty_table() {
        let cfg =
            ExperimentConfig::from_toml_str("[topology]\nnodes = 5\n[grid]\ngamma = [10.0]\n")
                .unwrap();
        let rows = run_compare(&cfg).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn compare_reports_per_row_failures_without_aborting() {
        // gamma = 300 exceeds mu at the first node; the second row is fine.
        let cfg = ExperimentConfig::from_toml_str(
            r#"
[topology]
nodes = 5
[grid]
gamma = [300.0, 10.0]
[sim]
horizon_s = 20.0
warmup_s = 2.0
replications = 2
[[scenario]]
flows = 1
"#,
        )
        .unwrap();
        let rows = run_compare(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].error.as_deref().unwrap().contains("unstable"));
        assert!(rows[1].error.is_none());
        assert!(rows[1].rel_error.is_some());
    }

    #[test]
    fn sweep_flags_nothing_on_a_monotone_delta_axis() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
[topology]
nodes = 5
[grid]
gamma = [10.0]
[sweep]
axis = "delta"
values = [0.0, 1e-4, 1e-3]
gamma = 10.0
[[scenario]]
flows = 1
"#,
        )
        .unwrap();
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| !r.monotonicity_alarm));
        let thetas: Vec<f64> = rows.iter().map(|r| r.theta_analysis.unwrap()).collect();
        assert!(thetas[0] >= thetas[1] && thetas[1] >= thetas[2]);
    }
}
