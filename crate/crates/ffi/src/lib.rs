//! C ABI for the chainlab throughput models.
//!
//! Conventions: constructors return an error code and write an opaque
//! handle through an out-pointer; every handle has a matching `_free`
//! function that accepts NULL. Scalar accessors on a valid handle cannot
//! fail. `chainlab_last_error_message` returns a thread-local description
//! of the most recent failure.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::ptr;

use chainlab::{
    analyze, build_chain, run_replications, validate, Error, ModelParams, Scenario, SimOptions,
    SimResult, SolverOptions, ThroughputReport, ValidatedConfig,
};

/// Success.
pub const CHAINLAB_OK: c_int = 0;
/// Invalid configuration or argument.
pub const CHAINLAB_ERR_CONFIG: c_int = 1;
/// Model-domain failure or unstable queue.
pub const CHAINLAB_ERR_MODEL: c_int = 2;
/// The fixed-point solver did not converge.
pub const CHAINLAB_ERR_SOLVER: c_int = 3;
/// A simulation run failed.
pub const CHAINLAB_ERR_SIM: c_int = 4;
/// A required pointer argument was NULL.
pub const CHAINLAB_ERR_NULL: c_int = 5;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(e: &Error) -> c_int {
    let msg = CString::new(e.to_string()).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
    match e.exit_code() {
        1 => CHAINLAB_ERR_CONFIG,
        2 => CHAINLAB_ERR_MODEL,
        3 => CHAINLAB_ERR_SOLVER,
        _ => CHAINLAB_ERR_SIM,
    }
}

fn null_error(what: &str) -> c_int {
    let msg = CString::new(format!("{what} must not be NULL")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
    CHAINLAB_ERR_NULL
}

/// Message describing the most recent error on this thread, or NULL. The
/// pointer stays valid until the next failing chainlab call on the same
/// thread.
#[no_mangle]
pub extern "C" fn chainlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// A validated chain/scenario/parameter bundle.
pub struct ChainlabConfig {
    inner: ValidatedConfig,
}

/// An analytic throughput report.
pub struct ChainlabReport {
    inner: ThroughputReport,
}

/// An aggregated simulation result.
pub struct ChainlabSim {
    inner: SimResult,
}

/// Builds and validates a configuration.
///
/// `nodes` is the chain length (>= 3), `flows` 1 or 2, `beta` the maximum
/// transmissions per packet (>= 1; only read when `retransmission` is
/// true), `p_mix` the coding probability (only read when `coding` is
/// true), `delta` the propagation delay in seconds, `mu` the service rate
/// and `gamma_1`/`gamma_k` the source rates in packets/second.
///
/// # Safety
/// `out` must be a valid pointer. On success it receives a handle that
/// must be released with `chainlab_config_free`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn chainlab_config_new(
    nodes: usize,
    flows: u8,
    retransmission: bool,
    coding: bool,
    beta: u32,
    p_mix: f64,
    delta: f64,
    mu: f64,
    gamma_1: f64,
    gamma_k: f64,
    out: *mut *mut ChainlabConfig,
) -> c_int {
    if out.is_null() {
        return null_error("out");
    }
    let scenario = Scenario {
        flows,
        retransmission,
        coding,
        beta,
        p_mix,
    };
    let topo = match build_chain(nodes) {
        Ok(t) => t,
        Err(e) => return set_error(&e),
    };
    match validate(
        scenario,
        ModelParams::new(delta, mu, gamma_1, gamma_k),
        topo,
    ) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(ChainlabConfig { inner }));
            CHAINLAB_OK
        }
        Err(e) => set_error(&e),
    }
}

/// Releases a configuration handle. NULL is ignored.
///
/// # Safety
/// `cfg` must be NULL or a pointer from `chainlab_config_new` that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn chainlab_config_free(cfg: *mut ChainlabConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn analyze_impl(
    cfg: *const ChainlabConfig,
    opts: SolverOptions,
    out: *mut *mut ChainlabReport,
) -> c_int {
    if out.is_null() {
        return null_error("out");
    }
    let Some(cfg) = cfg.as_ref() else {
        return null_error("cfg");
    };
    match analyze(&cfg.inner, &opts) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(ChainlabReport { inner }));
            CHAINLAB_OK
        }
        Err(e) => set_error(&e),
    }
}

/// Runs the analytic model with default solver options.
///
/// # Safety
/// `cfg` must be a valid configuration handle and `out` a valid pointer;
/// the report must be released with `chainlab_report_free`.
#[no_mangle]
pub unsafe extern "C" fn chainlab_analyze(
    cfg: *const ChainlabConfig,
    out: *mut *mut ChainlabReport,
) -> c_int {
    analyze_impl(cfg, SolverOptions::default(), out)
}

/// Runs the analytic model with explicit solver options. Pass
/// `native_only_interference = true` to exclude coded transmissions from
/// the collision windows.
///
/// # Safety
/// Same contract as `chainlab_analyze`.
#[no_mangle]
pub unsafe extern "C" fn chainlab_analyze_with_options(
    cfg: *const ChainlabConfig,
    damping: f64,
    tolerance: f64,
    max_iterations: usize,
    native_only_interference: bool,
    out: *mut *mut ChainlabReport,
) -> c_int {
    let opts = SolverOptions {
        damping,
        tolerance,
        max_iterations,
        interference: if native_only_interference {
            chainlab::InterferenceRate::NativeOnly
        } else {
            chainlab::InterferenceRate::Total
        },
    };
    analyze_impl(cfg, opts, out)
}

/// Total analytic throughput, packets/second.
///
/// # Safety
/// `report` must be a valid report handle.
#[no_mangle]
pub unsafe extern "C" fn chainlab_report_theta(report: *const ChainlabReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.theta)
}

/// Queue utilization rho at a 1-based node index; NaN when out of range.
///
/// # Safety
/// `report` must be a valid report handle.
#[no_mangle]
pub unsafe extern "C" fn chainlab_report_utilization(
    report: *const ChainlabReport,
    node: usize,
) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| {
        if node >= 1 && node <= r.inner.utilization.len() {
            r.inner.utilization[node - 1]
        } else {
            f64::NAN
        }
    })
}

/// Converged success probability of the directed link `from -> to`; NaN
/// when the scenario does not use that link.
///
/// # Safety
/// `report` must be a valid report handle.
#[no_mangle]
pub unsafe extern "C" fn chainlab_report_link_prob(
    report: *const ChainlabReport,
    from: usize,
    to: usize,
) -> f64 {
    report
        .as_ref()
        .and_then(|r| r.inner.link_probs.get(from, to).ok())
        .unwrap_or(f64::NAN)
}

/// Solver iterations used.
///
/// # Safety
/// `report` must be a valid report handle.
#[no_mangle]
pub unsafe extern "C" fn chainlab_report_iterations(report: *const ChainlabReport) -> usize {
    report
        .as_ref()
        .map_or(0, |r| r.inner.diagnostics.iterations)
}

/// Final max-norm residual of the fixed point.
///
/// # Safety
/// `report` must be a valid report handle.
#[no_mangle]
pub unsafe extern "C" fn chainlab_report_residual(report: *const ChainlabReport) -> f64 {
    report
        .as_ref()
        .map_or(f64::NAN, |r| r.inner.diagnostics.residual)
}

/// Releases a report handle. NULL is ignored.
///
/// # Safety
/// `report` must be NULL or an unfreed report handle.
#[no_mangle]
pub unsafe extern "C" fn chainlab_report_free(report: *mut ChainlabReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Runs `replications` independent simulation replications (seeds derived
/// deterministically from `seed`) and aggregates them.
///
/// # Safety
/// `cfg` must be a valid configuration handle and `out` a valid pointer;
/// the result must be released with `chainlab_sim_free`.
#[no_mangle]
pub unsafe extern "C" fn chainlab_simulate(
    cfg: *const ChainlabConfig,
    horizon_s: f64,
    warmup_s: f64,
    seed: u64,
    replications: usize,
    out: *mut *mut ChainlabSim,
) -> c_int {
    if out.is_null() {
        return null_error("out");
    }
    let Some(cfg) = cfg.as_ref() else {
        return null_error("cfg");
    };
    let opts = SimOptions {
        horizon_s,
        warmup_s,
        seed,
        ..SimOptions::default()
    };
    match run_replications(&cfg.inner, &opts, replications) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(ChainlabSim { inner }));
            CHAINLAB_OK
        }
        Err(e) => set_error(&e),
    }
}

/// Measured throughput, packets/second.
///
/// # Safety
/// `sim` must be a valid simulation handle.
#[no_mangle]
pub unsafe extern "C" fn chainlab_sim_theta(sim: *const ChainlabSim) -> f64 {
    sim.as_ref().map_or(f64::NAN, |r| r.inner.theta_hat)
}

/// 95% confidence half-width over replications (0 for a single run).
///
/// # Safety
/// `sim` must be a valid simulation handle.
#[no_mangle]
pub unsafe extern "C" fn chainlab_sim_ci_half_width(sim: *const ChainlabSim) -> f64 {
    sim.as_ref().map_or(f64::NAN, |r| r.inner.ci_half_width)
}

/// Number of replications aggregated.
///
/// # Safety
/// `sim` must be a valid simulation handle.
#[no_mangle]
pub unsafe extern "C" fn chainlab_sim_replications(sim: *const ChainlabSim) -> usize {
    sim.as_ref().map_or(0, |r| r.inner.replications)
}

/// Releases a simulation handle. NULL is ignored.
///
/// # Safety
/// `sim` must be NULL or an unfreed simulation handle.
#[no_mangle]
pub unsafe extern "C" fn chainlab_sim_free(sim: *mut ChainlabSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    unsafe fn config(
        flows: u8,
        retx: bool,
        coding: bool,
        delta: f64,
        g1: f64,
        gk: f64,
    ) -> *mut ChainlabConfig {
        let mut cfg: *mut ChainlabConfig = ptr::null_mut();
        let code = chainlab_config_new(
            5, flows, retx, coding, 7, 0.5, delta, 250.0, g1, gk, &mut cfg,
        );
        assert_eq!(code, CHAINLAB_OK);
        cfg
    }

    #[test]
    fn analyze_round_trip_through_the_abi() {
        unsafe {
            let cfg = config(1, false, false, 0.0, 10.0, 0.0);
            let mut report: *mut ChainlabReport = ptr::null_mut();
            assert_eq!(chainlab_analyze(cfg, &mut report), CHAINLAB_OK);
            assert_eq!(chainlab_report_theta(report), 10.0);
            assert!((chainlab_report_utilization(report, 1) - 0.04).abs() < 1e-12);
            assert_eq!(chainlab_report_link_prob(report, 1, 2), 1.0);
            assert!(chainlab_report_link_prob(report, 2, 1).is_nan());
            assert!(chainlab_report_iterations(report) >= 1);
            chainlab_report_free(report);
            chainlab_config_free(cfg);
        }
    }

    #[test]
    fn invalid_scenario_reports_config_error() {
        unsafe {
            let mut cfg: *mut ChainlabConfig = ptr::null_mut();
            let code =
                chainlab_config_new(5, 1, false, true, 1, 0.5, 0.0, 250.0, 10.0, 0.0, &mut cfg);
            assert_eq!(code, CHAINLAB_ERR_CONFIG);
            let msg = chainlab_last_error_message();
            assert!(!msg.is_null());
            let text = std::ffi::CStr::from_ptr(msg).to_string_lossy();
            assert!(text.contains("coding"), "{text}");
        }
    }

    #[test]
    fn unstable_load_reports_model_error() {
        unsafe {
            let cfg = config(1, false, false, 0.0, 300.0, 0.0);
            let mut report: *mut ChainlabReport = ptr::null_mut();
            assert_eq!(chainlab_analyze(cfg, &mut report), CHAINLAB_ERR_MODEL);
            chainlab_config_free(cfg);
        }
    }

    #[test]
    fn simulation_through_the_abi_is_deterministic() {
        unsafe {
            let cfg = config(2, true, true, 5e-4, 10.0, 10.0);
            let mut a: *mut ChainlabSim = ptr::null_mut();
            let mut b: *mut ChainlabSim = ptr::null_mut();
            assert_eq!(
                chainlab_simulate(cfg, 30.0, 5.0, 42, 3, &mut a),
                CHAINLAB_OK
            );
            assert_eq!(
                chainlab_simulate(cfg, 30.0, 5.0, 42, 3, &mut b),
                CHAINLAB_OK
            );
            assert_eq!(chainlab_sim_theta(a), chainlab_sim_theta(b));
            assert_eq!(chainlab_sim_replications(a), 3);
            assert!(chainlab_sim_ci_half_width(a) > 0.0);
            chainlab_sim_free(a);
            chainlab_sim_free(b);
            chainlab_config_free(cfg);
        }
    }

    #[test]
    fn frees_accept_null() {
        unsafe {
            chainlab_config_free(ptr::null_mut());
            chainlab_report_free(ptr::null_mut());
            chainlab_sim_free(ptr::null_mut());
        }
    }
}
