#ifndef CHAINLAB_H
#define CHAINLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define CHAINLAB_OK 0

/**
 * Invalid configuration or argument.
 */
#define CHAINLAB_ERR_CONFIG 1

/**
 * Model-domain failure or unstable queue.
 */
#define CHAINLAB_ERR_MODEL 2

/**
 * The fixed-point solver did not converge.
 */
#define CHAINLAB_ERR_SOLVER 3

/**
 * A simulation run failed.
 */
#define CHAINLAB_ERR_SIM 4

/**
 * A required pointer argument was NULL.
 */
#define CHAINLAB_ERR_NULL 5

/**
 * A validated chain/scenario/parameter bundle.
 */
typedef struct ChainlabConfig ChainlabConfig;

/**
 * An analytic throughput report.
 */
typedef struct ChainlabReport ChainlabReport;

/**
 * An aggregated simulation result.
 */
typedef struct ChainlabSim ChainlabSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread, or NULL. The
 * pointer stays valid until the next failing chainlab call on the same
 * thread.
 */
const char *chainlab_last_error_message(void);

/**
 * Builds and validates a configuration.
 *
 * `nodes` is the chain length (>= 3), `flows` 1 or 2, `beta` the maximum
 * transmissions per packet (>= 1; only read when `retransmission` is
 * true), `p_mix` the coding probability (only read when `coding` is
 * true), `delta` the propagation delay in seconds, `mu` the service rate
 * and `gamma_1`/`gamma_k` the source rates in packets/second.
 *
 * # Safety
 * `out` must be a valid pointer. On success it receives a handle that
 * must be released with `chainlab_config_free`.
 */
int chainlab_config_new(uintptr_t nodes,
                        uint8_t flows,
                        bool retransmission,
                        bool coding,
                        uint32_t beta,
                        double p_mix,
                        double delta,
                        double mu,
                        double gamma_1,
                        double gamma_k,
                        struct ChainlabConfig **out);

/**
 * Releases a configuration handle. NULL is ignored.
 *
 * # Safety
 * `cfg` must be NULL or a pointer from `chainlab_config_new` that has not
 * been freed.
 */
void chainlab_config_free(struct ChainlabConfig *cfg);

/**
 * Runs the analytic model with default solver options.
 *
 * # Safety
 * `cfg` must be a valid configuration handle and `out` a valid pointer;
 * the report must be released with `chainlab_report_free`.
 */
int chainlab_analyze(const struct ChainlabConfig *cfg, struct ChainlabReport **out);

/**
 * Runs the analytic model with explicit solver options. Pass
 * `native_only_interference = true` to exclude coded transmissions from
 * the collision windows.
 *
 * # Safety
 * Same contract as `chainlab_analyze`.
 */
int chainlab_analyze_with_options(const struct ChainlabConfig *cfg,
                                  double damping,
                                  double tolerance,
                                  uintptr_t max_iterations,
                                  bool native_only_interference,
                                  struct ChainlabReport **out);

/**
 * Total analytic throughput, packets/second.
 *
 * # Safety
 * `report` must be a valid report handle.
 */
double chainlab_report_theta(const struct ChainlabReport *report);

/**
 * Queue utilization rho at a 1-based node index; NaN when out of range.
 *
 * # Safety
 * `report` must be a valid report handle.
 */
double chainlab_report_utilization(const struct ChainlabReport *report, uintptr_t node);

/**
 * Converged success probability of the directed link `from -> to`; NaN
 * when the scenario does not use that link.
 *
 * # Safety
 * `report` must be a valid report handle.
 */
double chainlab_report_link_prob(const struct ChainlabReport *report, uintptr_t from, uintptr_t to);

/**
 * Solver iterations used.
 *
 * # Safety
 * `report` must be a valid report handle.
 */
uintptr_t chainlab_report_iterations(const struct ChainlabReport *report);

/**
 * Final max-norm residual of the fixed point.
 *
 * # Safety
 * `report` must be a valid report handle.
 */
double chainlab_report_residual(const struct ChainlabReport *report);

/**
 * Releases a report handle. NULL is ignored.
 *
 * # Safety
 * `report` must be NULL or an unfreed report handle.
 */
void chainlab_report_free(struct ChainlabReport *report);

/**
 * Runs `replications` independent simulation replications (seeds derived
 * deterministically from `seed`) and aggregates them.
 *
 * # Safety
 * `cfg` must be a valid configuration handle and `out` a valid pointer;
 * the result must be released with `chainlab_sim_free`.
 */
int chainlab_simulate(const struct ChainlabConfig *cfg,
                      double horizon_s,
                      double warmup_s,
                      uint64_t seed,
                      uintptr_t replications,
                      struct ChainlabSim **out);

/**
 * Measured throughput, packets/second.
 *
 * # Safety
 * `sim` must be a valid simulation handle.
 */
double chainlab_sim_theta(const struct ChainlabSim *sim);

/**
 * 95% confidence half-width over replications (0 for a single run).
 *
 * # Safety
 * `sim` must be a valid simulation handle.
 */
double chainlab_sim_ci_half_width(const struct ChainlabSim *sim);

/**
 * Number of replications aggregated.
 *
 * # Safety
 * `sim` must be a valid simulation handle.
 */
uintptr_t chainlab_sim_replications(const struct ChainlabSim *sim);

/**
 * Releases a simulation handle. NULL is ignored.
 *
 * # Safety
 * `sim` must be NULL or an unfreed simulation handle.
 */
void chainlab_sim_free(struct ChainlabSim *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAINLAB_H */
