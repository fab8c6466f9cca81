#ifndef DISTDDP_H
#define DISTDDP_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum DistddpStatus {
  DISTDDP_STATUS_OK = 0,
  DISTDDP_STATUS_NULL_POINTER = 1,
  DISTDDP_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed or inconsistent scenario input.
   */
  DISTDDP_STATUS_INVALID_CONFIG = 3,
  DISTDDP_STATUS_UNKNOWN_SCENARIO = 4,
  /**
   * The solver itself failed.
   */
  DISTDDP_STATUS_SOLVER_FAILED = 5,
  DISTDDP_STATUS_OUT_OF_RANGE = 6,
  /**
   * The caller's buffer is too small; the required length was written.
   */
  DISTDDP_STATUS_BUFFER_TOO_SMALL = 7,
  DISTDDP_STATUS_IO = 8,
  DISTDDP_STATUS_PANIC = 9,
} DistddpStatus;

/**
 * Result of a solve: trajectories, feedback gains and a summary.
 */
typedef struct DistddpOutcome DistddpOutcome;

/**
 * Scenario description, built from TOML or a built-in name.
 */
typedef struct DistddpScenario DistddpScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL, or 0
 * when no error has been recorded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t distddp_last_error(char *buf, size_t len);

/**
 * Parses a scenario from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DistddpStatus distddp_scenario_from_toml(const char *toml, struct DistddpScenario **out);

/**
 * Loads a built-in scenario by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DistddpStatus distddp_scenario_builtin(const char *name, struct DistddpScenario **out);

/**
 * Applies one `key=value` override, e.g. `md.iterations=50`. The scenario is
 * left unchanged on failure.
 *
 * # Safety
 * `scenario` must come from this library and `assignment` be NUL-terminated.
 */
enum DistddpStatus distddp_scenario_set(struct DistddpScenario *scenario, const char *assignment);

/**
 * Number of agents in the scenario.
 *
 * # Safety
 * `scenario` must be null or come from this library.
 */
size_t distddp_scenario_agents(const struct DistddpScenario *scenario);

/**
 * # Safety
 * `scenario` must be null or come from this library, and not be used again.
 */
void distddp_scenario_free(struct DistddpScenario *scenario);

/**
 * Solves the scenario with `workers` threads (0 reads `DISTDDP_WORKERS`,
 * defaulting to one thread).
 *
 * # Safety
 * `scenario` must come from this library and `out` be a valid pointer.
 */
enum DistddpStatus distddp_solve(const struct DistddpScenario *scenario,
                                 size_t workers,
                                 struct DistddpOutcome **out);

/**
 * # Safety
 * `outcome` must be null or come from this library, and not be used again.
 */
void distddp_outcome_free(struct DistddpOutcome *outcome);

/**
 * Summary as a JSON object. The pointer stays valid until the outcome is freed.
 *
 * # Safety
 * `outcome` must be null or come from this library.
 */
const char *distddp_outcome_summary_json(const struct DistddpOutcome *outcome);

/**
 * Writes agent count, horizon, and the state and control dimension of
 * `agent`. Any output pointer may be null.
 *
 * # Safety
 * `outcome` must come from this library; non-null outputs must be writable.
 */
enum DistddpStatus distddp_outcome_dims(const struct DistddpOutcome *outcome,
                                        size_t agent,
                                        size_t *agents,
                                        size_t *horizon,
                                        size_t *state_dim,
                                        size_t *control_dim);

/**
 * Copies the `(horizon + 1) × state_dim` states of `agent`, step-major.
 * `written` receives the required length even when the buffer is too small.
 *
 * # Safety
 * `buf` must point to `len` writable doubles; `written` may be null.
 */
enum DistddpStatus distddp_outcome_states(const struct DistddpOutcome *outcome,
                                          size_t agent,
                                          double *buf,
                                          size_t len,
                                          size_t *written);

/**
 * Copies the `horizon × control_dim` controls of `agent`, step-major.
 *
 * # Safety
 * As for [`distddp_outcome_states`].
 */
enum DistddpStatus distddp_outcome_controls(const struct DistddpOutcome *outcome,
                                            size_t agent,
                                            double *buf,
                                            size_t len,
                                            size_t *written);

/**
 * Copies the `horizon × control_dim` feedforward terms of `agent`.
 *
 * # Safety
 * As for [`distddp_outcome_states`].
 */
enum DistddpStatus distddp_outcome_feedforward(const struct DistddpOutcome *outcome,
                                               size_t agent,
                                               double *buf,
                                               size_t len,
                                               size_t *written);

/**
 * Copies the `horizon × control_dim × state_dim` feedback gains of `agent`,
 * each matrix row-major.
 *
 * # Safety
 * As for [`distddp_outcome_states`].
 */
enum DistddpStatus distddp_outcome_feedback(const struct DistddpOutcome *outcome,
                                            size_t agent,
                                            double *buf,
                                            size_t len,
                                            size_t *written);

/**
 * Library version, static storage.
 */
const char *distddp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISTDDP_H */
