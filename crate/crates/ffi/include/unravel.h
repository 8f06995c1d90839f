#ifndef UNRAVEL_H
#define UNRAVEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of the C interface.
 */
typedef enum UnravelStatus {
  UNRAVEL_STATUS_OK = 0,
  /**
   * Null pointer, bad index, too small buffer or non-UTF-8 string.
   */
  UNRAVEL_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Malformed configuration, unknown preset or invalid parameter.
   */
  UNRAVEL_STATUS_CONFIG = 2,
  /**
   * Correlation kernel fails the positivity gate or cannot be factorized.
   */
  UNRAVEL_STATUS_INADMISSIBLE = 3,
  /**
   * Operator or grid shapes do not fit together.
   */
  UNRAVEL_STATUS_DIMENSION_MISMATCH = 4,
  /**
   * A supplied matrix is not unitary.
   */
  UNRAVEL_STATUS_NOT_UNITARY = 5,
  /**
   * Trajectories diverged.
   */
  UNRAVEL_STATUS_BLOW_UP = 6,
  /**
   * File or serialization failure.
   */
  UNRAVEL_STATUS_IO = 7,
  /**
   * Closure requirements on the model or kernel are not met.
   */
  UNRAVEL_STATUS_PRECONDITION = 8,
  /**
   * Internal error, including caught panics.
   */
  UNRAVEL_STATUS_INTERNAL = 99,
} UnravelStatus;

/**
 * Ensemble averages of one run.
 */
typedef struct UnravelResult UnravelResult;

/**
 * A validated scenario ready to run.
 */
typedef struct UnravelScenario UnravelScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *unravel_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *unravel_version(void);

/**
 * Builds a named preset.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum UnravelStatus unravel_scenario_from_preset(const char *name, struct UnravelScenario **out);

/**
 * Builds the scenario of a JSON run configuration. Relative kernel files are
 * resolved against `base_dir`, or the working directory when it is null.
 *
 * # Safety
 * `json` and a non-null `base_dir` must be NUL-terminated strings; `out` must be valid.
 */
enum UnravelStatus unravel_scenario_from_json(const char *json,
                                              const char *base_dir,
                                              struct UnravelScenario **out);

/**
 * Releases a scenario; null is ignored.
 *
 * # Safety
 * `s` must come from a scenario constructor and not be used afterwards.
 */
void unravel_scenario_free(struct UnravelScenario *s);

/**
 * Hilbert-space dimension, or 0 for null.
 *
 * # Safety
 * `s` must be null or a live scenario.
 */
size_t unravel_scenario_dim(const struct UnravelScenario *s);

/**
 * Number of noise channels, or 0 for null.
 *
 * # Safety
 * `s` must be null or a live scenario.
 */
size_t unravel_scenario_channels(const struct UnravelScenario *s);

/**
 * Default ensemble size of the scenario, or 0 for null.
 *
 * # Safety
 * `s` must be null or a live scenario.
 */
size_t unravel_scenario_default_ensemble(const struct UnravelScenario *s);

/**
 * Positivity gate of the scenario's correlation kernel. Writes the smallest
 * block eigenvalue; returns `Inadmissible` when the gate fails.
 *
 * # Safety
 * `s` must be a live scenario; `min_eigenvalue` may be null.
 */
enum UnravelStatus unravel_check_positivity(const struct UnravelScenario *s,
                                            double *min_eigenvalue);

/**
 * Averages `m` trajectories with master seed `seed`. `threads` = 0 uses the
 * global pool.
 *
 * # Safety
 * `s` must be a live scenario and `out` a valid pointer.
 */
enum UnravelStatus unravel_run(const struct UnravelScenario *s,
                               size_t m,
                               uint64_t seed,
                               size_t threads,
                               struct UnravelResult **out);

/**
 * Releases a result; null is ignored.
 *
 * # Safety
 * `r` must come from [`unravel_run`] and not be used afterwards.
 */
void unravel_result_free(struct UnravelResult *r);

/**
 * Number of output times, or 0 for null.
 *
 * # Safety
 * `r` must be null or a live result.
 */
size_t unravel_result_len(const struct UnravelResult *r);

/**
 * Number of trajectories that entered the averages, or 0 for null.
 *
 * # Safety
 * `r` must be null or a live result.
 */
size_t unravel_result_trajectories(const struct UnravelResult *r);

/**
 * Copies the output times into `times[0..len]`.
 *
 * # Safety
 * `r` must be a live result and `times` valid for `len` writes.
 */
enum UnravelStatus unravel_result_times(const struct UnravelResult *r, double *times, size_t len);

/**
 * Mean density matrix at output index `i`, row-major as interleaved
 * (re, im) pairs: `buf` needs 2 d² entries. `stderr`, when non-null,
 * receives d² standard errors.
 *
 * # Safety
 * `r` must be a live result; `buf` valid for `len` writes; `stderr` null or valid for d² writes.
 */
enum UnravelStatus unravel_result_mean_rho(const struct UnravelResult *r,
                                           size_t i,
                                           double *buf,
                                           size_t len,
                                           double *stderr);

/**
 * Mean of observable `k` at output index `i` and its standard error.
 *
 * # Safety
 * `r` must be a live result; `re`, `im`, `stderr` may each be null.
 */
enum UnravelStatus unravel_result_observable(const struct UnravelResult *r,
                                             size_t k,
                                             size_t i,
                                             double *re,
                                             double *im,
                                             double *stderr);

/**
 * Index of the observable called `name`, or -1 when absent or on bad input.
 *
 * # Safety
 * `r` must be null or a live result; `name` null or NUL-terminated.
 */
int64_t unravel_result_observable_index(const struct UnravelResult *r, const char *name);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNRAVEL_H */
