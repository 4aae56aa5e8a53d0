#ifndef SMALLJUMP_H
#define SMALLJUMP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. `SJ_STATUS_OK` is zero.
 */
typedef enum SjStatus {
  SJ_STATUS_OK = 0,
  SJ_STATUS_NULL_POINTER = 1,
  SJ_STATUS_INVALID_UTF8 = 2,
  SJ_STATUS_UNKNOWN_MODEL = 3,
  SJ_STATUS_INVALID_ARGUMENT = 4,
  SJ_STATUS_INAPPLICABLE = 5,
  SJ_STATUS_BUDGET_UNREACHABLE = 6,
  SJ_STATUS_NUMERICAL = 7,
  SJ_STATUS_BUFFER_TOO_SMALL = 8,
  SJ_STATUS_PANIC = 9,
} SjStatus;

/**
 * Simulation scheme selector.
 */
typedef enum SjScheme {
  SJ_SCHEME_TRUNCATE = 0,
  SJ_SCHEME_GAUSSIAN = 1,
  /**
   * Uses the `eps_ref` argument of `sj_simulate`.
   */
  SJ_SCHEME_REFINED = 2,
} SjScheme;

/**
 * Opaque batch of simulated paths.
 */
typedef struct SjBatch SjBatch;

/**
 * Opaque model handle.
 */
typedef struct SjModel SjModel;

/**
 * Small-jump functionals at one threshold.
 */
typedef struct SjMetrics {
  double eps;
  double sigma;
  double sigma0;
  double rho;
  double beta;
  double lambda_tail;
  double compensator;
  bool infinite_activity;
} SjMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t sj_last_error_message(char *buf, size_t len);

/**
 * Builds a named model from `n` key/value parameter pairs.
 *
 * # Safety
 * `name` must be a C string; `keys` and `values` must hold `n` entries
 * (either may be null when `n == 0`); `out` must be writable.
 */
enum SjStatus sj_model_new(const char *name,
                           const char *const *keys,
                           const double *values,
                           size_t n,
                           struct SjModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from `sj_model_new` and not be used afterwards.
 */
void sj_model_free(struct SjModel *model);

/**
 * Small-jump functionals at threshold `eps`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SjStatus sj_metrics(const struct SjModel *model, double eps, struct SjMetrics *out);

/**
 * Evaluates a bound by code (`"T1"`, `"B3"`, ...) with horizon `t` and
 * payoff Lipschitz constant `k_lip`; other parameters take defaults.
 *
 * # Safety
 * `model` must be a live handle, `bound` a C string and `out` writable.
 */
enum SjStatus sj_bound(const struct SjModel *model,
                       const char *bound,
                       double eps,
                       double t,
                       double k_lip,
                       double *out);

/**
 * Largest ε in `[lo, hi]` whose bound value stays within `budget`.
 *
 * # Safety
 * `model` must be a live handle, `bound` a C string and `out` writable.
 */
enum SjStatus sj_epsilon_for_budget(const struct SjModel *model,
                                    const char *bound,
                                    double budget,
                                    double t,
                                    double k_lip,
                                    double lo,
                                    double hi,
                                    double *out);

/**
 * Simulates `n_paths` paths on `n_steps` steps. `workers == 0` uses every
 * core; the output does not depend on it.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SjStatus sj_simulate(const struct SjModel *model,
                          double t,
                          size_t n_steps,
                          double eps,
                          enum SjScheme scheme,
                          double eps_ref,
                          size_t n_paths,
                          uint64_t seed,
                          size_t workers,
                          struct SjBatch **out);

/**
 * Releases a batch. Null is ignored.
 *
 * # Safety
 * `batch` must come from `sj_simulate` and not be used afterwards.
 */
void sj_batch_free(struct SjBatch *batch);

/**
 * Number of paths in a batch, 0 for null.
 *
 * # Safety
 * `batch` must be null or a live handle.
 */
size_t sj_batch_len(const struct SjBatch *batch);

/**
 * Copies the terminal values into `buf` (at least `sj_batch_len` slots).
 *
 * # Safety
 * `batch` must be a live handle and `buf` valid for `len` doubles.
 */
enum SjStatus sj_batch_terminal(const struct SjBatch *batch, double *buf, size_t len);

/**
 * Copies the grid suprema into `buf` (at least `sj_batch_len` slots).
 *
 * # Safety
 * `batch` must be a live handle and `buf` valid for `len` doubles.
 */
enum SjStatus sj_batch_supremum(const struct SjBatch *batch, double *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMALLJUMP_H */
