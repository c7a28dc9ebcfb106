#ifndef BVS_H
#define BVS_H

/* Generated from the Rust sources by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a C-interface call.
 */
typedef enum BvsStatus {
  /**
   * The call succeeded.
   */
  BVS_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  BVS_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  BVS_STATUS_INVALID_UTF8 = 2,
  /**
   * The data or configuration was rejected.
   */
  BVS_STATUS_INVALID_ARGUMENT = 3,
  /**
   * A file could not be read or written.
   */
  BVS_STATUS_IO_ERROR = 4,
  /**
   * A numeric failure stopped the computation.
   */
  BVS_STATUS_NUMERIC_ERROR = 5,
  /**
   * An internal error was caught at the boundary.
   */
  BVS_STATUS_INTERNAL_ERROR = 6,
} BvsStatus;

/**
 * A fitted model: the standardized data, resolved prior, and retained chain.
 */
typedef struct BvsFit BvsFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent non-`Ok` status on this thread, empty if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *bvs_last_error(void);

/**
 * The library version as a static string.
 */
const char *bvs_version(void);

/**
 * Fit a model to a CSV file with a header row; `response_name` picks the
 * response column and every other column is a predictor. `settings_toml`
 * may be null or empty for the defaults, or TOML with optional `[prior]`,
 * `[proposal]`, and `[chain]` sections.
 *
 * # Safety
 * `csv_path`, `response_name`, and (when non-null) `settings_toml` must be
 * NUL-terminated strings; `out` must be a valid location to store a pointer.
 */
enum BvsStatus bvs_fit_csv(const char *csv_path,
                           const char *response_name,
                           const char *settings_toml,
                           struct BvsFit **out);

/**
 * Fit a model to an in-memory design matrix (row-major `n_rows x n_cols`)
 * and response vector of length `n_rows`. Predictors are named
 * `x1..x<n_cols>`. `settings_toml` is as in [`bvs_fit_csv`].
 *
 * # Safety
 * `x` must point to `n_rows * n_cols` doubles, `y` to `n_rows` doubles;
 * `settings_toml` when non-null must be a NUL-terminated string; `out` must
 * be a valid location to store a pointer.
 */
enum BvsStatus bvs_fit_matrix(const double *x,
                              size_t n_rows,
                              size_t n_cols,
                              const double *y,
                              const char *settings_toml,
                              struct BvsFit **out);

/**
 * Release a handle returned by a `bvs_fit_*` call. Null is a no-op.
 *
 * # Safety
 * `fit` must be a pointer previously returned through the `out` argument of
 * a fitting call, and must not be used again afterwards.
 */
void bvs_fit_free(struct BvsFit *fit);

/**
 * Number of predictor columns, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
size_t bvs_fit_predictor_count(const struct BvsFit *fit);

/**
 * Number of retained posterior draws, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
size_t bvs_fit_sample_count(const struct BvsFit *fit);

/**
 * Fraction of proposals accepted, or NaN for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
double bvs_fit_acceptance_rate(const struct BvsFit *fit);

/**
 * Number of proposals rejected because they could not be evaluated
 * numerically, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
uint64_t bvs_fit_numeric_rejections(const struct BvsFit *fit);

/**
 * Posterior mean number of active predictors, or NaN for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
double bvs_fit_mean_model_size(const struct BvsFit *fit);

/**
 * Copy the per-predictor posterior inclusion probabilities into `out`,
 * which must hold at least `bvs_fit_predictor_count` doubles.
 *
 * # Safety
 * `fit` must be a live fit handle; `out` must point to `capacity` doubles.
 */
enum BvsStatus bvs_fit_inclusion_probabilities(const struct BvsFit *fit,
                                               double *out,
                                               size_t capacity);

/**
 * Posterior-mean predictions for `n_rows` new observations given as a
 * row-major `n_rows x n_cols` matrix in the original (unstandardized)
 * predictor units, with `n_cols == bvs_fit_predictor_count`. Writes
 * `n_rows` doubles to `out`, on the original response scale.
 *
 * # Safety
 * `fit` must be a live fit handle; `x` must point to `n_rows * n_cols`
 * doubles and `out` to `n_rows` doubles.
 */
enum BvsStatus bvs_fit_predict(const struct BvsFit *fit,
                               const double *x,
                               size_t n_rows,
                               size_t n_cols,
                               double *out);

/**
 * Write the retained chain to `path` in the library's chain file format.
 *
 * # Safety
 * `fit` must be a live fit handle; `path` must be a NUL-terminated string.
 */
enum BvsStatus bvs_fit_save_chain(const struct BvsFit *fit, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BVS_H */
