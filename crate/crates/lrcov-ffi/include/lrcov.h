#ifndef LRCOV_H
#define LRCOV_H

/* Generated by cbindgen from lrcov-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Kernel for the long-run-variance estimator (proposed method only).
 */
typedef enum {
  LRCOV_KERNEL_QUADRATIC_SPECTRAL = 0,
  LRCOV_KERNEL_BARTLETT = 1,
  LRCOV_KERNEL_PARZEN = 2,
  LRCOV_KERNEL_TUKEY_HANNING = 3,
} LrcovKernel;

/**
 * Threshold scale family.
 */
typedef enum {
  /**
   * Entry-wise long-run-variance thresholds.
   */
  LRCOV_METHOD_PROPOSED = 0,
  /**
   * One universal threshold sqrt(log p / n).
   */
  LRCOV_METHOD_UNIVERSAL = 1,
  /**
   * Entry-wise contemporaneous-variance thresholds (Cai-Liu).
   */
  LRCOV_METHOD_CAI_LIU = 2,
} LrcovMethod;

/**
 * Shrinkage rule applied at each entry.
 */
typedef enum {
  LRCOV_RULE_HARD = 0,
  LRCOV_RULE_SOFT = 1,
  /**
   * Uses the `eta` field of the options.
   */
  LRCOV_RULE_ADAPTIVE_LASSO = 2,
} LrcovRule;

/**
 * Result category of an FFI call.
 */
typedef enum {
  LRCOV_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  LRCOV_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  LRCOV_STATUS_UTF8 = 2,
  /**
   * File could not be read or written.
   */
  LRCOV_STATUS_IO = 3,
  /**
   * Malformed input file.
   */
  LRCOV_STATUS_PARSE = 4,
  /**
   * Invalid option combination or input shape.
   */
  LRCOV_STATUS_CONFIG = 5,
  /**
   * Numerical failure (non-convergence, degenerate input).
   */
  LRCOV_STATUS_NUMERICAL = 6,
  /**
   * Internal invariant violation caught at the boundary.
   */
  LRCOV_STATUS_PANIC = 7,
} LrcovStatus;

/**
 * Opaque fitted-estimator handle.
 */
typedef struct LrcovEstimate LrcovEstimate;

/**
 * Opaque panel handle: n observations (rows) by p series (columns).
 */
typedef struct LrcovPanel LrcovPanel;

/**
 * Everything `lrcov_estimate` needs besides the panel. Obtain a filled-in
 * baseline from `lrcov_estimate_options_default` and override fields.
 */
typedef struct {
  LrcovMethod method;
  LrcovRule rule;
  /**
   * Adaptive-lasso exponent, >= 1. Ignored by the other rules.
   */
  double eta;
  /**
   * Threshold constant. Any negative value selects delta by block
   * cross-validation on consecutive time folds.
   */
  double delta;
  LrcovKernel kernel;
  /**
   * Kernel bandwidth. Non-positive (or NaN) selects the AR(1) plug-in
   * bandwidth per product series.
   */
  double bandwidth;
  /**
   * Also threshold diagonal entries (off by default).
   */
  bool threshold_diagonal;
  /**
   * Cross-validation: number of consecutive blocks.
   */
  size_t cv_blocks;
  /**
   * Cross-validation: rows removed around the validation block.
   */
  size_t cv_buffer;
  /**
   * Cross-validation: grid resolution M, candidates j/M for 0 <= j <= 4M.
   */
  size_t cv_grid_m;
  /**
   * Seed for randomized components (unused by the block scheme itself).
   */
  uint64_t seed;
} LrcovEstimateOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty string if no
 * failure has been recorded. The pointer is invalidated by the next
 * failing call on the same thread.
 */
const char *lrcov_last_error_message(void);

/**
 * Wrap a caller-owned row-major buffer (`n_obs` rows of `n_series`
 * columns) into a panel handle. The data are copied.
 *
 * # Safety
 * `data` must point to `n_obs * n_series` readable doubles and `out` to a
 * writable `LrcovPanel *` slot.
 */
LrcovStatus lrcov_panel_from_data(const double *data,
                                  size_t n_obs,
                                  size_t n_series,
                                  LrcovPanel **out);

/**
 * Load a panel from a CSV file (rows = time, columns = series, optional
 * single header line).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable
 * `LrcovPanel *` slot.
 */
LrcovStatus lrcov_panel_load_csv(const char *path, LrcovPanel **out);

/**
 * Number of observations (rows); 0 for a NULL handle.
 *
 * # Safety
 * `panel` must be NULL or a live panel handle.
 */
size_t lrcov_panel_rows(const LrcovPanel *panel);

/**
 * Number of series (columns); 0 for a NULL handle.
 *
 * # Safety
 * `panel` must be NULL or a live panel handle.
 */
size_t lrcov_panel_cols(const LrcovPanel *panel);

/**
 * Release a panel handle.
 *
 * # Safety
 * `panel` must be NULL or an owned panel handle; the handle is invalid
 * after the call.
 */
void lrcov_panel_free(LrcovPanel *panel);

/**
 * Baseline options: proposed method, hard rule, cross-validated delta,
 * quadratic spectral kernel with the plug-in bandwidth, five blocks.
 */
LrcovEstimateOptions lrcov_estimate_options_default(void);

/**
 * Fit a thresholded covariance estimator on the panel.
 *
 * # Safety
 * `panel` must be a live panel handle, `options` a readable options
 * struct, and `out` a writable `LrcovEstimate *` slot.
 */
LrcovStatus lrcov_estimate(const LrcovPanel *panel,
                           const LrcovEstimateOptions *options,
                           LrcovEstimate **out);

/**
 * Matrix dimension p of a fitted estimate; 0 for a NULL handle.
 *
 * # Safety
 * `est` must be NULL or a live estimate handle.
 */
size_t lrcov_estimate_dim(const LrcovEstimate *est);

/**
 * Threshold constant the estimate was fitted with; NaN for a NULL handle.
 *
 * # Safety
 * `est` must be NULL or a live estimate handle.
 */
double lrcov_estimate_delta(const LrcovEstimate *est);

/**
 * Whether the threshold constant came from cross-validation (1) or was
 * fixed by the caller (0); 0 for a NULL handle.
 *
 * # Safety
 * `est` must be NULL or a live estimate handle.
 */
uint8_t lrcov_estimate_delta_from_cv(const LrcovEstimate *est);

/**
 * Copy the thresholded covariance matrix into `out` (row-major, p*p
 * doubles, caller-allocated).
 *
 * # Safety
 * `est` must be a live estimate handle and `out` writable for p*p doubles.
 */
LrcovStatus lrcov_estimate_matrix(const LrcovEstimate *est, double *out);

/**
 * Copy the entry-wise thresholds lambda_ij into `out` (row-major, p*p
 * doubles, caller-allocated).
 *
 * # Safety
 * `est` must be a live estimate handle and `out` writable for p*p doubles.
 */
LrcovStatus lrcov_estimate_thresholds(const LrcovEstimate *est, double *out);

/**
 * Copy the support mask into `out` (row-major, p*p bytes of 0/1,
 * caller-allocated).
 *
 * # Safety
 * `est` must be a live estimate handle and `out` writable for p*p bytes.
 */
LrcovStatus lrcov_estimate_support(const LrcovEstimate *est, uint8_t *out);

/**
 * Release an estimate handle.
 *
 * # Safety
 * `est` must be NULL or an owned estimate handle; the handle is invalid
 * after the call.
 */
void lrcov_estimate_free(LrcovEstimate *est);

/**
 * Global-minimum-variance weights of a positive definite covariance
 * matrix (`sigma` row-major p*p). Writes p doubles summing to one.
 *
 * # Safety
 * `sigma` must point to p*p readable doubles and `out_weights` to p
 * writable doubles.
 */
LrcovStatus lrcov_gmvp_weights(const double *sigma, size_t p, double *out_weights);

/**
 * Spectral norm (largest absolute eigenvalue) of a symmetric matrix
 * (`sigma` row-major p*p).
 *
 * # Safety
 * `sigma` must point to p*p readable doubles and `out` to one writable
 * double.
 */
LrcovStatus lrcov_spectral_norm(const double *sigma, size_t p, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LRCOV_H */
