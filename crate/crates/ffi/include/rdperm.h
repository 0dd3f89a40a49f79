#ifndef RDPERM_H
#define RDPERM_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define RDP_OK 0

#define RDP_NULL_POINTER 1

#define RDP_INVALID_ARGUMENT 2

#define RDP_DATA_ERROR 3

#define RDP_DEGENERATE_WINDOW 4

#define RDP_COMPUTATION_ERROR 5

#define RDP_PANIC 6

#define RDP_MODEL_CONSTANT 0

#define RDP_MODEL_LINEAR 1

#define RDP_MODEL_QUADRATIC 2

#define RDP_STAT_DIFF_MEANS 0

#define RDP_STAT_ABS_DIFF_MEANS 1

#define RDP_STAT_SUM_CROSS 2

#define RDP_STAT_RANK_STUDENTIZED 3

#define RDP_COVARIATE_INFER -1

#define RDP_COVARIATE_CONTINUOUS 0

#define RDP_COVARIATE_BINARY 1

/**
 * Unit-level data: running variable, optional outcome, covariates.
 */
typedef struct RdpFrame RdpFrame;

/**
 * Result of a confidence-interval inversion.
 */
typedef struct RdpInference RdpInference;

/**
 * Analysis window around the cutoff. Pass a null pointer for all units.
 */
typedef struct RdpWindow {
  /**
   * Bandwidth below the cutoff; infinity for no limit.
   */
  double left;
  /**
   * Bandwidth above the cutoff; infinity for no limit.
   */
  double right;
  /**
   * Running-variable values to leave out; may be null when `n_exclude` is 0.
   */
  const double *exclude;
  size_t n_exclude;
} RdpWindow;

/**
 * Permutation settings.
 */
typedef struct RdpPlan {
  uint64_t seed;
  /**
   * Monte Carlo draws when enumeration is too large.
   */
  uint64_t draws;
  /**
   * Enumerate when there are at most this many assignments.
   */
  uint64_t max_exact;
  /**
   * One of the `RDP_STAT_*` constants.
   */
  int32_t statistic;
  /**
   * Nonzero for an upper-tail test, zero for two-sided.
   */
  int32_t upper_tail;
} RdpPlan;

/**
 * Headline numbers of an [`RdpInference`]. Unbounded limits are infinite;
 * both limits are NaN when the confidence set is empty.
 */
typedef struct RdpSummary {
  double p_null;
  double ci_lower;
  double ci_upper;
  double hl;
  size_t n;
  size_t n_treated;
  size_t n_control;
  int32_t ci_empty;
} RdpSummary;

/**
 * Density test output; undefined values are NaN.
 */
typedef struct RdpDensityTest {
  double theta;
  double se;
  double p_value;
  double bin_width;
  double bandwidth;
  size_t n;
} RdpDensityTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rdp_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into the library on the same thread.
 */
const char *rdp_last_error_message(void);

/**
 * Builds a frame from arrays of length `n`. `y` may be null.
 *
 * # Safety
 * `r` (and `y` when non-null) must point to `n` doubles; `out` must be writable.
 */
int32_t rdp_frame_new(const double *r,
                      const double *y,
                      size_t n,
                      double cutoff,
                      int32_t treated_above,
                      struct RdpFrame **out);

/**
 * Reads a headed CSV file. `outcome` and `covariates` may be null; the
 * latter is a comma-separated list of column names.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
int32_t rdp_frame_load_csv(const char *path,
                           const char *running,
                           const char *outcome,
                           const char *covariates,
                           double cutoff,
                           int32_t treated_above,
                           struct RdpFrame **out);

/**
 * Adds a covariate column of length equal to the frame. `kind` is one of
 * the `RDP_COVARIATE_*` constants.
 *
 * # Safety
 * `frame` must be a live handle, `name` NUL-terminated, `values` `n` doubles.
 */
int32_t rdp_frame_add_covariate(struct RdpFrame *frame,
                                const char *name,
                                const double *values,
                                size_t n,
                                int32_t kind);

/**
 * Number of units in the frame, or 0 for a null handle.
 *
 * # Safety
 * `frame` must be null or a live handle.
 */
size_t rdp_frame_len(const struct RdpFrame *frame);

/**
 * # Safety
 * `frame` must be null or a handle not yet freed.
 */
void rdp_frame_free(struct RdpFrame *frame);

/**
 * Permutation p-value of the constant-effect hypothesis `tau0`.
 *
 * # Safety
 * Pointers must be valid as documented on the types; `p_out` writable.
 */
int32_t rdp_test_effect(const struct RdpFrame *frame,
                        const struct RdpWindow *window,
                        int32_t model_code,
                        const struct RdpPlan *plan_in,
                        double tau0,
                        double *p_out);

/**
 * Confidence interval by test inversion on the default grid, with the
 * Hodges–Lehmann estimate and the test of no effect.
 *
 * # Safety
 * Pointers must be valid as documented on the types; `out` writable.
 */
int32_t rdp_invert_ci(const struct RdpFrame *frame,
                      const struct RdpWindow *window,
                      int32_t model_code,
                      const struct RdpPlan *plan_in,
                      double alpha,
                      struct RdpInference **out);

/**
 * # Safety
 * `inference` must be a live handle and `out` writable.
 */
int32_t rdp_inference_summary(const struct RdpInference *inference, struct RdpSummary *out);

/**
 * Full result as JSON. Release the string with [`rdp_string_free`].
 *
 * # Safety
 * `inference` must be a live handle and `out` writable.
 */
int32_t rdp_inference_json(const struct RdpInference *inference, char **out);

/**
 * # Safety
 * `inference` must be null or a handle not yet freed.
 */
void rdp_inference_free(struct RdpInference *inference);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void rdp_string_free(char *s);

/**
 * `z'(I-H)y / z'(I-H)z` for the given least-squares model; `z` holds 0/1.
 *
 * # Safety
 * `r`, `y` and `z` must point to `n` values; `out` writable.
 */
int32_t rdp_hl_closed_form(const double *r,
                           const double *y,
                           const uint8_t *z,
                           size_t n,
                           int32_t model_code,
                           double *out);

/**
 * Combined χ² p-value of the covariate balance test, with linear models
 * for continuous covariates and logistic models for binary ones.
 *
 * # Safety
 * Pointers must be valid as documented on the types; `p_out` writable.
 */
int32_t rdp_balance_p(const struct RdpFrame *frame, const struct RdpWindow *window, double *p_out);

/**
 * Density test at the cutoff. Nonpositive `bin_width` or `bandwidth`
 * selects the automatic choice.
 *
 * # Safety
 * Pointers must be valid as documented on the types; `out` writable.
 */
int32_t rdp_density_test(const struct RdpFrame *frame,
                         const struct RdpWindow *window,
                         double bin_width,
                         double bandwidth,
                         struct RdpDensityTest *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RDPERM_H */
