#ifndef OWADJ_H
#define OWADJ_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OwadjStatus {
  OWADJ_STATUS_OK = 0,
  OWADJ_STATUS_NULL_POINTER = 1,
  OWADJ_STATUS_INVALID_ARGUMENT = 2,
  OWADJ_STATUS_IO = 3,
  OWADJ_STATUS_PARSE = 4,
  OWADJ_STATUS_INVALID_DATASET = 5,
  OWADJ_STATUS_SEPARATION = 6,
  OWADJ_STATUS_RANK_DEFICIENT = 7,
  OWADJ_STATUS_NON_CONVERGENCE = 8,
  OWADJ_STATUS_DEGENERATE_WEIGHTS = 9,
  OWADJ_STATUS_BOUNDARY_MEAN = 10,
  OWADJ_STATUS_SINGULAR_MATRIX = 11,
  OWADJ_STATUS_ESTIMAND_REQUIRES_BINARY = 12,
  OWADJ_STATUS_PANIC = 13,
} OwadjStatus;

typedef enum OwadjEstimand {
  OWADJ_ESTIMAND_RD = 0,
  OWADJ_ESTIMAND_LOG_RR = 1,
  OWADJ_ESTIMAND_LOG_OR = 2,
} OwadjEstimand;

/**
 * Opaque trial dataset.
 */
typedef struct OwadjDataset OwadjDataset;

/**
 * Opaque propensity fit.
 */
typedef struct OwadjPropensity OwadjPropensity;

/**
 * Point estimate with its variance and normal-theory interval.
 */
typedef struct OwadjEstimate {
  double point;
  double variance;
  double se;
  double ci_lo;
  double ci_hi;
  double p_value;
  double mu1;
  double mu0;
} OwadjEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *owadj_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *owadj_version(void);

/**
 * Builds a dataset from arrays. `x` is row-major `n × p` and may be NULL
 * when `p == 0`. `binary` selects a binary outcome.
 *
 * # Safety
 * `y` and `z` must point to `n` elements, `x` to `n * p`, `out` to writable storage.
 */
enum OwadjStatus owadj_dataset_new(const double *y,
                                   const uint8_t *z,
                                   const double *x,
                                   size_t n,
                                   size_t p,
                                   bool binary,
                                   struct OwadjDataset **out);

/**
 * Loads a CSV file. `covariates` is a comma-separated list of column names
 * (empty for none).
 *
 * # Safety
 * String arguments must be valid NUL-terminated strings; `out` writable.
 */
enum OwadjStatus owadj_dataset_load_csv(const char *path,
                                        const char *outcome,
                                        const char *treatment,
                                        const char *covariates,
                                        struct OwadjDataset **out);

/**
 * # Safety
 * `ds` must be NULL or a handle from this library not yet freed.
 */
void owadj_dataset_free(struct OwadjDataset *ds);

/**
 * Number of units, or 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live handle.
 */
size_t owadj_dataset_n(const struct OwadjDataset *ds);

/**
 * Number of covariates, or 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live handle.
 */
size_t owadj_dataset_p(const struct OwadjDataset *ds);

/**
 * Fits the logistic propensity model on all covariates.
 *
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum OwadjStatus owadj_propensity_fit(const struct OwadjDataset *ds, struct OwadjPropensity **out);

/**
 * Copies up to `len` fitted propensities into `buf`; returns the number of units.
 *
 * # Safety
 * `fit` must be a live handle; `buf` must hold `len` values or be NULL.
 */
size_t owadj_propensity_scores(const struct OwadjPropensity *fit, double *buf, size_t len);

/**
 * Copies up to `len` coefficients (intercept first) into `buf`; returns `p + 1`.
 *
 * # Safety
 * `fit` must be a live handle; `buf` must hold `len` values or be NULL.
 */
size_t owadj_propensity_coefficients(const struct OwadjPropensity *fit, double *buf, size_t len);

/**
 * # Safety
 * `fit` must be NULL or a handle from this library not yet freed.
 */
void owadj_propensity_free(struct OwadjPropensity *fit);

/**
 * Estimates a treatment effect. `method` is one of `unadj`, `ipw`, `ow`,
 * `att`, `mw`, `lr`, `aipw`.
 *
 * # Safety
 * `ds` must be a live handle, `method` a NUL-terminated string, `out` writable.
 */
enum OwadjStatus owadj_estimate(const struct OwadjDataset *ds,
                                const char *method,
                                enum OwadjEstimand estimand,
                                double level,
                                struct OwadjEstimate *out);

/**
 * Largest absolute weighted difference in covariate means between arms
 * under `scheme` (`ipw`, `ow`, `att`, `mw`).
 *
 * # Safety
 * `ds` must be a live handle, `scheme` a NUL-terminated string, `out` writable.
 */
enum OwadjStatus owadj_max_balance_difference(const struct OwadjDataset *ds,
                                              const char *scheme,
                                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OWADJ_H */
