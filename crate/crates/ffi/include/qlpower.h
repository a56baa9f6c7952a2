#ifndef QLPOWER_H
#define QLPOWER_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum {
  QLP_STATUS_OK = 0,
  QLP_STATUS_NULL_POINTER = 1,
  QLP_STATUS_INVALID_INPUT = 2,
  QLP_STATUS_DOMAIN_ERROR = 3,
  QLP_STATUS_SINGULAR = 4,
  QLP_STATUS_NON_CONVERGENCE = 5,
  QLP_STATUS_TOO_SMALL_EFFECT = 6,
  QLP_STATUS_BUFFER_TOO_SMALL = 7,
  QLP_STATUS_PANIC = 8,
} QlpStatus;

typedef enum {
  QLP_LINK_LOG = 0,
  QLP_LINK_IDENTITY = 1,
} QlpLink;

typedef enum {
  QLP_VARIANCE_UNIT = 0,
  QLP_VARIANCE_MEAN = 1,
  QLP_VARIANCE_MEAN_SQUARED = 2,
} QlpVariance;

typedef enum {
  QLP_OUTCOME_KIND_COUNT = 0,
  QLP_OUTCOME_KIND_POSITIVE = 1,
  QLP_OUTCOME_KIND_REAL = 2,
} QlpOutcomeKind;

/**
 * Opaque dataset.
 */
typedef struct QlpDataset QlpDataset;

/**
 * Opaque fitted model.
 */
typedef struct QlpFit QlpFit;

/**
 * Opaque model specification.
 */
typedef struct QlpModel QlpModel;

/**
 * Effect sizes from a Monte Carlo evaluation.
 */
typedef struct {
  double f2;
  double phi;
  double r2;
  double f2_phi;
  double f2_r;
  double w_one;
  double mean_y;
  double mc_se_f2;
} QlpEffectSizes;

typedef struct {
  double statistic;
  uint32_t df;
  double critical_value;
  bool reject;
} QlpTestReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *qlp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qlp_version(void);

/**
 * Non-centrality reaching `power` for a level-`alpha` χ² test on `df` degrees of freedom.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
QlpStatus qlp_ncp_for_power(uint32_t df, double alpha, double power, double *out);

/**
 * Asymptotic power with `n` observations at effect `f2`.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
QlpStatus qlp_power(double f2, uint64_t n, uint32_t df, double alpha, double *out);

/**
 * Smallest n reaching `power` at effect `f2`.
 *
 * # Safety
 * `out` must be a valid pointer to a uint64_t.
 */
QlpStatus qlp_sample_size(double f2, uint32_t df, double alpha, double power, uint64_t *out);

/**
 * f² implied by 2SLiP `phi` with weight `w_one` at the outcome mean.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
QlpStatus qlp_f2_from_phi(double phi, double w_one, double *out);

/**
 * f² implied by P2R2 `r2`.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
QlpStatus qlp_f2_from_r2(double r2, double *out);

/**
 * Creates a model. `lambda` has `r` entries (intercept first), `beta` has `p`.
 *
 * # Safety
 * `lambda` and `beta` must point to `r` and `p` doubles; `out` must be valid.
 */
QlpStatus qlp_model_new(QlpLink link_fn,
                        QlpVariance variance_fn,
                        double sigma2,
                        const double *lambda,
                        size_t r,
                        const double *beta,
                        size_t p,
                        QlpModel **out);

/**
 * # Safety
 * `model` must come from `qlp_model_new` and not be used afterwards. NULL is ignored.
 */
void qlp_model_free(QlpModel *model);

/**
 * Effect sizes over the copula design (uniform adjustor, `n_categories`-level
 * predictor, latent correlation `rho`) from `mc_size` draws of `seed`.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
QlpStatus qlp_effect_sizes(const QlpModel *model,
                           double rho,
                           size_t n_categories,
                           size_t mc_size,
                           uint64_t seed,
                           QlpEffectSizes *out);

/**
 * Creates a dataset. `z` is n×r row-major with a leading column of ones,
 * `x` is n×p row-major.
 *
 * # Safety
 * `y`, `z` and `x` must point to n, n·r and n·p doubles; `out` must be valid.
 */
QlpStatus qlp_dataset_new(const double *y,
                          size_t n,
                          const double *z,
                          size_t r,
                          const double *x,
                          size_t p,
                          QlpOutcomeKind kind,
                          QlpDataset **out);

/**
 * # Safety
 * `data` must come from `qlp_dataset_new` and not be used afterwards. NULL is ignored.
 */
void qlp_dataset_free(QlpDataset *data);

/**
 * Fits the full model by IRLS with Pearson dispersion. A fit that stops at
 * the iteration limit returns `NonConvergence` and no handle.
 *
 * # Safety
 * `data` must be a live handle and `out` a valid pointer.
 */
QlpStatus qlp_fit(const QlpDataset *data, QlpLink link_fn, QlpVariance variance_fn, QlpFit **out);

/**
 * # Safety
 * `fit` must come from `qlp_fit` and not be used afterwards. NULL is ignored.
 */
void qlp_fit_free(QlpFit *fit);

/**
 * Copies (λ̂, β̂) into `buf`. `needed` receives r + p; a short buffer
 * returns `BufferTooSmall` without writing.
 *
 * # Safety
 * `fit` must be live, `buf` must hold `len` doubles, `needed` may be NULL.
 */
QlpStatus qlp_fit_coefficients(const QlpFit *fit, double *buf, size_t len, size_t *needed);

/**
 * Pearson dispersion estimate.
 *
 * # Safety
 * `fit` must be live and `out` valid.
 */
QlpStatus qlp_fit_sigma2(const QlpFit *fit, double *out);

/**
 * Wald test of β = 0 at level `alpha`.
 *
 * # Safety
 * `fit` must be live and `out` valid.
 */
QlpStatus qlp_fit_wald(const QlpFit *fit, double alpha, QlpTestReport *out);

/**
 * Pilot analysis of CSV text with a JSON mapping over the default δ grid.
 * `out_json` receives a string to release with `qlp_string_free`.
 *
 * # Safety
 * `csv` and `mapping_json` must be NUL-terminated; `out_json` must be valid.
 */
QlpStatus qlp_pilot_json(const char *csv,
                         const char *mapping_json,
                         double alpha,
                         double power,
                         char **out_json);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. NULL is ignored.
 */
void qlp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QLPOWER_H */
