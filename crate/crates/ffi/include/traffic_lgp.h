#ifndef TRAFFIC_LGP_H
#define TRAFFIC_LGP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum TlStatus {
  TL_STATUS_OK = 0,
  // Bad argument or configuration.
  TL_STATUS_INVALID_ARGUMENT = 1,
  // Unreadable or malformed input data.
  TL_STATUS_DATA = 2,
  // Factorization or Cholesky failure.
  TL_STATUS_NUMERICAL = 3,
  // A required pointer was null.
  TL_STATUS_NULL_POINTER = 4,
  // Internal panic caught at the boundary.
  TL_STATUS_PANIC = 5,
} TlStatus;

// Model variants, in the order gp, gp+, lgp, lgp+, lgr, lgr+.
typedef enum TlVariant {
  TL_VARIANT_GP = 0,
  TL_VARIANT_GP_SIDE = 1,
  TL_VARIANT_LGP = 2,
  TL_VARIANT_LGP_SIDE = 3,
  TL_VARIANT_LGR = 4,
  TL_VARIANT_LGR_SIDE = 5,
} TlVariant;

// NMF result handle.
typedef struct TlFactorization TlFactorization;

// Road network handle.
typedef struct TlNetwork TlNetwork;

// Trained predictor handle.
typedef struct TlPredictor TlPredictor;

// Speed observation handle.
typedef struct TlSpeeds TlSpeeds;

// Predictor settings. Obtain defaults from [`tl_predictor_config_default`].
typedef struct TlPredictorConfig {
  // A [`TlVariant`] value.
  uint32_t variant;
  // Clusters per axis (lgp) or grid cells per axis (lgr).
  size_t k;
  double lambda;
  size_t t_max;
  uint64_t seed;
  size_t nmf_max_iters;
  // Marginal-likelihood evaluations per GP fit.
  size_t gp_budget;
  // Fraction of covered segments used as training rows.
  double train_fraction;
  // Non-zero to fit local GPs in parallel.
  uint8_t parallel;
} TlPredictorConfig;

// Prediction for one query.
typedef struct TlPrediction {
  double mean;
  double variance;
  size_t cluster_i;
  size_t cluster_j;
  // Non-zero when the query was served by the global GP.
  uint8_t fallback;
} TlPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *tl_last_error(void);

// Library version as a static NUL-terminated string.
const char *tl_version(void);

// Reads a road network CSV.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum TlStatus tl_network_load(const char *path, struct TlNetwork **out);

// Number of segments in the network (0 for null).
//
// # Safety
// `network` must be null or a live handle.
size_t tl_network_segment_count(const struct TlNetwork *network);

// # Safety
// `network` must be null or a handle not yet freed.
void tl_network_free(struct TlNetwork *network);

// Reads speed observations for segments of `network`.
//
// # Safety
// `path` must be a NUL-terminated string, `network` a live handle and
// `out` a writable pointer.
enum TlStatus tl_speeds_load(const char *path,
                             uint32_t interval_minutes,
                             const struct TlNetwork *network,
                             struct TlSpeeds **out);

// Number of stored observations (0 for null).
//
// # Safety
// `speeds` must be null or a live handle.
size_t tl_speeds_observation_count(const struct TlSpeeds *speeds);

// # Safety
// `speeds` must be null or a handle not yet freed.
void tl_speeds_free(struct TlSpeeds *speeds);

// Default settings for a [`TlVariant`] value; unknown values fall back to
// lgp.
struct TlPredictorConfig tl_predictor_config_default(uint32_t variant);

// Learns a predictor from the window ending at `trial_hour` of `test_day`
// (`YYYY-MM-DD`, or null for the latest weekday with a full window). The
// training rows are the seeded split used by the experiment runner.
//
// # Safety
// Handles must be live, `config` and `out` valid pointers and `test_day`
// null or a NUL-terminated string.
enum TlStatus tl_predictor_learn(const struct TlNetwork *network,
                                 const struct TlSpeeds *speeds,
                                 const char *test_day,
                                 uint32_t trial_hour,
                                 const struct TlPredictorConfig *config,
                                 struct TlPredictor **out);

// Predicts `n` queries `(segments[q], intervals[q])` into `out[0..n]`.
//
// # Safety
// `predictor` must be live; `segments` must hold `n` NUL-terminated
// strings, `intervals` `n` values and `out` room for `n` results.
enum TlStatus tl_predictor_predict(const struct TlPredictor *predictor,
                                   const char *const *segments,
                                   const size_t *intervals,
                                   size_t n,
                                   struct TlPrediction *out);

// Number of GP fits performed so far (0 for null).
//
// # Safety
// `predictor` must be null or a live handle.
size_t tl_predictor_fits(const struct TlPredictor *predictor);

// # Safety
// `predictor` must be null or a handle not yet freed.
void tl_predictor_free(struct TlPredictor *predictor);

// RMSE, MAE and MAPE of `n` paired values. MAPE skips truths below 1.
//
// # Safety
// `y` and `y_hat` must hold `n` values; outputs must be writable.
enum TlStatus tl_metrics(const double *y,
                         const double *y_hat,
                         size_t n,
                         double *rmse,
                         double *mae,
                         double *mape);

// Two-sided Wilcoxon signed-rank test of `n` pairs.
//
// # Safety
// `a` and `b` must hold `n` values; outputs must be writable.
enum TlStatus tl_wilcoxon(const double *a,
                          const double *b,
                          size_t n,
                          double *statistic,
                          double *p_value);

// Factorizes a row-major `rows × cols` matrix. `mask` (same layout,
// non-zero = observed) may be null for a fully observed matrix.
//
// # Safety
// `values` must hold `rows·cols` values, `mask` null or as many bytes, and
// `out` must be writable.
enum TlStatus tl_nmf_factorize(const double *values,
                               const uint8_t *mask,
                               size_t rows,
                               size_t cols,
                               size_t k,
                               double lambda,
                               uint64_t seed,
                               size_t max_iters,
                               struct TlFactorization **out);

// Copies W (`rows × k`, row-major) into `dst`, which holds `len` values.
//
// # Safety
// `f` must be live and `dst` writable for `len` values.
enum TlStatus tl_factorization_w(const struct TlFactorization *f, double *dst, size_t len);

// Copies H (`k × cols`, row-major) into `dst`, which holds `len` values.
//
// # Safety
// `f` must be live and `dst` writable for `len` values.
enum TlStatus tl_factorization_h(const struct TlFactorization *f, double *dst, size_t len);

// Rank K of the factorization (0 for null).
//
// # Safety
// `f` must be null or a live handle.
size_t tl_factorization_k(const struct TlFactorization *f);

// Final masked squared residual (NaN for null).
//
// # Safety
// `f` must be null or a live handle.
double tl_factorization_residual(const struct TlFactorization *f);

// # Safety
// `f` must be null or a handle not yet freed.
void tl_factorization_free(struct TlFactorization *f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAFFIC_LGP_H */
