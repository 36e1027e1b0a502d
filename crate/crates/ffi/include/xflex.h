#ifndef XFLEX_H
#define XFLEX_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum XflexStatus {
  XFLEX_STATUS_OK = 0,
  XFLEX_STATUS_NULL_POINTER = 1,
  /*
   Invalid argument, malformed input or failed validation.
   */
  XFLEX_STATUS_INVALID = 2,
  /*
   An optimizer did not converge.
   */
  XFLEX_STATUS_CONVERGENCE = 3,
  XFLEX_STATUS_IO = 4,
  XFLEX_STATUS_VERSION_MISMATCH = 5,
  /*
   The requested quantile is infinite.
   */
  XFLEX_STATUS_UNBOUNDED = 6,
  XFLEX_STATUS_INTERNAL = 7,
} XflexStatus;

/*
 A fitted per-district model.
 */
typedef struct XflexBundle XflexBundle;

/*
 A predictive count distribution, single-member or ensemble-combined.
 */
typedef struct XflexDist XflexDist;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Load a bundle written by `xflex fit`.

 # Safety
 `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum XflexStatus xflex_bundle_load(const char *path, struct XflexBundle **out);

/*
 # Safety
 `bundle` must come from [`xflex_bundle_load`] and not be used afterwards. Null is ignored.
 */
void xflex_bundle_free(struct XflexBundle *bundle);

/*
 Spliced predictive distribution at one covariate vector of `n` named values.

 # Safety
 `names` and `values` must hold `n` elements; `out` must be writable.
 */
enum XflexStatus xflex_predict(const struct XflexBundle *bundle,
                               const char *const *names,
                               const double *values,
                               size_t n,
                               struct XflexDist **out);

/*
 Ensemble forecast: member `i` has id `member_ids[i]` (0 is HRES) and covariates
 `values[i * n_cov .. (i + 1) * n_cov]` named by `names`.

 # Safety
 `member_ids` must hold `n_members` elements, `values` `n_members * n_cov` and `names` `n_cov`.
 */
enum XflexStatus xflex_predict_ensemble(const struct XflexBundle *bundle,
                                        const uint32_t *member_ids,
                                        size_t n_members,
                                        const char *const *names,
                                        const double *values,
                                        size_t n_cov,
                                        int64_t lead_hours,
                                        struct XflexDist **out);

/*
 # Safety
 `dist` must come from a predict function and not be used afterwards. Null is ignored.
 */
void xflex_dist_free(struct XflexDist *dist);

/*
 `P(Y <= y)`.

 # Safety
 `dist` must be live and `out` writable.
 */
enum XflexStatus xflex_dist_cdf(const struct XflexDist *dist, int64_t y, double *out);

/*
 Smallest count whose cdf reaches `p`.

 # Safety
 `dist` must be live and `out` writable.
 */
enum XflexStatus xflex_dist_quantile(const struct XflexDist *dist, double p, uint64_t *out);

/*
 Green, amber and red probabilities for thresholds `tau_ag < tau_ra`, written to `out[0..3]`.

 # Safety
 `dist` must be live and `out` must have room for three values.
 */
enum XflexStatus xflex_dist_band_probs(const struct XflexDist *dist,
                                       uint64_t tau_ag,
                                       uint64_t tau_ra,
                                       double *out);

/*
 Communicated band for probabilities `(green, amber, red)`: writes 0, 1 or 2.

 # Safety
 `out` must be writable.
 */
enum XflexStatus xflex_assign_band(double green, double amber, double red, uint8_t *out);

/*
 DGP probability mass at `k`.

 # Safety
 `out` must be writable.
 */
enum XflexStatus xflex_dgp_pmf(uint64_t k, double sigma, double xi, double *out);

/*
 DGP cdf at `k`.

 # Safety
 `out` must be writable.
 */
enum XflexStatus xflex_dgp_cdf(uint64_t k, double sigma, double xi, double *out);

/*
 HRES and EPS member weights at a lead time under the default schedule.

 # Safety
 `hres` and `member` must be writable.
 */
enum XflexStatus xflex_member_weights(int64_t lead_hours, double *hres, double *member);

/*
 Message of the last failure on this thread, or null. Valid until the next failing call
 on the same thread; do not free it.
 */
const char *xflex_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XFLEX_H */
