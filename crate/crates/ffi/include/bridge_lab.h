#ifndef BRIDGE_LAB_H
#define BRIDGE_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum BlStatus {
  BL_STATUS_OK = 0,
  BL_STATUS_INVALID_ARGUMENT = 1,
  BL_STATUS_NUMERICAL_FAILURE = 2,
  BL_STATUS_NON_CONVERGENCE = 3,
  BL_STATUS_INAPPLICABLE = 4,
  BL_STATUS_NULL_POINTER = 5,
  BL_STATUS_PANIC = 6,
} BlStatus;

/**
 * Opaque signal distribution.
 */
typedef struct BlDist BlDist;

typedef struct BlProx {
  double value;
  double d_du;
  double d_dchi;
} BlProx;

typedef struct BlSeOutcome {
  double sigma_bar;
  double chi_star;
  double amse;
  uint64_t iterations;
  double residual;
} BlSeOutcome;

/**
 * 0 valid, 1 LASSO rate bracket only, 2 inapplicable.
 */
typedef struct BlExpansion {
  double first_term;
  double second_term;
  int32_t validity;
} BlExpansion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a success.
 */
const char *bl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bl_version(void);

/**
 * Parses a distribution from JSON, e.g. `{"kind": "uniform", "theta": 1}`.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out` must be writable.
 */
enum BlStatus bl_dist_from_json(const char *json, struct BlDist **out);

/**
 * Single atom at `value` with probability one.
 *
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_dist_point_mass(double value, struct BlDist **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_dist_two_point(double mu1, double mu2, double alpha, struct BlDist **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_dist_uniform(double theta, struct BlDist **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_dist_exp_tail(double tau, double q0, struct BlDist **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_dist_power_zero(double ell, double cap, struct BlDist **out);

/**
 * Releases a handle; NULL is ignored.
 *
 * # Safety
 * `dist` must come from a `bl_dist_*` constructor and not be used afterwards.
 */
void bl_dist_free(struct BlDist *dist);

/**
 * `E|B|^r`; infinite moments are reported as `+inf` with status Ok.
 *
 * # Safety
 * `dist` must be a live handle; `out` must be writable.
 */
enum BlStatus bl_dist_moment(const struct BlDist *dist, double r, double *out);

/**
 * Proximal map of `chi |x|^q` and its partial derivatives.
 *
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_prox(double u, double chi, double q, struct BlProx *out);

/**
 * Scalar risk at threshold `chi` and noise level `sigma`, default quadrature.
 *
 * # Safety
 * `dist` must be a live handle; `out` must be writable.
 */
enum BlStatus bl_risk(const struct BlDist *dist, double q, double chi, double sigma, double *out);

/**
 * Optimally tuned state-evolution fixed point, default settings.
 *
 * # Safety
 * `dist` must be a live handle; `out` must be writable.
 */
enum BlStatus bl_se_solve(const struct BlDist *dist,
                          double q,
                          double delta,
                          double sigma_w,
                          bool scaled,
                          struct BlSeOutcome *out);

/**
 * Second-order coefficient `C_q`.
 *
 * # Safety
 * `dist` must be a live handle; `out` must be writable.
 */
enum BlStatus bl_cq(const struct BlDist *dist, double q, double *out);

/**
 * Maximizer of `C_q` over `(1, 2]` and the maximum.
 *
 * # Safety
 * `dist` must be a live handle; `q_star` and `cq_max` must be writable.
 */
enum BlStatus bl_q_star(const struct BlDist *dist, double *q_star, double *cq_max);

/**
 * Small-noise expansion at fixed `delta`.
 *
 * # Safety
 * `dist` must be a live handle; `out` must be writable.
 */
enum BlStatus bl_small_noise_expansion(const struct BlDist *dist,
                                       double q,
                                       double delta,
                                       double sigma_w,
                                       struct BlExpansion *out);

/**
 * Large-sample expansion at fixed `sigma_w`.
 *
 * # Safety
 * `dist` must be a live handle; `out` must be writable.
 */
enum BlStatus bl_large_delta_expansion(const struct BlDist *dist,
                                       double q,
                                       double delta,
                                       double sigma_w,
                                       struct BlExpansion *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BRIDGE_LAB_H */
