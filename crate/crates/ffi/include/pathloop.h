#ifndef PATHLOOP_H
#define PATHLOOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum PlStatus {
  PL_STATUS_OK = 0,
  PL_STATUS_NULL_POINTER = 1,
  PL_STATUS_INVALID_ARGUMENT = 2,
  PL_STATUS_DIMENSION_MISMATCH = 3,
  PL_STATUS_ORACLE_FAILED = 4,
  PL_STATUS_SAMPLER_DIVERGED = 5,
  PL_STATUS_WEIGHT_UNDERFLOW = 6,
  PL_STATUS_ASSUMPTION_VIOLATED = 7,
  PL_STATUS_PANIC = 8,
  PL_STATUS_OTHER = 9,
} PlStatus;

typedef enum PlPotentialKind {
  /*
   `ω²|q|²/2`
   */
  PL_POTENTIAL_KIND_HARMONIC = 0,
  /*
   `ω²|q|²/2 + c·cos(k·Σq_i)`
   */
  PL_POTENTIAL_KIND_SOFT_BUMPED = 1,
  /*
   `|q|⁴`
   */
  PL_POTENTIAL_KIND_QUARTIC = 2,
} PlPotentialKind;

typedef enum PlObservableKind {
  PL_OBSERVABLE_KIND_CONSTANT = 0,
  PL_OBSERVABLE_KIND_POSITION = 1,
  PL_OBSERVABLE_KIND_SQUARE = 2,
  PL_OBSERVABLE_KIND_TANH = 3,
  PL_OBSERVABLE_KIND_TANH_SQUARED = 4,
} PlObservableKind;

typedef enum PlCovarianceMethod {
  PL_COVARIANCE_METHOD_SPECTRAL = 0,
  PL_COVARIANCE_METHOD_CLOSED = 1,
  PL_COVARIANCE_METHOD_MEHLER = 2,
} PlCovarianceMethod;

/*
 Opaque observable handle.
 */
typedef struct PlObservable PlObservable;

/*
 Opaque potential handle.
 */
typedef struct PlPotential PlPotential;

/*
 A Monte Carlo estimate. `acceptance` is NaN for the CL estimators.
 */
typedef struct PlEstimate {
  double estimate;
  double std_error;
  double ess;
  uint64_t n_samples;
  uint64_t seed;
  bool ess_warning;
  double acceptance;
} PlEstimate;

typedef struct PlBoundConstants {
  double c0;
  double k1;
  double k2;
  double k;
  double l1;
  double l2;
  double l;
} PlBoundConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty if none. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *pl_last_error_message(void);

/*
 Library version as a NUL-terminated string with static lifetime.
 */
const char *pl_version(void);

/*
 Creates a potential. `omega`, `c` and `k` are ignored where the kind has
 no such parameter.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum PlStatus pl_potential_new(enum PlPotentialKind kind,
                               double omega,
                               double c,
                               double k,
                               size_t dim,
                               double a,
                               double m1,
                               struct PlPotential **out);

/*
 # Safety
 `p` must be null or a handle from [`pl_potential_new`] not yet freed.
 */
void pl_potential_free(struct PlPotential *p);

/*
 `V^a(q) = V(q) − a²|q|²/2` at a point of length `dim`.

 # Safety
 `p` must be a live handle, `q` must point to `dim` doubles and `out` to
 one writable double.
 */
enum PlStatus pl_potential_va(const struct PlPotential *p,
                              const double *q,
                              size_t dim,
                              double *out);

/*
 Creates an observable. `value` is used only by the constant kind.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum PlStatus pl_observable_new(enum PlObservableKind kind,
                                double value,
                                size_t dim,
                                double m2,
                                struct PlObservable **out);

/*
 # Safety
 `o` must be null or a handle from [`pl_observable_new`] not yet freed.
 */
void pl_observable_free(struct PlObservable *o);

/*
 Grid-oracle thermal average for `d = 1`. `q_max ≤ 0` selects the default
 box.

 # Safety
 Handles must be live and `out` must point to one writable double.
 */
enum PlStatus pl_exact_average(const struct PlPotential *p,
                               const struct PlObservable *o,
                               double beta,
                               size_t n_grid,
                               double q_max,
                               double tol,
                               double *out);

/*
 Truncated CL estimate with `n_modes` modes. `n_quad = 0` selects the
 default rule.

 # Safety
 Handles must be live and `out` must point to one writable estimate.
 */
enum PlStatus pl_estimate_cl(const struct PlPotential *p,
                             const struct PlObservable *o,
                             double beta,
                             size_t n_modes,
                             size_t n_quad,
                             size_t n_samples,
                             uint64_t seed,
                             struct PlEstimate *out);

/*
 Discretised CL estimate with `n_modes` modes on `beads` beads.

 # Safety
 Handles must be live and `out` must point to one writable estimate.
 */
enum PlStatus pl_estimate_cl_disc(const struct PlPotential *p,
                                  const struct PlObservable *o,
                                  double beta,
                                  size_t n_modes,
                                  size_t beads,
                                  size_t n_samples,
                                  uint64_t seed,
                                  struct PlEstimate *out);

/*
 Ring-polymer estimate on `beads` beads from four Metropolis-adjusted
 Langevin chains with `n_steps` steps each.

 # Safety
 Handles must be live and `out` must point to one writable estimate.
 */
enum PlStatus pl_estimate_std(const struct PlPotential *p,
                              const struct PlObservable *o,
                              double beta,
                              size_t beads,
                              size_t n_steps,
                              double step_h,
                              uint64_t seed,
                              struct PlEstimate *out);

/*
 Loop covariance `E_ν[x(0)·x(τ)]/d`. `k_max` is used by the spectral
 method only; `tail_bound` may be null.

 # Safety
 `value` must point to one writable double; `tail_bound` may be null.
 */
enum PlStatus pl_covariance(double beta,
                            double a,
                            double tau,
                            enum PlCovarianceMethod method,
                            size_t k_max,
                            double *value,
                            double *tail_bound);

/*
 # Safety
 `out` must point to one writable constants struct.
 */
enum PlStatus pl_bound_constants(double m1,
                                 double m2,
                                 double beta,
                                 size_t dim,
                                 double a,
                                 struct PlBoundConstants *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATHLOOP_H */
