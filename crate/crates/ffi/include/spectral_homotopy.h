#ifndef SPECTRAL_HOMOTOPY_H
#define SPECTRAL_HOMOTOPY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum SphStatus {
  SPH_STATUS_OK = 0,
  // A required pointer argument was null.
  SPH_STATUS_NULL_POINTER = 1,
  // Malformed arguments: sizes, shapes or option values.
  SPH_STATUS_INVALID_INPUT = 2,
  // Data outside the admissible sets (stability, positivity, range membership, feasibility).
  SPH_STATUS_NOT_ADMISSIBLE = 3,
  // A numerical solver did not converge or the problem is too ill-conditioned.
  SPH_STATUS_SOLVER_FAILURE = 4,
  // An output buffer is shorter than required.
  SPH_STATUS_BUFFER_TOO_SMALL = 5,
  // An index is out of bounds.
  SPH_STATUS_OUT_OF_RANGE = 6,
  // A Rust panic was caught at the boundary.
  SPH_STATUS_PANIC = 7,
} SphStatus;

// Scalar field of a filter bank.
typedef enum SphField {
  SPH_FIELD_REAL = 0,
  SPH_FIELD_COMPLEX = 1,
} SphField;

// Filter bank `G(z) = (zI - A)^{-1} B`.
typedef struct SphFilter SphFilter;

// Accepted samples of a continuation run.
typedef struct SphPath SphPath;

// Scalar prior density `ψ = |σ|²`.
typedef struct SphPrior SphPrior;

// Continuation settings, see [`sph_continuation_default_options`].
typedef struct SphContinuationOptions {
  double dt;
  double newton_tol;
  size_t max_newton;
  double min_dt;
  size_t grid_n;
} SphContinuationOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message on this thread, or null. Valid until the next call into the library.
const char *sph_last_error(void);

// Library version as a static NUL-terminated string.
const char *sph_version(void);

// Covariance-extension bank with `m` channels and `p` lags (`n = m (p + 1)`).
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum SphStatus sph_filter_covext(size_t m, size_t p, enum SphField field, struct SphFilter **out);

// Filter bank from an `n x n` matrix `A` and an `n x m` matrix `B`.
//
// # Safety
// `a` and `b` must hold `n*n` and `n*m` entries in the layout of `field`; `out` must be valid.
enum SphStatus sph_filter_new(const double *a,
                              const double *b,
                              size_t n,
                              size_t m,
                              enum SphField field,
                              struct SphFilter **out);

// State dimension `n`, or 0 for a null handle.
//
// # Safety
// `filter` must be null or a live handle.
size_t sph_filter_n(const struct SphFilter *filter);

// Input dimension `m`, or 0 for a null handle.
//
// # Safety
// `filter` must be null or a live handle.
size_t sph_filter_m(const struct SphFilter *filter);

// # Safety
// `filter` must be null or a handle not yet freed.
void sph_filter_free(struct SphFilter *filter);

// Prior `ψ = |b(z)|²` for real coefficients `b_0 + b_1 z^{-1} + …` with roots inside the unit disk.
//
// # Safety
// `b` must hold `len` doubles; `out` must be valid.
enum SphStatus sph_prior_polynomial(const double *b,
                                    size_t len,
                                    struct SphPrior **out);

// Constant prior `ψ ≡ value`, `value > 0`.
//
// # Safety
// `out` must be valid.
enum SphStatus sph_prior_constant(double value, struct SphPrior **out);

// Prior density at `e^{iθ}`, or NaN for a null handle.
//
// # Safety
// `prior` must be null or a live handle.
double sph_prior_density(const struct SphPrior *prior, double theta);

// # Safety
// `prior` must be null or a handle not yet freed.
void sph_prior_free(struct SphPrior *prior);

// Moment `g(ψ, C)`: `c` is `m x n`, `sigma_out` receives `n x n`.
//
// # Safety
// Handles must be live; `c` must hold `m*n` entries; `sigma_out` must hold `sigma_len` doubles.
enum SphStatus sph_moment_g(const struct SphFilter *filter,
                            const struct SphPrior *prior,
                            const double *c,
                            double *sigma_out,
                            size_t sigma_len);

// Maximum-entropy factor `C` (`m x n`) with `g(1, C) = Σ`.
//
// # Safety
// `filter` must be live; `sigma` must hold `n*n` entries; `c_out` must hold `c_len` doubles.
enum SphStatus sph_maxent(const struct SphFilter *filter,
                          const double *sigma,
                          double *c_out,
                          size_t c_len);

// `h(Λ)`: factor parameter (`m x n`) of a `Λ` (`n x n`) in `Range Γ ∩ L+`.
//
// # Safety
// `filter` must be live; `lambda` must hold `n*n` entries; `c_out` must hold `c_len` doubles.
enum SphStatus sph_h_map(const struct SphFilter *filter,
                         const double *lambda,
                         double *c_out,
                         size_t c_len);

// `h^{-1}(C)`: projection of `C* C` onto `Range Γ`.
//
// # Safety
// `filter` must be live; `c` must hold `m*n` entries; `lambda_out` must hold `lambda_len` doubles.
enum SphStatus sph_h_inverse(const struct SphFilter *filter,
                             const double *c,
                             double *lambda_out,
                             size_t lambda_len);

// Condition numbers of the Jacobians of `g` at `C` and of `f` at `h^{-1}(C)`.
//
// `dtheta > 0` selects quadrature with that grid step; `dtheta <= 0` selects the state-space method.
//
// # Safety
// Handles must be live; `c` must hold `m*n` entries; output pointers must be valid.
enum SphStatus sph_condition_numbers(const struct SphFilter *filter,
                                     const struct SphPrior *prior,
                                     const double *c,
                                     double dtheta,
                                     double *cond_f,
                                     double *cond_g);

// Default continuation settings.
struct SphContinuationOptions sph_continuation_default_options(void);

// Traces the solution curve from the maximum-entropy factor to the prior `ψ`.
//
// If the step floor is reached the accepted part of the path is still returned together with
// [`SphStatus::SolverFailure`]; query it with [`sph_path_failure`]. `options` may be null.
//
// # Safety
// Handles must be live; `sigma` must hold `n*n` entries; `out` must be valid.
enum SphStatus sph_run_continuation(const struct SphFilter *filter,
                                    const struct SphPrior *prior,
                                    const double *sigma,
                                    const struct SphContinuationOptions *options,
                                    struct SphPath **out);

// Number of accepted samples (including `t = 0`), or 0 for a null handle.
//
// # Safety
// `path` must be null or a live handle.
size_t sph_path_len(const struct SphPath *path);

// Number of rejected step attempts, or 0 for a null handle.
//
// # Safety
// `path` must be null or a live handle.
size_t sph_path_rejected(const struct SphPath *path);

// Reason the run stopped early, or null if it reached `t = 1`. Owned by the handle.
//
// # Safety
// `path` must be null or a live handle.
const char *sph_path_failure(const struct SphPath *path);

// Homotopy parameter, residual and Newton iteration count of sample `k`. Output pointers may be null.
//
// # Safety
// `path` must be live; non-null output pointers must be valid.
enum SphStatus sph_path_sample(const struct SphPath *path,
                               size_t k,
                               double *t,
                               double *residual,
                               size_t *newton_iters);

// Factor parameter `C` (`m x n`) of sample `k`.
//
// # Safety
// `path` must be live; `c_out` must hold `c_len` doubles.
enum SphStatus sph_path_c(const struct SphPath *path, size_t k, double *c_out, size_t c_len);

// # Safety
// `path` must be null or a handle not yet freed.
void sph_path_free(struct SphPath *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECTRAL_HOMOTOPY_H */
