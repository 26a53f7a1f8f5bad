#ifndef GMMV_H
#define GMMV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>



typedef enum GmmvStatus {
  GMMV_STATUS_OK = 0,
  GMMV_STATUS_NULL_POINTER = 1,
  GMMV_STATUS_INVALID_ARGUMENT = 2,
  GMMV_STATUS_CONDITION_INAPPLICABLE = 3,
  GMMV_STATUS_INFEASIBLE = 4,
  GMMV_STATUS_LIMIT_EXCEEDED = 5,
  GMMV_STATUS_NO_SUPPORT_FOUND = 6,
  GMMV_STATUS_IO = 7,
  GMMV_STATUS_PARSE = 8,
  GMMV_STATUS_PANIC = 9,
} GmmvStatus;

/**
 * Opaque measurement ensemble.
 */
typedef struct GmmvEnsemble GmmvEnsemble;

typedef struct GmmvConditionReport {
  double alpha;
  double gamma_col;
  double worst_case_block;
  double worst_case_individual;
  double delta_max;
  double mu_max;
  /**
   * NaN when some local isometry constant is at least one.
   */
  double momp_ratio;
  int eq7_holds;
  int eq8_holds;
  int rank_deficient;
} GmmvConditionReport;

typedef struct GmmvSolveInfo {
  size_t iterations_used;
  /**
   * NaN for the greedy solver.
   */
  double kkt_residual;
  /**
   * NaN unless the constrained solver ran.
   */
  double feasibility_residual;
  int converged;
  size_t support_len;
} GmmvSolveInfo;

typedef struct GmmvSolverOptions {
  double gamma_reg;
  size_t max_iters;
  double tol_obj;
  double tol_feas;
  double admm_rho;
  int polish;
} GmmvSolverOptions;

typedef struct GmmvBound {
  double raw;
  double clamped;
} GmmvBound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *gmmv_last_error(void);

/**
 * `d` independent standard Gaussian `m x n` matrices; `unit_columns != 0`
 * normalizes every column.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum GmmvStatus gmmv_ensemble_gaussian(size_t m,
                                       size_t n,
                                       size_t d,
                                       int unit_columns,
                                       uint64_t seed,
                                       struct GmmvEnsemble **out_handle);

/**
 * Builds an ensemble from `d` column-major `m x n` matrices stored back to back.
 *
 * # Safety
 * `data` must point to `m * n * d` doubles and `out_handle` must be valid.
 */
enum GmmvStatus gmmv_ensemble_from_column_major(size_t m,
                                                size_t n,
                                                size_t d,
                                                const double *data,
                                                struct GmmvEnsemble **out_handle);

/**
 * Loads an ensemble directory written by `gmmv gen ensemble` or [`gmmv_ensemble_save`].
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out_handle` valid.
 */
enum GmmvStatus gmmv_ensemble_load(const char *dir, struct GmmvEnsemble **out_handle);

/**
 * # Safety
 * `handle` must come from this library and `dir` be NUL-terminated.
 */
enum GmmvStatus gmmv_ensemble_save(const struct GmmvEnsemble *handle, const char *dir);

/**
 * # Safety
 * `handle` must come from this library; the output pointers must be valid.
 */
enum GmmvStatus gmmv_ensemble_dims(const struct GmmvEnsemble *handle,
                                   size_t *m,
                                   size_t *n,
                                   size_t *d);

/**
 * Copies matrix `i` into `dst` (`m * n` doubles, column-major).
 *
 * # Safety
 * `handle` must come from this library and `dst` hold `m * n` doubles.
 */
enum GmmvStatus gmmv_ensemble_matrix(const struct GmmvEnsemble *handle, size_t i, double *dst);

/**
 * Releases an ensemble. NULL is ignored.
 *
 * # Safety
 * `handle` must be NULL or come from this library and not be used afterwards.
 */
void gmmv_ensemble_free(struct GmmvEnsemble *handle);

/**
 * # Safety
 * `handle` must come from this library, `support` hold `s` indices and
 * `report` be valid.
 */
enum GmmvStatus gmmv_check_conditions(const struct GmmvEnsemble *handle,
                                      const size_t *support,
                                      size_t s,
                                      struct GmmvConditionReport *report);

/**
 * Writes `delta_i(S)` and `mu_i(S)` for every matrix into buffers of length `d`.
 *
 * # Safety
 * `handle` must come from this library, `support` hold `s` indices, and
 * `delta` and `mu` hold `d` doubles each.
 */
enum GmmvStatus gmmv_local_isometry(const struct GmmvEnsemble *handle,
                                    const size_t *support,
                                    size_t s,
                                    double *delta,
                                    double *mu);

/**
 * Greedy solver. `y` is `m x d` column-major; `x_out` receives `n x d`
 * column-major and `support_out` (capacity `n`) the sorted support.
 * `sparsity == GMMV_NO_SPARSITY` stops on `stop_residual` alone.
 *
 * # Safety
 * All pointers must be valid for the sizes above.
 */
enum GmmvStatus gmmv_momp_solve(const struct GmmvEnsemble *handle,
                                const double *y,
                                size_t sparsity,
                                double stop_residual,
                                double *x_out,
                                size_t *support_out,
                                struct GmmvSolveInfo *info);

/**
 * Library defaults for the convex solvers.
 */
struct GmmvSolverOptions gmmv_solver_options_default(void);

/**
 * Constrained mixed-norm minimization; buffers as for [`gmmv_momp_solve`].
 *
 * # Safety
 * All pointers must be valid for the documented sizes.
 */
enum GmmvStatus gmmv_lopt_solve(const struct GmmvEnsemble *handle,
                                const double *y,
                                const struct GmmvSolverOptions *options,
                                double *x_out,
                                size_t *support_out,
                                struct GmmvSolveInfo *info);

/**
 * Penalized mixed-norm least squares with weight `options->gamma_reg`.
 *
 * # Safety
 * All pointers must be valid for the documented sizes.
 */
enum GmmvStatus gmmv_popt_solve(const struct GmmvEnsemble *handle,
                                const double *y,
                                const struct GmmvSolverOptions *options,
                                double *x_out,
                                size_t *support_out,
                                struct GmmvSolveInfo *info);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum GmmvStatus gmmv_bound_lopt_subgaussian(size_t n,
                                            size_t s,
                                            size_t d,
                                            double alpha,
                                            double gamma_col,
                                            double rho,
                                            double xi,
                                            struct GmmvBound *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum GmmvStatus gmmv_bound_lopt_gaussian(size_t n,
                                         size_t s,
                                         size_t d,
                                         double alpha,
                                         double gamma_col,
                                         double xi,
                                         struct GmmvBound *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum GmmvStatus gmmv_bound_momp(size_t n,
                                size_t s,
                                size_t d,
                                double beta,
                                double rho,
                                double c_sa,
                                struct GmmvBound *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum GmmvStatus gmmv_bound_momp_gaussian(size_t n,
                                         size_t s,
                                         size_t d,
                                         double beta,
                                         double varsigma,
                                         double c_sa,
                                         struct GmmvBound *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum GmmvStatus gmmv_bound_popt_noisy(size_t d,
                                      double alpha,
                                      double gamma_reg,
                                      double xi,
                                      struct GmmvBound *out);

/**
 * Spark of a column-major `m x n` matrix. `*infinite` is set to 1 when every
 * column subset is independent, in which case `*spark_out` is 0.
 *
 * # Safety
 * `a` must hold `m * n` doubles; the output pointers must be valid.
 */
enum GmmvStatus gmmv_spark(const double *a,
                           size_t m,
                           size_t n,
                           size_t max_n,
                           size_t *spark_out,
                           int *infinite);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GMMV_H */
