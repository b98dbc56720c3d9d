#ifndef SKETCHSOLVE_H
#define SKETCHSOLVE_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum SsStatus {
  SS_STATUS_OK = 0,
  /**
   * Null pointer, bad dimensions, unknown method or similar.
   */
  SS_STATUS_INVALID_ARGUMENT = 1,
  SS_STATUS_IO = 2,
  SS_STATUS_PARSE = 3,
  /**
   * The method cannot run on this system (e.g. needs SPD).
   */
  SS_STATUS_INCOMPATIBLE = 4,
  SS_STATUS_NUMERICAL = 5,
  /**
   * Stopped on the iteration or time budget; the iterate is still written.
   */
  SS_STATUS_BUDGET_EXHAUSTED = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  SS_STATUS_PANIC = 7,
} SsStatus;

/**
 * Opaque problem handle.
 */
typedef struct SsProblem SsProblem;

typedef struct SsSolveOptions {
  double tolerance;
  uint64_t max_iters;
  double max_seconds;
  uint64_t seed;
  /**
   * 0 keeps the method's default block size.
   */
  size_t block_size;
} SsSolveOptions;

typedef struct SsSolveInfo {
  uint64_t iterations;
  /**
   * Final value of the stopping metric.
   */
  double final_metric;
  bool converged;
} SsSolveInfo;

typedef struct SsRate {
  double rho;
  double rho_lower_bound;
  /**
   * NaN when the law is not discrete.
   */
  double rho_convenient;
  /**
   * `u64::MAX` when the rate is 1.
   */
  uint64_t iteration_complexity;
  bool ez_positive_definite;
} SsRate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Defaults: tolerance 1e-4, 10⁶ iterations, 300 s, seed 0.
 */
struct SsSolveOptions ss_default_solve_options(void);

/**
 * Builds `Ax = b` from a row-major `rows × cols` array and `b` of length `rows`.
 *
 * # Safety
 * `a` must hold `rows * cols` values, `b` `rows` values, `out` must be writable.
 */
enum SsStatus ss_problem_from_dense(size_t rows,
                                    size_t cols,
                                    const double *a,
                                    const double *b,
                                    struct SsProblem **out);

/**
 * Builds a sparse system from `nnz` coordinate triplets (0-based).
 *
 * # Safety
 * The index and value arrays must hold `nnz` entries, `b` `rows` values.
 */
enum SsStatus ss_problem_from_triplets(size_t rows,
                                       size_t cols,
                                       size_t nnz,
                                       const size_t *row_idx,
                                       const size_t *col_idx,
                                       const double *values,
                                       const double *b,
                                       struct SsProblem **out);

/**
 * Reads a Matrix Market file. With `rhs_path` null, `b = A·x*` for a
 * random `x*` drawn from `seed`, and `x*` is kept.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `rhs_path` may be null.
 */
enum SsStatus ss_problem_read_mtx(const char *path,
                                  const char *rhs_path,
                                  uint64_t seed,
                                  struct SsProblem **out);

/**
 * Generates a test problem from a spec such as `gaussian:100x20`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string.
 */
enum SsStatus ss_problem_generate(const char *spec, uint64_t seed, struct SsProblem **out);

/**
 * # Safety
 * `p` must come from one of the constructors, or be null.
 */
size_t ss_problem_rows(const struct SsProblem *p);

/**
 * # Safety
 * `p` must come from one of the constructors, or be null.
 */
size_t ss_problem_cols(const struct SsProblem *p);

/**
 * Copies the known solution into `x` (length `cols`). Fails with
 * `INVALID_ARGUMENT` when the problem carries none.
 *
 * # Safety
 * `x` must have room for `len` values.
 */
enum SsStatus ss_problem_solution(const struct SsProblem *p, double *x, size_t len);

/**
 * # Safety
 * `p` must come from one of the constructors and not be used afterwards.
 */
void ss_problem_free(struct SsProblem *p);

/**
 * Runs `method` (e.g. `"rk"`, `"cd-pd"`, `"gauss-ls"`) from `x = 0`.
 * The final iterate goes to `x` (length `cols`); `opts` and `info` may be null.
 *
 * # Safety
 * `p` must be a live handle, `method` a NUL-terminated string and `x`
 * writable for `len` values.
 */
enum SsStatus ss_solve(const struct SsProblem *p,
                       const char *method,
                       const struct SsSolveOptions *opts,
                       double *x,
                       size_t len,
                       struct SsSolveInfo *info);

/**
 * Convergence rate of `method` on this problem. Gaussian methods need
 * `mc_samples > 0`.
 *
 * # Safety
 * `p` must be a live handle, `method` a NUL-terminated string, `out` writable.
 */
enum SsStatus ss_rate(const struct SsProblem *p,
                      const char *method,
                      double epsilon,
                      size_t mc_samples,
                      uint64_t seed,
                      struct SsRate *out);

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into this library on the same thread.
 */
const char *ss_last_error(void);

/**
 * Static, NUL-terminated.
 */
const char *ss_version(void);

/**
 * Stable name of a status code, e.g. `"INVALID_ARGUMENT"`; `"UNKNOWN"`
 * for values outside the enum.
 */
const char *ss_status_name(int32_t status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKETCHSOLVE_H */
