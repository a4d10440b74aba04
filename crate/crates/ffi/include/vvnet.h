/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef VVNET_H
#define VVNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VvStatus {
  VV_STATUS_OK = 0,
  VV_STATUS_NULL_POINTER = 1,
  VV_STATUS_INVALID_ARGUMENT = 2,
  VV_STATUS_SHAPE = 3,
  VV_STATUS_NON_FINITE = 4,
  VV_STATUS_NO_CONVERGENCE = 5,
  VV_STATUS_INFEASIBLE = 6,
  VV_STATUS_BOUND_VIOLATION = 7,
  VV_STATUS_FORMAT = 8,
  VV_STATUS_IO = 9,
  VV_STATUS_PANIC = 10,
} VvStatus;

/**
 * A tensor container read from disk.
 */
typedef struct VvContainer VvContainer;

/**
 * Dense row-major matrix of doubles.
 */
typedef struct VvMatrix VvMatrix;

/**
 * Output of a multi-task lasso solve.
 */
typedef struct VvSolution VvSolution;

/**
 * Scalar summary of a solution.
 */
typedef struct VvSolutionInfo {
  double objective;
  double kkt_residual;
  size_t iterations;
  size_t support_size;
  bool converged;
} VvSolutionInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread; empty after a success. The
 * pointer stays valid until the next call on the same thread.
 */
const char *vv_last_error(void);

/**
 * Copies `rows * cols` row-major values into a new matrix.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles; `out` must be writable.
 */
enum VvStatus vv_matrix_new(size_t rows, size_t cols, const double *data, struct VvMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void vv_matrix_free(struct VvMatrix *m);

/**
 * # Safety
 * `m` must be a live handle; `rows` and `cols` must be writable.
 */
enum VvStatus vv_matrix_shape(const struct VvMatrix *m, size_t *rows, size_t *cols);

/**
 * Copies the row-major values into `buf`, which must hold `len` doubles
 * with `len` equal to rows × cols.
 *
 * # Safety
 * `m` must be a live handle and `buf` must point to `len` writable doubles.
 */
enum VvStatus vv_matrix_copy(const struct VvMatrix *m, double *buf, size_t len);

/**
 * Solves `min 1/(ND)‖VΦ − Ψ‖² + λ Σ‖vₖ‖` with default settings.
 *
 * # Safety
 * `phi` and `psi` must be live handles; `out` must be writable.
 */
enum VvStatus vv_solve_regularized(const struct VvMatrix *phi,
                                   const struct VvMatrix *psi,
                                   double lambda,
                                   struct VvSolution **out);

/**
 * Solves `min Σ‖vₖ‖ s.t. VΦ = Ψ` with default settings.
 *
 * # Safety
 * `phi` and `psi` must be live handles; `out` must be writable.
 */
enum VvStatus vv_solve_constrained(const struct VvMatrix *phi,
                                   const struct VvMatrix *psi,
                                   struct VvSolution **out);

/**
 * # Safety
 * `sol` must be a live handle; `info` must be writable.
 */
enum VvStatus vv_solution_info(const struct VvSolution *sol, struct VvSolutionInfo *info);

/**
 * Copies the solution's `V` into a new matrix handle.
 *
 * # Safety
 * `sol` must be a live handle; `out` must be writable.
 */
enum VvStatus vv_solution_v(const struct VvSolution *sol, struct VvMatrix **out);

/**
 * # Safety
 * `s` must be null or a handle from this library not yet freed.
 */
void vv_solution_free(struct VvSolution *s);

/**
 * Reduces the support of a feasible `v`; the result has at most
 * `r_Φ r_Ψ` nonzero columns.
 *
 * # Safety
 * All handles must be live; `out` must be writable.
 */
enum VvStatus vv_reduce(const struct VvMatrix *phi,
                        const struct VvMatrix *psi,
                        const struct VvMatrix *v,
                        struct VvMatrix **out);

/**
 * Counts singular values above `threshold`, taken relative to the largest
 * one when `relative` is true.
 *
 * # Safety
 * `m` must be a live handle; `rank` must be writable.
 */
enum VvStatus vv_numerical_rank(const struct VvMatrix *m,
                                double threshold,
                                bool relative,
                                size_t *rank);

/**
 * Reads `<path>.manifest.json` and `<path>.bin`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum VvStatus vv_container_read(const char *path, struct VvContainer **out);

/**
 * Extracts a rank-2 (or lower) tensor as a matrix.
 *
 * # Safety
 * `c` must be a live handle, `name` a NUL-terminated string and `out`
 * writable.
 */
enum VvStatus vv_container_matrix(const struct VvContainer *c,
                                  const char *name,
                                  struct VvMatrix **out);

/**
 * # Safety
 * `c` must be null or a handle from this library not yet freed.
 */
void vv_container_free(struct VvContainer *c);

/**
 * Writes a single-matrix container at `path`.
 *
 * # Safety
 * `path` and `name` must be NUL-terminated strings; `m` a live handle.
 */
enum VvStatus vv_container_write_matrix(const char *path,
                                        const char *name,
                                        const struct VvMatrix *m);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VVNET_H */
