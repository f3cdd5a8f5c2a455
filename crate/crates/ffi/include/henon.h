#ifndef HENON_H
#define HENON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status returned by every fallible call.
 */
typedef enum HenonStatus {
  HENON_STATUS_OK = 0,
  /**
   * Parameters outside their admissible range.
   */
  HENON_STATUS_INVALID_ARGUMENT = 1,
  HENON_STATUS_NON_CONVERGENCE = 2,
  HENON_STATUS_INVALID_SPEC = 3,
  HENON_STATUS_DEGENERATE = 4,
  HENON_STATUS_GRID_MISMATCH = 5,
  HENON_STATUS_NULL_POINTER = 6,
  /**
   * Output buffer too small.
   */
  HENON_STATUS_BUFFER_TOO_SMALL = 7,
  HENON_STATUS_INTERNAL = 8,
} HenonStatus;

/**
 * Opaque handle to a grid together with `(N, alpha, p)`.
 */
typedef struct HenonFunctional HenonFunctional;

/**
 * Opaque grid handle.
 */
typedef struct HenonGrid HenonGrid;

/**
 * Opaque handle to a solver outcome.
 */
typedef struct HenonResult HenonResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of the calling thread into `buf`
 * (NUL-terminated) and returns the full message length, or 0 when no error
 * has been recorded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t henon_last_error_message(char *buf, uintptr_t len);

/**
 * Radial grid with `cells` cells, graded toward the walls when `graded` is nonzero.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HenonStatus henon_grid_radial_new(uintptr_t cells, int32_t graded, struct HenonGrid **out);

/**
 * Axisymmetric `(r, theta)` grid with the default wall and pole grading.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HenonStatus henon_grid_axi_new(uintptr_t radial_cells,
                                    uintptr_t angular_cells,
                                    struct HenonGrid **out);

/**
 * Number of nodal coefficients of a field on `grid`, 0 for a null handle.
 *
 * # Safety
 * `grid` must be null or a live handle.
 */
uintptr_t henon_grid_node_count(const struct HenonGrid *grid);

/**
 * # Safety
 * `grid` must be null or a handle from `henon_grid_*_new` not freed before.
 */
void henon_grid_free(struct HenonGrid *grid);

/**
 * Functional for dimension `dim`, weight exponent `alpha` and exponent `p`
 * (`p = 2` selects the linear problem).
 *
 * # Safety
 * `grid` must be a live handle and `out` a valid pointer.
 */
enum HenonStatus henon_functional_new(const struct HenonGrid *grid,
                                      uintptr_t dim,
                                      double alpha,
                                      double p,
                                      struct HenonFunctional **out);

/**
 * # Safety
 * `f` must be null or a handle from `henon_functional_new` not freed before.
 */
void henon_functional_free(struct HenonFunctional *f);

/**
 * Rayleigh quotient of the field with nodal values `values[0..len]`.
 *
 * # Safety
 * `f` must be a live handle, `values` must point to `len` doubles and `out`
 * must be valid.
 */
enum HenonStatus henon_rayleigh(const struct HenonFunctional *f,
                                const double *values,
                                uintptr_t len,
                                double *out);

/**
 * Gradient of the quotient at `values`, written to `grad[0..len]`.
 *
 * # Safety
 * `values` and `grad` must each point to `len` doubles.
 */
enum HenonStatus henon_gradient(const struct HenonFunctional *f,
                                const double *values,
                                uintptr_t len,
                                double *grad);

/**
 * Minimizes over radial fields; requires a radial grid.
 *
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
enum HenonStatus henon_solve_radial(const struct HenonFunctional *f,
                                    double tol,
                                    uintptr_t max_iter,
                                    struct HenonResult **out);

/**
 * Ground state over axisymmetric fields from the default initial guesses;
 * requires an axisymmetric grid.
 *
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
enum HenonStatus henon_solve_ground(const struct HenonFunctional *f,
                                    double tol,
                                    uintptr_t max_iter,
                                    struct HenonResult **out);

/**
 * Level of a result; NaN for a null handle.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
double henon_result_level(const struct HenonResult *r);

/**
 * 1 when the solver met its stopping rules, 0 otherwise.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
int32_t henon_result_converged(const struct HenonResult *r);

/**
 * Weak-form defect of the rescaled minimizer; NaN for a null handle.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
double henon_result_residual(const struct HenonResult *r);

/**
 * Copies the minimizer (unit weighted mass) into `buf`, which must hold
 * `henon_grid_node_count` doubles.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum HenonStatus henon_result_field(const struct HenonResult *r, double *buf, uintptr_t len);

/**
 * # Safety
 * `r` must be null or a handle from a solve call not freed before.
 */
void henon_result_free(struct HenonResult *r);

/**
 * Best Sobolev constant of `R^dim`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HenonStatus henon_sobolev_constant(uintptr_t dim, double *out);

/**
 * `(1 + x^{2/p}) / (1 + x)^{2/p}`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HenonStatus henon_balance_f(double x, double p, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HENON_H */
