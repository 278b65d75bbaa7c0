/* C interface for the nonlocal heat equation laboratory. */

#ifndef NONLOCAL_HEAT_H
#define NONLOCAL_HEAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call. `NH_STATUS_OK` is zero, so nonzero means
 * failure and `nh_last_error_message` has the details.
 */
typedef enum NhStatus {
  NH_STATUS_OK = 0,
  NH_STATUS_NULL_POINTER = 1,
  NH_STATUS_INVALID_ARGUMENT = 2,
  NH_STATUS_UNSUPPORTED = 3,
  NH_STATUS_GRID_MISMATCH = 4,
  NH_STATUS_NON_FINITE = 5,
  NH_STATUS_MEMORY_BUDGET = 6,
  NH_STATUS_INSTABILITY = 7,
  NH_STATUS_CONFIG = 8,
  NH_STATUS_IO = 9,
  NH_STATUS_PANIC = 10,
} NhStatus;

/**
 * What happens to mass that the kernel would carry outside the box.
 */
typedef enum NhBoundaryMode {
  NH_BOUNDARY_MODE_CONSERVATIVE = 0,
  NH_BOUNDARY_MODE_ABSORBING = 1,
} NhBoundaryMode;

/**
 * How the operator stores and applies its weights.
 */
typedef enum NhStrategy {
  NH_STRATEGY_DENSE = 0,
  NH_STRATEGY_ON_THE_FLY = 1,
  NH_STRATEGY_FFT_CONVOLUTION = 2,
} NhStrategy;

/**
 * Time stepping scheme.
 */
typedef enum NhScheme {
  NH_SCHEME_EULER = 0,
  NH_SCHEME_RK4 = 1,
} NhScheme;

/**
 * Scalar state sampled on a grid (opaque).
 */
typedef struct NhField NhField;

/**
 * Cell-centered lattice on a cube (opaque).
 */
typedef struct NhGrid NhGrid;

/**
 * Kernel description (opaque).
 */
typedef struct NhKernel NhKernel;

/**
 * Assembled nonlocal operator (opaque).
 */
typedef struct NhOperator NhOperator;

/**
 * Snapshots of an evolution (opaque).
 */
typedef struct NhTrajectory NhTrajectory;

/**
 * Least-squares power-law fit of a norm history, filled by `nh_fit_decay`.
 */
typedef struct NhDecayFit {
  double slope;
  double intercept;
  double r_squared;
  double window_start;
  double window_end;
  size_t samples_used;
} NhDecayFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Describes the most recent failure on the calling thread. The pointer
 * stays valid until the next failing call on the same thread; it is empty
 * if nothing failed yet.
 */
const char *nh_last_error_message(void);

/**
 * Creates a cube `[-half_width, half_width]^dimension` discretized by
 * `points_per_axis` cell centers per axis. Dimension 1 to 3; the point
 * count must be even.
 */
enum NhStatus nh_grid_new(size_t dimension,
                          double half_width,
                          size_t points_per_axis,
                          struct NhGrid **out);

void nh_grid_free(struct NhGrid *grid);

/**
 * Total number of cells, or 0 for a null grid.
 */
size_t nh_grid_cell_count(const struct NhGrid *grid);

/**
 * Lattice spacing, or NaN for a null grid.
 */
double nh_grid_spacing(const struct NhGrid *grid);

/**
 * Bounded kernel with the heavy tail `c1 |x - y|^(-dimension - 2 sigma)`
 * beyond unit distance, capped at `cap` near the diagonal.
 */
enum NhStatus nh_kernel_fractional(size_t dimension,
                                   double sigma,
                                   double c1,
                                   double cap,
                                   struct NhKernel **out);

/**
 * Smooth kernel supported in `|x - y| <= radius` with peak value `cap`.
 */
enum NhStatus nh_kernel_compact(size_t dimension, double cap, double radius, struct NhKernel **out);

/**
 * Heavy-tail kernel multiplied by a position-dependent modulation of the
 * given strength in `[0, 1)`, so it is no longer a convolution.
 */
enum NhStatus nh_kernel_nonconvolution(size_t dimension,
                                       double sigma,
                                       double c1,
                                       double cap,
                                       double modulation,
                                       struct NhKernel **out);

/**
 * New kernel scaled so that its continuum row integral equals `target`.
 * Convolution kernels only.
 */
enum NhStatus nh_kernel_normalized(const struct NhKernel *kernel,
                                   double target,
                                   struct NhKernel **out);

void nh_kernel_free(struct NhKernel *kernel);

/**
 * Field holding a copy of `values` (one finite value per cell, row-major
 * with axis 0 slowest).
 */
enum NhStatus nh_field_from_values(const struct NhGrid *grid,
                                   const double *values,
                                   size_t len,
                                   struct NhField **out);

/**
 * Number of values in the field, or 0 for a null field.
 */
size_t nh_field_len(const struct NhField *field);

/**
 * Copies the field into `buffer`, which must hold exactly `len ==
 * nh_field_len` values.
 */
enum NhStatus nh_field_copy_values(const struct NhField *field, double *buffer, size_t len);

void nh_field_free(struct NhField *field);

/**
 * Assembles the operator for a kernel on a grid. The handle keeps its own
 * copies, so the kernel and grid may be freed afterwards.
 */
enum NhStatus nh_operator_assemble(const struct NhKernel *kernel,
                                   const struct NhGrid *grid,
                                   enum NhBoundaryMode boundary_mode,
                                   enum NhStrategy strategy,
                                   struct NhOperator **out);

/**
 * Applies the operator once: `out = integral of J (u(y) - u(x)) dy` plus
 * the boundary term.
 */
enum NhStatus nh_operator_apply(const struct NhOperator *operator_,
                                const struct NhField *field,
                                struct NhField **out);

/**
 * Largest total outflow rate over cells, the quantity that limits the
 * stable step size. NaN for a null operator.
 */
double nh_operator_max_row_sum(const struct NhOperator *operator_);

void nh_operator_free(struct NhOperator *operator_);

/**
 * Evolves `initial` to `t_end` and keeps `sample_count` log-spaced
 * snapshots. The step size is `dt_safety` (in `(0, 1]`) times the positivity
 * limit `1 / nh_operator_max_row_sum`.
 */
enum NhStatus nh_evolve(const struct NhOperator *operator_,
                        const struct NhField *initial,
                        double t_end,
                        size_t sample_count,
                        enum NhScheme scheme,
                        double dt_safety,
                        struct NhTrajectory **out);

/**
 * Number of snapshots, or 0 for a null trajectory.
 */
size_t nh_trajectory_len(const struct NhTrajectory *trajectory);

/**
 * Time of snapshot `index`.
 */
enum NhStatus nh_trajectory_time(const struct NhTrajectory *trajectory, size_t index, double *out);

/**
 * Copy of the state at snapshot `index`, as a new field handle.
 */
enum NhStatus nh_trajectory_field(const struct NhTrajectory *trajectory,
                                  size_t index,
                                  struct NhField **out);

/**
 * Copy of the state the evolution started from.
 */
enum NhStatus nh_trajectory_initial(const struct NhTrajectory *trajectory, struct NhField **out);

void nh_trajectory_free(struct NhTrajectory *trajectory);

/**
 * Discrete l^q norm `(sum |u|^q h^n)^(1/q)`; pass INFINITY for the sup
 * norm. Requires `q >= 1`.
 */
enum NhStatus nh_lq_norm(const struct NhField *field, double q, double *out);

/**
 * Signed mass `sum u h^n`, or NaN for a null field.
 */
double nh_total_mass(const struct NhField *field);

/**
 * Step size ceiling for the scheme on this operator: `dt_safety / max row
 * sum`.
 */
enum NhStatus nh_max_stable_dt(const struct NhOperator *operator_,
                               enum NhScheme scheme,
                               double dt_safety,
                               double *out);

/**
 * Predicted decay exponent of the l^q norm: `dimension / (2 sigma) (1 -
 * 1/q)` for a heavy tail of order `sigma` in `(0, 1)`, or the classical
 * `dimension / 2 (1 - 1/q)` when `sigma <= 0` marks a kernel with finite
 * second moment.
 */
enum NhStatus nh_theoretical_exponent(size_t dimension, double q, double sigma, double *out);

/**
 * Fits `norm ~ C t^slope` by least squares on the log-log points whose
 * times lie in the trailing `window_fraction` of the log-time range.
 * `times` and `norms` hold `len` values each.
 */
enum NhStatus nh_fit_decay(const double *times,
                           const double *norms,
                           size_t len,
                           double window_fraction,
                           struct NhDecayFit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NONLOCAL_HEAT_H */
