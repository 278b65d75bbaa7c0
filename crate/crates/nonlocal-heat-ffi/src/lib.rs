//! C bindings for the nonlocal heat equation laboratory.
//!
//! The API hands out opaque handles (`NhGrid`, `NhKernel`, `NhField`,
//! `NhOperator`, `NhTrajectory`) that the caller owns and releases with the
//! matching `_free` function; every `_free` accepts null. Fallible calls
//! return an [`NhStatus`] and leave a description of the most recent
//! failure in a thread-local buffer read by [`nh_last_error_message`].
//! Handles are immutable after construction, so sharing one across threads
//! for concurrent reads is sound; creation and destruction are not
//! synchronized. Enum parameters must hold one of the declared values.
//!
//! The companion header `include/nonlocal_heat.h` is regenerated on every
//! build and is the file C callers should include.
//!
//! The safety contract is the same for every function here, so it is stated
//! once: handle arguments must be null or come from this API and still be
//! live, output parameters must be null or writable, and buffer pointers
//! must match the lengths passed next to them. Null is caught and reported;
//! a dangling or foreign pointer is undefined behaviour, as in any C API.

// The per-function safety story is the uniform contract in the crate docs;
// repeating a section on all of them would say nothing new.
#![allow(clippy::missing_safety_doc)]
#![warn(unsafe_op_in_unsafe_fn)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nonlocal_heat::decay::{fit_decay, theoretical_exponent};
use nonlocal_heat::functionals::{lq_norm, total_mass};
use nonlocal_heat::integrator::{evolve, max_stable_dt};
use nonlocal_heat::{
    BoundaryMode, Error, Field, Grid, KernelSpec, OperatorApplier, Scheme, Strategy, TimeSchedule,
    Trajectory,
};

/// Result of a fallible call. `NH_STATUS_OK` is zero, so nonzero means
/// failure and `nh_last_error_message` has the details.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Unsupported = 3,
    GridMismatch = 4,
    NonFinite = 5,
    MemoryBudget = 6,
    Instability = 7,
    Config = 8,
    Io = 9,
    Panic = 10,
}

/// What happens to mass that the kernel would carry outside the box.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NhBoundaryMode {
    Conservative = 0,
    Absorbing = 1,
}

/// Time stepping scheme.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NhScheme {
    Euler = 0,
    Rk4 = 1,
}

/// How the operator stores and applies its weights.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NhStrategy {
    Dense = 0,
    OnTheFly = 1,
    FftConvolution = 2,
}

/// Least-squares power-law fit of a norm history, filled by `nh_fit_decay`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct NhDecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub samples_used: usize,
}

/// Cell-centered lattice on a cube (opaque).
pub struct NhGrid(Grid);

/// Kernel description (opaque).
pub struct NhKernel(KernelSpec);

/// Scalar state sampled on a grid (opaque).
pub struct NhField(Field);

/// Assembled nonlocal operator (opaque).
pub struct NhOperator(OperatorApplier);

/// Snapshots of an evolution (opaque).
pub struct NhTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn failure(error: &Error) -> NhStatus {
    set_error(&error.to_string());
    match error {
        Error::InvalidArgument(_) => NhStatus::InvalidArgument,
        Error::Unsupported(_) => NhStatus::Unsupported,
        Error::GridMismatch(_) => NhStatus::GridMismatch,
        Error::NonFinite(_) => NhStatus::NonFinite,
        Error::MemoryBudget { .. } => NhStatus::MemoryBudget,
        Error::Instability { .. } => NhStatus::Instability,
        Error::Config { .. } => NhStatus::Config,
        Error::Io(_) => NhStatus::Io,
    }
}

fn null_arg(name: &str) -> NhStatus {
    set_error(&format!("{name} must not be null"));
    NhStatus::NullPointer
}

fn catch_panic(body: impl FnOnce() -> NhStatus) -> NhStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic; the involved handles should be considered poisoned");
            NhStatus::Panic
        }
    }
}

/// Extracts a shared reference from a caller pointer or bails out with
/// `NH_STATUS_NULL_POINTER`.
macro_rules! nonnull {
    ($ptr:ident) => {
        match unsafe { $ptr.as_ref() } {
            Some(reference) => reference,
            None => return null_arg(stringify!($ptr)),
        }
    };
}

macro_rules! nonnull_mut {
    ($ptr:ident) => {
        match unsafe { $ptr.as_mut() } {
            Some(reference) => reference,
            None => return null_arg(stringify!($ptr)),
        }
    };
}

fn emit<C, T>(
    out: &mut *mut C,
    constructed: Result<T, Error>,
    wrap: impl FnOnce(T) -> C,
) -> NhStatus {
    match constructed {
        Ok(value) => {
            *out = Box::into_raw(Box::new(wrap(value)));
            NhStatus::Ok
        }
        Err(error) => failure(&error),
    }
}

/// Describes the most recent failure on the calling thread. The pointer
/// stays valid until the next failing call on the same thread; it is empty
/// if nothing failed yet.
#[no_mangle]
pub extern "C" fn nh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Creates a cube `[-half_width, half_width]^dimension` discretized by
/// `points_per_axis` cell centers per axis. Dimension 1 to 3; the point
/// count must be even.
#[no_mangle]
pub unsafe extern "C" fn nh_grid_new(
    dimension: usize,
    half_width: f64,
    points_per_axis: usize,
    out: *mut *mut NhGrid,
) -> NhStatus {
    catch_panic(|| {
        let out = nonnull_mut!(out);
        emit(
            out,
            Grid::new(dimension, half_width, points_per_axis),
            NhGrid,
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn nh_grid_free(grid: *mut NhGrid) {
    if !grid.is_null() {
        drop(unsafe { Box::from_raw(grid) });
    }
}

/// Total number of cells, or 0 for a null grid.
#[no_mangle]
pub unsafe extern "C" fn nh_grid_cell_count(grid: *const NhGrid) -> usize {
    unsafe { grid.as_ref() }.map_or(0, |grid| grid.0.cell_count())
}

/// Lattice spacing, or NaN for a null grid.
#[no_mangle]
pub unsafe extern "C" fn nh_grid_spacing(grid: *const NhGrid) -> f64 {
    unsafe { grid.as_ref() }.map_or(f64::NAN, |grid| grid.0.spacing())
}

/// Bounded kernel with the heavy tail `c1 |x - y|^(-dimension - 2 sigma)`
/// beyond unit distance, capped at `cap` near the diagonal.
#[no_mangle]
pub unsafe extern "C" fn nh_kernel_fractional(
    dimension: usize,
    sigma: f64,
    c1: f64,
    cap: f64,
    out: *mut *mut NhKernel,
) -> NhStatus {
    catch_panic(|| {
        let out = nonnull_mut!(out);
        emit(
            out,
            KernelSpec::fractional_tail(dimension, sigma, c1, cap),
            NhKernel,
        )
    })
}

/// Smooth kernel supported in `|x - y| <= radius` with peak value `cap`.
#[no_mangle]
pub unsafe extern "C" fn nh_kernel_compact(
    dimension: usize,
    cap: f64,
    radius: f64,
    out: *mut *mut NhKernel,
) -> NhStatus {
    catch_panic(|| {
        let out = nonnull_mut!(out);
        emit(
            out,
            KernelSpec::compact_smooth(dimension, cap, radius),
            NhKernel,
        )
    })
}

/// Heavy-tail kernel multiplied by a position-dependent modulation of the
/// given strength in `[0, 1)`, so it is no longer a convolution.
#[no_mangle]
pub unsafe extern "C" fn nh_kernel_nonconvolution(
    dimension: usize,
    sigma: f64,
    c1: f64,
    cap: f64,
    modulation: f64,
    out: *mut *mut NhKernel,
) -> NhStatus {
    catch_panic(|| {
        let out = nonnull_mut!(out);
        emit(
            out,
            KernelSpec::nonconvolution_fractional(dimension, sigma, c1, cap, modulation),
            NhKernel,
        )
    })
}

/// New kernel scaled so that its continuum row integral equals `target`.
/// Convolution kernels only.
#[no_mangle]
pub unsafe extern "C" fn nh_kernel_normalized(
    kernel: *const NhKernel,
    target: f64,
    out: *mut *mut NhKernel,
) -> NhStatus {
    catch_panic(|| {
        let kernel = nonnull!(kernel);
        let out = nonnull_mut!(out);
        emit(out, kernel.0.normalize_mass(target), NhKernel)
    })
}

#[no_mangle]
pub unsafe extern "C" fn nh_kernel_free(kernel: *mut NhKernel) {
    if !kernel.is_null() {
        drop(unsafe { Box::from_raw(kernel) });
    }
}

/// Field holding a copy of `values` (one finite value per cell, row-major
/// with axis 0 slowest).
#[no_mangle]
pub unsafe extern "C" fn nh_field_from_values(
    grid: *const NhGrid,
    values: *const f64,
    len: usize,
    out: *mut *mut NhField,
) -> NhStatus {
    catch_panic(|| {
        let grid = nonnull!(grid);
        let out = nonnull_mut!(out);
        if values.is_null() {
            return null_arg("values");
        }
        let values = unsafe { std::slice::from_raw_parts(values, len) };
        emit(out, Field::new(grid.0.clone(), values.to_vec()), NhField)
    })
}

/// Number of values in the field, or 0 for a null field.
#[no_mangle]
pub unsafe extern "C" fn nh_field_len(field: *const NhField) -> usize {
    unsafe { field.as_ref() }.map_or(0, |field| field.0.values().len())
}

/// Copies the field into `buffer`, which must hold exactly `len ==
/// nh_field_len` values.
#[no_mangle]
pub unsafe extern "C" fn nh_field_copy_values(
    field: *const NhField,
    buffer: *mut f64,
    len: usize,
) -> NhStatus {
    catch_panic(|| {
        let field = nonnull!(field);
        if buffer.is_null() {
            return null_arg("buffer");
        }
        let values = field.0.values();
        if values.len() != len {
            set_error(&format!(
                "buffer holds {len} values but the field holds {}",
                values.len()
            ));
            return NhStatus::InvalidArgument;
        }
        unsafe { std::slice::from_raw_parts_mut(buffer, len) }.copy_from_slice(values);
        NhStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn nh_field_free(field: *mut NhField) {
    if !field.is_null() {
        drop(unsafe { Box::from_raw(field) });
    }
}

/// Assembles the operator for a kernel on a grid. The handle keeps its own
/// copies, so the kernel and grid may be freed afterwards.
#[no_mangle]
pub unsafe extern "C" fn nh_operator_assemble(
    kernel: *const NhKernel,
    grid: *const NhGrid,
    boundary_mode: NhBoundaryMode,
    strategy: NhStrategy,
    out: *mut *mut NhOperator,
) -> NhStatus {
    catch_panic(|| {
        let kernel = nonnull!(kernel);
        let grid = nonnull!(grid);
        let out = nonnull_mut!(out);
        let mode = match boundary_mode {
            NhBoundaryMode::Conservative => BoundaryMode::Conservative,
            NhBoundaryMode::Absorbing => BoundaryMode::Absorbing,
        };
        let strategy = match strategy {
            NhStrategy::Dense => Strategy::Dense,
            NhStrategy::OnTheFly => Strategy::OnTheFly,
            NhStrategy::FftConvolution => Strategy::FftConvolution,
        };
        emit(
            out,
            OperatorApplier::assemble(&kernel.0, &grid.0, mode, strategy),
            NhOperator,
        )
    })
}

/// Applies the operator once: `out = integral of J (u(y) - u(x)) dy` plus
/// the boundary term.
#[no_mangle]
pub unsafe extern "C" fn nh_operator_apply(
    operator: *const NhOperator,
    field: *const NhField,
    out: *mut *mut NhField,
) -> NhStatus {
    catch_panic(|| {
        let operator = nonnull!(operator);
        let field = nonnull!(field);
        let out = nonnull_mut!(out);
        emit(out, operator.0.apply(&field.0), NhField)
    })
}

/// Largest total outflow rate over cells, the quantity that limits the
/// stable step size. NaN for a null operator.
#[no_mangle]
pub unsafe extern "C" fn nh_operator_max_row_sum(operator: *const NhOperator) -> f64 {
    unsafe { operator.as_ref() }.map_or(f64::NAN, |operator| operator.0.max_row_sum())
}

#[no_mangle]
pub unsafe extern "C" fn nh_operator_free(operator: *mut NhOperator) {
    if !operator.is_null() {
        drop(unsafe { Box::from_raw(operator) });
    }
}

/// Evolves `initial` to `t_end` and keeps `sample_count` log-spaced
/// snapshots. The step size is `dt_safety` (in `(0, 1]`) times the positivity
/// limit `1 / nh_operator_max_row_sum`.
#[no_mangle]
pub unsafe extern "C" fn nh_evolve(
    operator: *const NhOperator,
    initial: *const NhField,
    t_end: f64,
    sample_count: usize,
    scheme: NhScheme,
    dt_safety: f64,
    out: *mut *mut NhTrajectory,
) -> NhStatus {
    catch_panic(|| {
        let operator = nonnull!(operator);
        let initial = nonnull!(initial);
        let out = nonnull_mut!(out);
        let scheme = match scheme {
            NhScheme::Euler => Scheme::Euler,
            NhScheme::Rk4 => Scheme::Rk4,
        };
        let schedule = match TimeSchedule::log_spaced(t_end, sample_count, None) {
            Ok(schedule) => schedule,
            Err(error) => return failure(&error),
        };
        emit(
            out,
            evolve(&operator.0, &initial.0, &schedule, scheme, dt_safety),
            NhTrajectory,
        )
    })
}

/// Number of snapshots, or 0 for a null trajectory.
#[no_mangle]
pub unsafe extern "C" fn nh_trajectory_len(trajectory: *const NhTrajectory) -> usize {
    unsafe { trajectory.as_ref() }.map_or(0, |trajectory| trajectory.0.len())
}

/// Time of snapshot `index`.
#[no_mangle]
pub unsafe extern "C" fn nh_trajectory_time(
    trajectory: *const NhTrajectory,
    index: usize,
    out: *mut f64,
) -> NhStatus {
    catch_panic(|| {
        let trajectory = nonnull!(trajectory);
        let out = nonnull_mut!(out);
        match trajectory.0.samples().get(index) {
            Some((time, _)) => {
                *out = *time;
                NhStatus::Ok
            }
            None => {
                set_error(&format!(
                    "snapshot index {index} out of range for {} snapshots",
                    trajectory.0.len()
                ));
                NhStatus::InvalidArgument
            }
        }
    })
}

/// Copy of the state at snapshot `index`, as a new field handle.
#[no_mangle]
pub unsafe extern "C" fn nh_trajectory_field(
    trajectory: *const NhTrajectory,
    index: usize,
    out: *mut *mut NhField,
) -> NhStatus {
    catch_panic(|| {
        let trajectory = nonnull!(trajectory);
        let out = nonnull_mut!(out);
        match trajectory.0.samples().get(index) {
            Some((_, field)) => {
                *out = Box::into_raw(Box::new(NhField(field.clone())));
                NhStatus::Ok
            }
            None => {
                set_error(&format!(
                    "snapshot index {index} out of range for {} snapshots",
                    trajectory.0.len()
                ));
                NhStatus::InvalidArgument
            }
        }
    })
}

/// Copy of the state the evolution started from.
#[no_mangle]
pub unsafe extern "C" fn nh_trajectory_initial(
    trajectory: *const NhTrajectory,
    out: *mut *mut NhField,
) -> NhStatus {
    catch_panic(|| {
        let trajectory = nonnull!(trajectory);
        let out = nonnull_mut!(out);
        *out = Box::into_raw(Box::new(NhField(trajectory.0.initial().clone())));
        NhStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn nh_trajectory_free(trajectory: *mut NhTrajectory) {
    if !trajectory.is_null() {
        drop(unsafe { Box::from_raw(trajectory) });
    }
}

/// Discrete l^q norm `(sum |u|^q h^n)^(1/q)`; pass INFINITY for the sup
/// norm. Requires `q >= 1`.
#[no_mangle]
pub unsafe extern "C" fn nh_lq_norm(field: *const NhField, q: f64, out: *mut f64) -> NhStatus {
    catch_panic(|| {
        let field = nonnull!(field);
        let out = nonnull_mut!(out);
        match lq_norm(&field.0, q) {
            Ok(norm) => {
                *out = norm;
                NhStatus::Ok
            }
            Err(error) => failure(&error),
        }
    })
}

/// Signed mass `sum u h^n`, or NaN for a null field.
#[no_mangle]
pub unsafe extern "C" fn nh_total_mass(field: *const NhField) -> f64 {
    unsafe { field.as_ref() }.map_or(f64::NAN, |field| total_mass(&field.0))
}

/// Step size ceiling for the scheme on this operator: `dt_safety / max row
/// sum`.
#[no_mangle]
pub unsafe extern "C" fn nh_max_stable_dt(
    operator: *const NhOperator,
    scheme: NhScheme,
    dt_safety: f64,
    out: *mut f64,
) -> NhStatus {
    catch_panic(|| {
        let operator = nonnull!(operator);
        let out = nonnull_mut!(out);
        let scheme = match scheme {
            NhScheme::Euler => Scheme::Euler,
            NhScheme::Rk4 => Scheme::Rk4,
        };
        match max_stable_dt(&operator.0, scheme, dt_safety) {
            Ok(dt) => {
                *out = dt;
                NhStatus::Ok
            }
            Err(error) => failure(&error),
        }
    })
}

/// Predicted decay exponent of the l^q norm: `dimension / (2 sigma) (1 -
/// 1/q)` for a heavy tail of order `sigma` in `(0, 1)`, or the classical
/// `dimension / 2 (1 - 1/q)` when `sigma <= 0` marks a kernel with finite
/// second moment.
#[no_mangle]
pub unsafe extern "C" fn nh_theoretical_exponent(
    dimension: usize,
    q: f64,
    sigma: f64,
    out: *mut f64,
) -> NhStatus {
    catch_panic(|| {
        let out = nonnull_mut!(out);
        let order = if sigma > 0.0 { Some(sigma) } else { None };
        match theoretical_exponent(dimension, q, order) {
            Ok(exponent) => {
                *out = exponent;
                NhStatus::Ok
            }
            Err(error) => failure(&error),
        }
    })
}

/// Fits `norm ~ C t^slope` by least squares on the log-log points whose
/// times lie in the trailing `window_fraction` of the log-time range.
/// `times` and `norms` hold `len` values each.
#[no_mangle]
pub unsafe extern "C" fn nh_fit_decay(
    times: *const f64,
    norms: *const f64,
    len: usize,
    window_fraction: f64,
    out: *mut NhDecayFit,
) -> NhStatus {
    catch_panic(|| {
        let out = nonnull_mut!(out);
        if times.is_null() {
            return null_arg("times");
        }
        if norms.is_null() {
            return null_arg("norms");
        }
        let times = unsafe { std::slice::from_raw_parts(times, len) };
        let norms = unsafe { std::slice::from_raw_parts(norms, len) };
        match fit_decay(times, norms, window_fraction) {
            Ok(fit) => {
                *out = NhDecayFit {
                    slope: fit.slope,
                    intercept: fit.intercept,
                    r_squared: fit.r_squared,
                    window_start: fit.window.0,
                    window_end: fit.window.1,
                    samples_used: fit.samples_used,
                };
                NhStatus::Ok
            }
            Err(error) => failure(&error),
        }
    })
}
