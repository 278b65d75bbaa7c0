//! Decay-rate measurement and its comparison against theory.
//!
//! A trajectory turns into a series of time-stamped norms, the tail of the
//! series (in log time) gets a least-squares line in the log-log plane, and
//! the fitted slope is compared with the predicted exponent:
//! n / (2 sigma) (1 - 1/q) for kernels with a heavy tail of order sigma,
//! n / 2 (1 - 1/q) for compactly supported kernels, which diffuse like the
//! classical heat semigroup.
//!
//! The kernel's Fourier symbol provides an independent route to sigma: for a
//! unit-mass convolution kernel, 1 - symbol(xi) grows like |xi|^(2 sigma) at
//! small frequencies, so the slope of its log-log plot over the lowest
//! decade of grid frequencies estimates 2 sigma without running any
//! dynamics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{lq_norm, total_mass};
use crate::grid::Grid;
use crate::integrator::Trajectory;
use crate::kernel::KernelSpec;
use crate::operator::{BoundaryMode, OperatorApplier};

/// Predicted decay exponent of t -> |u(t)|_q.
///
/// Pass the tail order as `sigma` for heavy-tail kernels; `None` selects the
/// classical rate of compactly supported kernels. q may be infinite.
pub fn theoretical_exponent(dimension: usize, q: f64, sigma: Option<f64>) -> Result<f64> {
    if dimension == 0 || dimension > crate::grid::MAX_DIMENSION {
        return Err(Error::invalid(format!(
            "dimension must be 1, 2 or 3, got {dimension}"
        )));
    }
    if q.is_nan() || q < 1.0 {
        return Err(Error::invalid(format!(
            "the norm exponent must satisfy q >= 1, got {q}"
        )));
    }
    let n = dimension as f64;
    let share = 1.0 - 1.0 / q;
    match sigma {
        Some(s) => {
            if !(0.0..1.0).contains(&s) || s == 0.0 {
                return Err(Error::invalid(format!("sigma must lie in (0, 1), got {s}")));
            }
            Ok(n / (2.0 * s) * share)
        }
        None => Ok(n / 2.0 * share),
    }
}

/// Norms of one snapshot.
#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub t: f64,
    /// Signed integral of the field.
    pub mass: f64,
    pub l1: f64,
    pub linf: f64,
    /// L^q norms, parallel to the series' q list.
    pub lq: Vec<f64>,
    /// Kernel energy at q = 2, recorded for conservative operators only.
    pub energy_q2: Option<f64>,
}

/// Time series of norms along a trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct DecaySeries {
    pub q_list: Vec<f64>,
    pub rows: Vec<DecayRow>,
}

impl DecaySeries {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// The series of L^q norms for one entry of the q list.
    pub fn norms_for_q(&self, q: f64) -> Option<Vec<f64>> {
        let k = self.q_list.iter().position(|&x| x == q)?;
        Some(self.rows.iter().map(|r| r.lq[k]).collect())
    }
}

/// Evaluates masses, norms and (for conservative operators) the quadratic
/// kernel energy at every snapshot of a trajectory.
///
/// The energy is taken from the operator itself as -2 <Lu, u> h^n, which
/// equals the pairwise double sum for conservative boundaries and costs one
/// operator application instead of a quadratic loop.
pub fn record(
    op: &OperatorApplier,
    trajectory: &Trajectory,
    q_list: &[f64],
) -> Result<DecaySeries> {
    for &q in q_list {
        if q.is_nan() || q < 1.0 {
            return Err(Error::invalid(format!(
                "every q in the norm list must satisfy q >= 1, got {q}"
            )));
        }
    }
    let conservative = op.boundary_mode() == BoundaryMode::Conservative;
    let hn = op.grid().cell_volume();
    let mut rows = Vec::with_capacity(trajectory.len());
    for (t, field) in trajectory.samples() {
        let mut lq = Vec::with_capacity(q_list.len());
        for &q in q_list {
            lq.push(lq_norm(field, q)?);
        }
        let energy_q2 = if conservative {
            let lu = op.apply(field)?;
            let quad: f64 = lu
                .values()
                .iter()
                .zip(field.values())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                * hn;
            Some(-2.0 * quad)
        } else {
            None
        };
        rows.push(DecayRow {
            t: *t,
            mass: total_mass(field),
            l1: lq_norm(field, 1.0)?,
            linf: lq_norm(field, f64::INFINITY)?,
            lq,
            energy_q2,
        });
    }
    Ok(DecaySeries {
        q_list: q_list.to_vec(),
        rows,
    })
}

/// A least-squares line through the tail of a log-log decay curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayFit {
    /// Slope of log norm against log t; a clean power decay t^(-a) fits
    /// slope -a.
    pub slope: f64,
    /// Intercept at log t = 0, so the fitted curve is exp(intercept) t^slope.
    pub intercept: f64,
    pub r_squared: f64,
    /// First and last sample times that entered the fit.
    pub window: (f64, f64),
    pub samples_used: usize,
}

/// Fits the last `window_fraction` of the series, measured in log time.
///
/// With log-spaced samples this keeps the trailing share of the samples; the
/// early transient, which occupies most of the linear time axis but little
/// of the logarithmic one, is excluded.
pub fn fit_decay(times: &[f64], norms: &[f64], window_fraction: f64) -> Result<DecayFit> {
    if times.len() != norms.len() {
        return Err(Error::invalid(format!(
            "{} times against {} norms",
            times.len(),
            norms.len()
        )));
    }
    if !(0.0..=1.0).contains(&window_fraction) || window_fraction == 0.0 {
        return Err(Error::invalid(format!(
            "window_fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let mut prev = 0.0;
    for &t in times {
        if !t.is_finite() || t <= prev {
            return Err(Error::invalid(format!(
                "sample times must be finite, positive and strictly increasing; \
                 got {t} after {prev}"
            )));
        }
        prev = t;
    }
    let t_first = times[0];
    let t_end = *times.last().expect("nonempty by the length checks");
    let log_span = t_end.ln() - t_first.ln();
    let threshold = t_end.ln() - window_fraction * log_span;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut window = (t_end, t_end);
    for (&t, &norm) in times.iter().zip(norms) {
        if t.ln() >= threshold {
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::invalid(format!(
                    "norms inside the fit window must be positive and finite to \
                     take logs; got {norm} at t = {t}"
                )));
            }
            if xs.is_empty() {
                window.0 = t;
            }
            window.1 = t;
            xs.push(t.ln());
            ys.push(norm.ln());
        }
    }
    if xs.len() < 5 {
        return Err(Error::invalid(format!(
            "the fit window holds {} samples but needs at least 5; extend the \
             series or widen the window",
            xs.len()
        )));
    }
    let count = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / count;
    let mean_y = ys.iter().sum::<f64>() / count;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::invalid(
            "all samples in the fit window share one time; no slope is defined",
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let predicted = intercept + slope * x;
        ss_res += (y - predicted) * (y - predicted);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).max(0.0)
    } else if ss_res <= 1e-24 {
        1.0
    } else {
        0.0
    };
    Ok(DecayFit {
        slope,
        intercept,
        r_squared,
        window,
        samples_used: xs.len(),
    })
}

/// True when the fitted slope matches the prediction within the tolerance
/// and the fit is tight (r^2 at least 0.98).
pub fn verify_decay(fit: &DecayFit, theoretical_exponent: f64, tolerance: f64) -> bool {
    (fit.slope + theoretical_exponent).abs() <= tolerance && fit.r_squared >= 0.98
}

/// The low-frequency behaviour of a kernel's Fourier symbol.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SymbolFit {
    /// Half the fitted slope of log(1 - symbol) against log |xi|.
    pub sigma_estimate: f64,
    /// exp(intercept): 1 - symbol(xi) is approximately amplitude |xi|^(2 sigma).
    pub amplitude: f64,
    pub slope: f64,
    pub r_squared: f64,
    /// Smallest and largest frequency used.
    pub window: (f64, f64),
}

/// Estimates the tail order sigma from the kernel symbol on the grid's
/// frequency lattice, without time stepping.
///
/// The symbol is the cosine sum of the kernel over the extended cell lattice
/// out to eight half-widths; the analytic tail beyond that is folded into
/// the zero-frequency value, so the normalized symbol starts at exactly one.
/// The fit runs over the lowest decade of nonzero frequencies k pi / L,
/// k = 1..10.
pub fn symbol_exponent_fit(spec: &KernelSpec, grid: &Grid) -> Result<SymbolFit> {
    if spec.dimension() != grid.dimension() {
        return Err(Error::GridMismatch(format!(
            "kernel dimension {} vs grid dimension {}",
            spec.dimension(),
            grid.dimension()
        )));
    }
    if !spec.is_convolution() {
        return Err(Error::unsupported(format!(
            "the symbol fit needs a convolution kernel (compact_smooth or \
             fractional_tail), not {}",
            spec.family()
        )));
    }
    let mass = spec.continuum_mass()?;
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "the symbol fit assumes unit total mass so the symbol starts at one; \
             normalize the kernel with normalize_mass(1.0) first (mass = {mass})"
        )));
    }
    let n = grid.dimension();
    let h = grid.spacing();
    let hn = grid.cell_volume();
    let radius = crate::kernel::TAIL_SHELL_FACTOR * grid.half_width();
    let extent = (radius / h).floor() as i64;
    let side = (2 * extent + 1) as usize;
    let cells = side.pow(n as u32);
    let r2_max = radius * radius;

    // One pass collects the kernel values and their axis-0 offsets; each
    // frequency then needs only cosines.
    let mut weights = Vec::new();
    let mut offsets = Vec::new();
    for flat in 0..cells {
        let mut rest = flat;
        let mut d2 = 0.0;
        let mut z0 = 0.0;
        for axis in (0..n).rev() {
            let idx = rest % side;
            rest /= side;
            let z = (idx as i64 - extent) as f64 * h;
            d2 += z * z;
            if axis == 0 {
                z0 = z;
            }
        }
        if d2 > r2_max {
            continue;
        }
        weights.push(spec.evaluate_d2(d2, 0.0) * hn);
        offsets.push(z0);
    }
    let lattice_mass: f64 = weights.iter().sum();
    let s0 = lattice_mass + spec.tail_remainder(radius);

    let d_xi = std::f64::consts::PI / grid.half_width();
    let mut xs = Vec::with_capacity(10);
    let mut ys = Vec::with_capacity(10);
    let mut window = (d_xi, d_xi);
    for k in 1..=10usize {
        let xi = k as f64 * d_xi;
        let s: f64 = weights
            .iter()
            .zip(&offsets)
            .map(|(w, z0)| w * (xi * z0).cos())
            .sum();
        let gap = 1.0 - s / s0;
        if !(gap > 0.0) {
            return Err(Error::invalid(format!(
                "the symbol does not drop below one at frequency {xi}; the grid \
                 resolves no decay for this kernel"
            )));
        }
        if k == 1 {
            window.0 = xi;
        }
        window.1 = xi;
        xs.push(xi.ln());
        ys.push(gap.ln());
    }
    let count = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / count;
    let mean_y = ys.iter().sum::<f64>() / count;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let predicted = intercept + slope * x;
        ss_res += (y - predicted) * (y - predicted);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).max(0.0)
    } else {
        1.0
    };
    Ok(SymbolFit {
        sigma_estimate: 0.5 * slope,
        amplitude: intercept.exp(),
        slope,
        r_squared,
        window,
    })
}
