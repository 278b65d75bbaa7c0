//! Norms, energies and the inequality chain connecting them.
//!
//! Everything a decay proof consumes is computed here on discrete fields:
//! L^q norms and masses, the kernel energy
//! E_q(u) = sum_ij J(x_i, x_j) |u_j - u_i|^q h^2n,
//! Gagliardo seminorms, a mollifier split u = v + w with smooth v, the
//! pointwise pairing bound (a - b)(phi(a) - phi(b)) >= C |a - b|^q for
//! phi(s) = |s|^(q-2) s, and the quotients that measure how tightly the
//! seminorm of v plus the norm of w is dominated by the energy, how the
//! Sobolev embedding performs, and how L^q norms interpolate between the
//! embedding exponent and L^1.
//!
//! All quadratic-pair loops parallelize over rows and reduce each row
//! sequentially, so results are reproducible run to run. Small integer
//! powers are spelled out as products; each power is computed by exactly one
//! code path so repeated evaluations agree bitwise.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{distance_squared, Field, Grid};
use crate::kernel::{bump_profile_sq, KernelSpec};
use crate::operator::{BoundaryMode, OperatorApplier, PairWeights};

/// L^q norm (sum_i |u_i|^q h^n)^(1/q); the sup norm for q = infinity.
pub fn lq_norm(u: &Field, q: f64) -> Result<f64> {
    if q == f64::INFINITY {
        return Ok(u.values().iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    check_exponent(q)?;
    Ok(root(moment(u, q), q))
}

/// Signed integral sum_i u_i h^n.
pub fn total_mass(u: &Field) -> f64 {
    u.values().iter().sum::<f64>() * u.grid().cell_volume()
}

/// Kernel energy E_q(u) = sum_i sum_{j != i} J(x_i, x_j) |u_j - u_i|^q h^2n.
pub fn energy(spec: &KernelSpec, u: &Field, q: f64) -> Result<f64> {
    check_exponent(q)?;
    let grid = u.grid();
    if spec.dimension() != grid.dimension() {
        return Err(Error::GridMismatch(format!(
            "kernel dimension {} vs grid dimension {}",
            spec.dimension(),
            grid.dimension()
        )));
    }
    let pair = PairWeights::new(spec, grid);
    let v = u.values();
    let rows: Vec<f64> = (0..v.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..v.len() {
                if j != i {
                    s += pair.kernel_value(i, j) * abs_power(v[j] - v[i], q);
                }
            }
            s
        })
        .collect();
    let h2n = grid.cell_volume() * grid.cell_volume();
    Ok(rows.iter().sum::<f64>() * h2n)
}

/// Gagliardo seminorm
/// [u]_{s,q} = (sum_{i != j} |u_i - u_j|^q / |x_i - x_j|^(n + s q) h^2n)^(1/q).
pub fn fractional_seminorm(u: &Field, s: f64, q: f64) -> Result<f64> {
    check_exponent(q)?;
    if !(0.0..1.0).contains(&s) || s == 0.0 {
        return Err(Error::invalid(format!(
            "the seminorm order s must lie in (0, 1), got {s}"
        )));
    }
    let grid = u.grid();
    let n = grid.dimension();
    let alpha = n as f64 + s * q;
    let points: Vec<_> = (0..grid.cell_count()).map(|i| grid.coordinate(i)).collect();
    let v = u.values();
    let rows: Vec<f64> = (0..v.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..v.len() {
                if j != i {
                    let d2 = distance_squared(points[i], points[j]);
                    acc += abs_power(v[j] - v[i], q) * inverse_distance_power(d2, alpha);
                }
            }
            acc
        })
        .collect();
    let h2n = grid.cell_volume() * grid.cell_volume();
    Ok(root(rows.iter().sum::<f64>() * h2n, q))
}

/// How far the flow is from the exact balance
/// d/dt sum |u|^q h^n = -(q/2) B_q(u),
/// where B_q pairs increments of u against increments of phi(u) under the
/// kernel. Takes three snapshots of one trajectory, differences the outer
/// two and evaluates the pairing form at the middle one; for snapshots at
/// t -/+ delta the result shrinks like delta^2.
pub fn dissipation_identity_residual(
    op: &OperatorApplier,
    before: (f64, &Field),
    center: &Field,
    after: (f64, &Field),
    q: f64,
) -> Result<f64> {
    if op.boundary_mode() != BoundaryMode::Conservative {
        return Err(Error::invalid(
            "the dissipation identity holds for the conservative operator; \
             absorbing boundaries add an exterior sink term",
        ));
    }
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::invalid(format!(
            "the dissipation pairing needs q > 1, got {q}"
        )));
    }
    let (t0, u0) = before;
    let (t1, u1) = after;
    if !(t1 > t0) {
        return Err(Error::invalid(format!(
            "snapshot times must increase, got {t0} then {t1}"
        )));
    }
    for field in [u0, center, u1] {
        if field.grid() != op.grid() {
            return Err(Error::GridMismatch(
                "snapshot grid does not match the operator grid".into(),
            ));
        }
    }
    let derivative = (moment(u1, q) - moment(u0, q)) / (t1 - t0);
    let rate = 0.5 * q * pairing_form(op.pair_weights(), center, q);
    Ok((derivative + rate).abs())
}

/// B_q(u) = sum_ij J_ij (u_j - u_i)(phi(u_j) - phi(u_i)) h^2n >= 0.
fn pairing_form(pair: &PairWeights, u: &Field, q: f64) -> f64 {
    let v = u.values();
    let rows: Vec<f64> = (0..v.len())
        .into_par_iter()
        .map(|i| {
            let phi_i = signed_power(v[i], q);
            let mut s = 0.0;
            for j in 0..v.len() {
                if j != i {
                    s += pair.kernel_value(i, j) * (v[j] - v[i]) * (signed_power(v[j], q) - phi_i);
                }
            }
            s
        })
        .collect();
    let hn = u.grid().cell_volume();
    rows.iter().sum::<f64>() * hn * hn
}

/// A nonnegative smooth bump stencil with discrete mass exactly one.
///
/// The stencil stores mass weights m_k = psi(k h) h^n / normalization, so
/// convolving a field with it is the discrete version of mollifying with a
/// bump of the given radius. It is tied to the spacing it was built for.
#[derive(Clone, Debug)]
pub struct MollifierSpec {
    dimension: usize,
    spacing: f64,
    radius: f64,
    extent: usize,
    mass_weights: Vec<f64>,
}

impl MollifierSpec {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Offsets run over [-extent, extent]^n.
    pub fn extent(&self) -> usize {
        self.extent
    }

    /// Mass weight of the cell at the given lattice offset from the center.
    pub fn mass_weight(&self, offset: [i64; 3]) -> f64 {
        let k = self.extent as i64;
        let side = 2 * self.extent + 1;
        let mut flat = 0usize;
        for axis in 0..self.dimension {
            debug_assert!(offset[axis].abs() <= k);
            flat = flat * side + (offset[axis] + k) as usize;
        }
        self.mass_weights[flat]
    }

    pub fn mass_weights(&self) -> &[f64] {
        &self.mass_weights
    }
}

/// Samples the standard bump of the given radius on the grid lattice and
/// renormalizes it to unit discrete mass.
///
/// The weights are normalized by their plain sum and the center weight is
/// then recomputed as one minus the sum of the others, which makes the total
/// mass exactly 1.0 in floating point (the off-center sum lies in [1/2, 1],
/// where subtraction from one is exact).
pub fn build_mollifier(grid: &Grid, radius: f64) -> Result<MollifierSpec> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::invalid(format!(
            "mollifier radius must be a positive real, got {radius}"
        )));
    }
    let h = grid.spacing();
    if radius < 3.0 * h {
        return Err(Error::invalid(format!(
            "a mollifier of radius {radius} spans fewer than three cells at spacing {h}; \
             refine the grid or enlarge the radius"
        )));
    }
    let n = grid.dimension();
    let extent = (radius / h).ceil() as usize;
    let side = 2 * extent + 1;
    let count = side.pow(n as u32);
    let r2 = radius * radius;
    let mut raw = vec![0.0; count];
    for (flat, slot) in raw.iter_mut().enumerate() {
        let mut rest = flat;
        let mut d2 = 0.0;
        for _ in 0..n {
            let idx = rest % side;
            rest /= side;
            let z = (idx as i64 - extent as i64) as f64 * h;
            d2 += z * z;
        }
        *slot = bump_profile_sq(d2 / r2);
    }
    let total: f64 = raw.iter().sum();
    let mut mass_weights: Vec<f64> = raw.iter().map(|&v| v / total).collect();
    let center = count / 2;
    let off_center: f64 = mass_weights
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != center)
        .map(|(_, &v)| v)
        .sum();
    if (0.5..=1.0).contains(&off_center) {
        mass_weights[center] = 1.0 - off_center;
    }
    Ok(MollifierSpec {
        dimension: n,
        spacing: h,
        radius,
        extent,
        mass_weights,
    })
}

/// A field split into a mollified part and the remainder.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// v = psi * u with zero padding outside the box.
    pub smooth_part: Field,
    /// w = u - v, exact per cell.
    pub remainder: Field,
    /// True when u does not vanish within one mollifier radius of the
    /// boundary, where the zero-padded convolution truncates the bump.
    pub truncated: bool,
}

/// Splits u = v + w by convolving with the mollifier stencil.
pub fn mollifier_decompose(u: &Field, mollifier: &MollifierSpec) -> Result<Decomposition> {
    let grid = u.grid();
    if grid.dimension() != mollifier.dimension {
        return Err(Error::GridMismatch(format!(
            "mollifier dimension {} vs grid dimension {}",
            mollifier.dimension,
            grid.dimension()
        )));
    }
    let h = grid.spacing();
    if (h - mollifier.spacing).abs() > 1e-12 * h {
        return Err(Error::GridMismatch(format!(
            "mollifier was built for spacing {} but the field has spacing {h}",
            mollifier.spacing
        )));
    }
    let n = grid.dimension();
    let m = grid.points_per_axis() as i64;
    let extent = mollifier.extent as i64;
    let side = (2 * extent + 1) as usize;
    let stencil_size = side.pow(n as u32);
    let values = u.values();
    let smooth: Vec<f64> = (0..values.len())
        .into_par_iter()
        .map(|i| {
            let idx = grid.multi_index(i);
            let mut acc = 0.0;
            for stencil_flat in 0..stencil_size {
                let mut rest = stencil_flat;
                let mut neighbor = [0i64; 3];
                let mut inside = true;
                for axis in (0..n).rev() {
                    let offset = (rest % side) as i64 - extent;
                    rest /= side;
                    let j = idx[axis] as i64 - offset;
                    if j < 0 || j >= m {
                        inside = false;
                        break;
                    }
                    neighbor[axis] = j;
                }
                if inside {
                    let mut j_flat = 0usize;
                    for axis in 0..n {
                        j_flat = j_flat * m as usize + neighbor[axis] as usize;
                    }
                    acc += mollifier.mass_weights[stencil_flat] * values[j_flat];
                }
            }
            acc
        })
        .collect();
    let remainder: Vec<f64> = values.iter().zip(&smooth).map(|(a, b)| a - b).collect();
    let truncated = !u.boundary_band_is_zero(mollifier.radius);
    Ok(Decomposition {
        smooth_part: Field::from_raw(grid.clone(), smooth),
        remainder: Field::from_raw(grid.clone(), remainder),
        truncated,
    })
}

/// How a pairing constant is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairingMethod {
    /// q = 2 only, where the pairing is an identity with constant 1.
    ExactQ2,
    /// The closed-form lower bound 2^(-q), valid for q >= 2.
    AppendixBound,
    /// Deterministic minimization of the normalized pairing quotient on a
    /// refining grid, scaled by 0.999 to stay strictly below the infimum
    /// estimate. Valid for any q > 1, though for q < 2 the true infimum is
    /// zero and the returned constant merely reflects where the refinement
    /// stopped.
    NumericMinimization,
}

/// A constant C such that (a - b)(phi(a) - phi(b)) >= C |a - b|^q is
/// expected to hold, by the chosen method.
pub fn pairing_constant(q: f64, method: PairingMethod) -> Result<f64> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::invalid(format!(
            "the pairing inequality needs q > 1, got {q}"
        )));
    }
    match method {
        PairingMethod::ExactQ2 => {
            if q != 2.0 {
                return Err(Error::invalid(format!(
                    "the exact pairing constant is only available at q = 2, got {q}"
                )));
            }
            Ok(1.0)
        }
        PairingMethod::AppendixBound => {
            if q < 2.0 {
                return Err(Error::invalid(format!(
                    "the closed-form pairing bound needs q >= 2, got {q}"
                )));
            }
            Ok(2f64.powf(-q))
        }
        PairingMethod::NumericMinimization => {
            // By homogeneity it is enough to scan b = 1, a = x in [-1, 1).
            let quotient =
                |x: f64| -> f64 { (1.0 - x) * (1.0 - signed_power(x, q)) / abs_power(1.0 - x, q) };
            let (mut lo, mut hi) = (-1.0, 1.0);
            let points = 2001usize;
            let mut best = f64::INFINITY;
            for _ in 0..60 {
                let step = (hi - lo) / (points - 1) as f64;
                let mut scan_best = f64::INFINITY;
                let mut scan_arg = lo;
                for k in 0..points {
                    let x = lo + step * k as f64;
                    if (1.0 - x).abs() < 1e-14 {
                        continue;
                    }
                    let v = quotient(x);
                    if v < scan_best {
                        scan_best = v;
                        scan_arg = x;
                    }
                }
                let improvement = best - scan_best;
                best = best.min(scan_best);
                if improvement.abs() <= 1e-6 {
                    break;
                }
                lo = (scan_arg - 2.0 * step).max(-1.0);
                hi = (scan_arg + 2.0 * step).min(1.0);
            }
            Ok(0.999 * best)
        }
    }
}

/// Slack of the pairing inequality at one pair:
/// (a - b)(phi(a) - phi(b)) - constant |a - b|^q. Nonnegative when the
/// constant is valid.
pub fn pairing_margin(a: f64, b: f64, q: f64, constant: f64) -> f64 {
    (a - b) * (signed_power(a, q) - signed_power(b, q)) - constant * abs_power(a - b, q)
}

/// The quotient ([v]_{2 sigma / q, q}^q + |w|_q^q) / E_q(u) for the fixed
/// radius-one mollifier split u = v + w.
///
/// A uniform bound on this quotient over fields and resolutions is the
/// discrete footprint of the smoothing estimate that converts kernel energy
/// into fractional regularity. Needs a heavy-tail kernel (so sigma exists)
/// and q > 2 sigma (so the seminorm order stays below one).
pub fn keyprop_ratio(spec: &KernelSpec, u: &Field, q: f64) -> Result<f64> {
    let sigma = spec.sigma().ok_or_else(|| {
        Error::invalid(format!(
            "the energy-to-seminorm ratio needs a heavy-tail kernel with a decay \
             rate sigma; the {} family has none",
            spec.family()
        ))
    })?;
    check_exponent(q)?;
    if q <= 2.0 * sigma {
        return Err(Error::invalid(format!(
            "the seminorm order 2 sigma / q must stay below one; q = {q} does not \
             exceed 2 sigma = {}",
            2.0 * sigma
        )));
    }
    let mollifier = build_mollifier(u.grid(), 1.0)?;
    let parts = mollifier_decompose(u, &mollifier)?;
    let s = 2.0 * sigma / q;
    let smooth_seminorm = fractional_seminorm(&parts.smooth_part, s, q)?;
    let rough_norm = lq_norm(&parts.remainder, q)?;
    let numerator = abs_power(smooth_seminorm, q) + abs_power(rough_norm, q);
    let denominator = energy(spec, u, q)?;
    if denominator == 0.0 {
        if numerator == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::invalid(
            "the kernel energy vanishes but the seminorm side does not; \
             the quotient is undefined for this field",
        ));
    }
    Ok(numerator / denominator)
}

/// |u|_{q*} / [u]_{s,q} with the embedding exponent q* = n q / (n - s q).
pub fn sobolev_ratio(u: &Field, s: f64, q: f64) -> Result<f64> {
    check_exponent(q)?;
    if !(0.0..1.0).contains(&s) || s == 0.0 {
        return Err(Error::invalid(format!(
            "the seminorm order s must lie in (0, 1), got {s}"
        )));
    }
    let n = u.grid().dimension() as f64;
    if s * q >= n {
        return Err(Error::invalid(format!(
            "the embedding needs s q < n; got s q = {} in dimension {n}",
            s * q
        )));
    }
    let seminorm = fractional_seminorm(u, s, q)?;
    if seminorm == 0.0 {
        return Err(Error::invalid(
            "the seminorm vanishes (constant field), so the embedding quotient \
             is undefined",
        ));
    }
    let q_star = n * q / (n - s * q);
    Ok(lq_norm(u, q_star)? / seminorm)
}

/// Exponents for interpolating |v|_q between |v|_{q~*} and |v|_1.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct InterpolationExponents {
    /// Weight of the embedding norm, 1 - 2 sigma / (n (q - 1) + 2 sigma).
    pub theta: f64,
    /// The embedding exponent n q / (n - 2 sigma).
    pub q_tilde_star: f64,
}

/// Computes theta and q~* and the interpolation identity they satisfy:
/// 1/q = theta / q~* + (1 - theta).
pub fn interpolation_exponents(
    dimension: usize,
    q: f64,
    sigma: f64,
) -> Result<InterpolationExponents> {
    if dimension == 0 || dimension > crate::grid::MAX_DIMENSION {
        return Err(Error::invalid(format!(
            "dimension must be 1, 2 or 3, got {dimension}"
        )));
    }
    if !(0.0..1.0).contains(&sigma) || sigma == 0.0 {
        return Err(Error::invalid(format!(
            "sigma must lie in (0, 1), got {sigma}"
        )));
    }
    check_exponent(q)?;
    let n = dimension as f64;
    if 2.0 * sigma >= n {
        return Err(Error::invalid(format!(
            "the embedding exponent needs 2 sigma < n; got 2 sigma = {} in \
             dimension {dimension}",
            2.0 * sigma
        )));
    }
    let theta = 1.0 - 2.0 * sigma / (n * (q - 1.0) + 2.0 * sigma);
    let q_tilde_star = n * q / (n - 2.0 * sigma);
    Ok(InterpolationExponents {
        theta,
        q_tilde_star,
    })
}

/// One evaluation of the bound |u|_q^q <= C (|u|_1^(q (1 - theta)) E^theta + E).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyInterpolationBound {
    /// The observed quotient lhs / (interpolation term + energy term).
    pub observed_constant: f64,
    /// |u|_q^q.
    pub norm_term: f64,
    /// |u|_1^(q (1 - theta)) E^theta.
    pub interpolation_term: f64,
    /// E_q(u).
    pub energy_term: f64,
    pub theta: f64,
}

/// Evaluates the quotient that the decay argument needs to be bounded
/// uniformly: the q-th power of the norm against the interpolation of mass
/// and energy. A bounded observed constant across fields and grids is the
/// discrete form of the differential inequality driving the decay rates.
pub fn energy_interpolation_bound(
    spec: &KernelSpec,
    u: &Field,
    q: f64,
) -> Result<EnergyInterpolationBound> {
    let sigma = spec.sigma().ok_or_else(|| {
        Error::invalid(format!(
            "the interpolation bound needs a heavy-tail kernel with a decay rate \
             sigma; the {} family has none",
            spec.family()
        ))
    })?;
    let exponents = interpolation_exponents(u.grid().dimension(), q, sigma)?;
    let theta = exponents.theta;
    let norm_term = moment(u, q);
    let mass = lq_norm(u, 1.0)?;
    let energy_term = energy(spec, u, q)?;
    let interpolation_term = mass.powf(q * (1.0 - theta)) * energy_term.powf(theta);
    let denominator = interpolation_term + energy_term;
    let observed_constant = if denominator == 0.0 {
        if norm_term == 0.0 {
            0.0
        } else {
            return Err(Error::invalid(
                "both the interpolation and energy terms vanish but the norm does \
                 not; the bound is undefined for this field",
            ));
        }
    } else {
        norm_term / denominator
    };
    Ok(EnergyInterpolationBound {
        observed_constant,
        norm_term,
        interpolation_term,
        energy_term,
        theta,
    })
}

/// sum_i |u_i|^q h^n.
fn moment(u: &Field, q: f64) -> f64 {
    u.values().iter().map(|&v| abs_power(v, q)).sum::<f64>() * u.grid().cell_volume()
}

fn check_exponent(q: f64) -> Result<()> {
    if !q.is_finite() || q < 1.0 {
        return Err(Error::invalid(format!(
            "the exponent q must satisfy q >= 1 (or be infinite for the sup \
             norm), got {q}"
        )));
    }
    Ok(())
}

/// |x|^q with the common exponents spelled out as products.
fn abs_power(x: f64, q: f64) -> f64 {
    if q == 2.0 {
        x * x
    } else if q == 1.0 {
        x.abs()
    } else if q == 3.0 {
        let a = x.abs();
        a * a * a
    } else if q == 4.0 {
        let s = x * x;
        s * s
    } else {
        x.abs().powf(q)
    }
}

/// phi(x) = |x|^(q - 1) sign(x), the derivative direction of |x|^q.
fn signed_power(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if q == 2.0 {
        x
    } else if q == 3.0 {
        x * x.abs()
    } else {
        x.abs().powf(q - 1.0).copysign(x)
    }
}

/// x^(1/q) for nonnegative x.
fn root(x: f64, q: f64) -> f64 {
    if q == 1.0 {
        x
    } else if q == 2.0 {
        x.sqrt()
    } else {
        x.powf(1.0 / q)
    }
}

/// 1 / |x|^alpha expressed through the squared distance.
fn inverse_distance_power(d2: f64, alpha: f64) -> f64 {
    if alpha == 2.0 {
        1.0 / d2
    } else if alpha == 3.0 {
        1.0 / (d2 * d2.sqrt())
    } else if alpha == 4.0 {
        1.0 / (d2 * d2)
    } else if alpha == 1.0 {
        1.0 / d2.sqrt()
    } else {
        d2.powf(-0.5 * alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{random_test_field, sample_function, TestFieldProfile};
    use crate::integrator::{evolve, Scheme, TimeSchedule};
    use crate::operator::Strategy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_cell_field(half_width: f64, a: f64, b: f64) -> Field {
        let grid = Grid::new(1, half_width, 2).unwrap();
        Field::new(grid, vec![a, b]).unwrap()
    }

    #[test]
    fn lq_norm_oracles() {
        let u = two_cell_field(1.0, 3.0, 4.0);
        assert_eq!(lq_norm(&u, 2.0).unwrap(), 5.0);
        assert_eq!(lq_norm(&u, 1.0).unwrap(), 7.0);
        assert_eq!(lq_norm(&u, f64::INFINITY).unwrap(), 4.0);

        let v = two_cell_field(0.5, 3.0, 4.0);
        assert_eq!(lq_norm(&v, 2.0).unwrap(), 12.5f64.sqrt());

        assert!(lq_norm(&u, 0.5).is_err());
        assert!(lq_norm(&u, f64::NAN).is_err());
    }

    #[test]
    fn total_mass_of_ones_is_the_box_volume() {
        let grid = Grid::new(1, 1.0, 2).unwrap();
        assert_eq!(total_mass(&Field::constant(grid, 1.0)), 2.0);
    }

    #[test]
    fn energy_matches_the_three_cell_oracle() {
        let grid = Grid::new_unchecked(1, 1.5, 3);
        let spec = KernelSpec::custom(1, 1.0, |_, _| 1.0).unwrap();
        let u = Field::new(grid, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(energy(&spec, &u, 2.0).unwrap(), 4.0);
    }

    #[test]
    fn energy_is_q_homogeneous() {
        let grid = Grid::new(1, 10.0, 48).unwrap();
        let spec = KernelSpec::fractional_tail(1, 0.5, 1.0, 1.0).unwrap();
        let u = random_test_field(&grid, 21, TestFieldProfile::RandomModes).unwrap();
        let lambda: f64 = -2.3;
        let scaled = Field::new(
            grid.clone(),
            u.values().iter().map(|v| lambda * v).collect(),
        )
        .unwrap();
        for q in [1.5, 2.0, 3.0] {
            let base = energy(&spec, &u, q).unwrap();
            let big = energy(&spec, &scaled, q).unwrap();
            let expected = lambda.abs().powf(q) * base;
            assert!((big - expected).abs() <= 1e-12 * expected.abs());
        }
    }

    #[test]
    fn quadratic_form_of_the_operator_is_half_the_energy() {
        let grid = Grid::new(1, 10.0, 48).unwrap();
        let spec = KernelSpec::fractional_tail(1, 0.5, 1.0, 1.0).unwrap();
        let op =
            OperatorApplier::assemble(&spec, &grid, BoundaryMode::Conservative, Strategy::Dense)
                .unwrap();
        let u = random_test_field(&grid, 8, TestFieldProfile::DoubleBump).unwrap();
        let lu = op.apply(&u).unwrap();
        let hn = grid.cell_volume();
        let quad: f64 = lu
            .values()
            .iter()
            .zip(u.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * hn;
        let e = energy(&spec, &u, 2.0).unwrap();
        assert!((quad + 0.5 * e).abs() <= 1e-12 * e.abs());
    }

    #[test]
    fn seminorm_matches_the_two_cell_oracle() {
        let u = two_cell_field(1.0, 0.0, 1.0);
        assert_eq!(fractional_seminorm(&u, 0.25, 2.0).unwrap(), 2f64.sqrt());
        assert!(fractional_seminorm(&u, 1.0, 2.0).is_err());
        assert!(fractional_seminorm(&u, 0.0, 2.0).is_err());
    }

    #[test]
    fn dissipation_residual_shrinks_quadratically() {
        let grid = Grid::new(1, 8.0, 48).unwrap();
        let spec = KernelSpec::fractional_tail(1, 0.5, 1.0, 1.0).unwrap();
        let op =
            OperatorApplier::assemble(&spec, &grid, BoundaryMode::Conservative, Strategy::Dense)
                .unwrap();
        let u0 = sample_function(&grid, |p| (-p[0] * p[0]).exp()).unwrap();
        let schedule = TimeSchedule::from_times(vec![0.6, 0.8, 1.0, 1.2, 1.4]).unwrap();
        let trajectory = evolve(&op, &u0, &schedule, Scheme::Rk4, 0.1).unwrap();
        let s = trajectory.samples();
        for q in [2.0, 3.0] {
            let coarse = dissipation_identity_residual(
                &op,
                (s[0].0, &s[0].1),
                &s[2].1,
                (s[4].0, &s[4].1),
                q,
            )
            .unwrap();
            let fine = dissipation_identity_residual(
                &op,
                (s[1].0, &s[1].1),
                &s[2].1,
                (s[3].0, &s[3].1),
                q,
            )
            .unwrap();
            let ratio = coarse / fine;
            assert!(
                (3.2..=4.8).contains(&ratio),
                "q = {q}: residual ratio {ratio} (coarse {coarse}, fine {fine})"
            );
        }
    }

    #[test]
    fn dissipation_residual_rejects_absorbing_operators() {
        let grid = Grid::new(1, 8.0, 16).unwrap();
        let spec = KernelSpec::fractional_tail(1, 0.5, 1.0, 1.0).unwrap();
        let op = OperatorApplier::assemble(&spec, &grid, BoundaryMode::Absorbing, Strategy::Dense)
            .unwrap();
        let u = Field::zeros(grid);
        let err = dissipation_identity_residual(&op, (0.0, &u), &u, (1.0, &u), 2.0).unwrap_err();
        assert!(err.to_string().contains("conservative"));
    }

    #[test]
    fn mollifier_mass_weights_sum_to_one_exactly() {
        let grid = Grid::new(2, 10.0, 64).unwrap();
        let mollifier = build_mollifier(&grid, 1.0).unwrap();
        let weights = mollifier.mass_weights();
        assert!(weights.iter().all(|&w| w >= 0.0));
        let center = weights.len() / 2;
        let off_center: f64 = weights
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != center)
            .map(|(_, &v)| v)
            .sum();
        assert_eq!(off_center + weights[center], 1.0);
        let plain: f64 = weights.iter().sum();
        assert!((plain - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn mollifier_needs_at_least_three_cells() {
        let grid = Grid::new(1, 5.0, 8).unwrap();
        let err = build_mollifier(&grid, 1.0).unwrap_err();
        assert!(err.to_string().contains("refine the grid"));
    }

    #[test]
    fn mollifying_a_unit_spike_reproduces_the_stencil() {
        let grid = Grid::new(1, 10.0, 64).unwrap();
        let mollifier = build_mollifier(&grid, 1.0).unwrap();
        let hn = grid.cell_volume();
        let center = 32usize;
        let mut values = vec![0.0; grid.cell_count()];
        values[center] = 1.0 / hn;
        let u = Field::new(grid.clone(), values).unwrap();
        let parts = mollifier_decompose(&u, &mollifier).unwrap();
        assert!(!parts.truncated);
        let k = mollifier.extent() as i64;
        for offset in -k..=k {
            let expected = mollifier.mass_weight([offset, 0, 0]) * (1.0 / hn);
            let got = parts.smooth_part.values()[(center as i64 + offset) as usize];
            assert_eq!(got, expected, "offset {offset}");
        }
        for (i, (w, u_i)) in parts.remainder.values().iter().zip(u.values()).enumerate() {
            assert_eq!(*w, u_i - parts.smooth_part.values()[i]);
        }
    }

    #[test]
    fn spikes_near_the_boundary_are_flagged_as_truncated() {
        let grid = Grid::new(1, 10.0, 64).unwrap();
        let mollifier = build_mollifier(&grid, 1.0).unwrap();
        let mut values = vec![0.0; grid.cell_count()];
        values[0] = 1.0;
        let u = Field::new(grid.clone(), values).unwrap();
        let parts = mollifier_decompose(&u, &mollifier).unwrap();
        assert!(parts.truncated);
    }

    #[test]
    fn mollified_parts_obey_the_norm_bounds() {
        let grid = Grid::new(1, 10.0, 64).unwrap();
        let mollifier = build_mollifier(&grid, 1.0).unwrap();
        for seed in 0..10u64 {
            let u = random_test_field(&grid, seed, TestFieldProfile::RandomModes).unwrap();
            let parts = mollifier_decompose(&u, &mollifier).unwrap();
            for q in [1.0, 2.0, 3.0] {
                let nu = lq_norm(&u, q).unwrap();
                let nv = lq_norm(&parts.smooth_part, q).unwrap();
                let nw = lq_norm(&parts.remainder, q).unwrap();
                assert!(nv <= nu * (1.0 + 1e-10), "q = {q}: |v| = {nv} > |u| = {nu}");
                assert!(
                    nw <= 2.0 * nu * (1.0 + 1e-10),
                    "q = {q}: |w| = {nw} > 2 |u| = {}",
                    2.0 * nu
                );
            }
        }
    }

    #[test]
    fn pairing_constants_match_their_closed_forms() {
        assert_eq!(pairing_constant(2.0, PairingMethod::ExactQ2).unwrap(), 1.0);
        assert_eq!(
            pairing_constant(4.0, PairingMethod::AppendixBound).unwrap(),
            1.0 / 16.0
        );
        let c2 = pairing_constant(2.0, PairingMethod::NumericMinimization).unwrap();
        assert!((c2 - 0.999).abs() <= 1e-9, "numeric q=2 constant {c2}");
        let c4 = pairing_constant(4.0, PairingMethod::NumericMinimization).unwrap();
        assert!(
            (c4 - 0.999 * 0.25).abs() <= 1e-4,
            "numeric q=4 constant {c4}"
        );
        let c15 = pairing_constant(1.5, PairingMethod::NumericMinimization).unwrap();
        assert!(c15 > 0.0 && c15 < 0.05, "numeric q=1.5 constant {c15}");

        assert!(pairing_constant(1.0, PairingMethod::NumericMinimization).is_err());
        assert!(pairing_constant(3.0, PairingMethod::ExactQ2).is_err());
        assert!(pairing_constant(1.5, PairingMethod::AppendixBound).is_err());
    }

    #[test]
    fn pairing_margins_are_nonnegative_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for q in [1.5, 2.0, 3.0, 4.0] {
            let c = pairing_constant(q, PairingMethod::NumericMinimization).unwrap();
            for _ in 0..10_000 {
                let a: f64 = rng.gen_range(-5.0..5.0);
                let b: f64 = rng.gen_range(-5.0..5.0);
                let margin = pairing_margin(a, b, q, c);
                let scale = abs_power(a.abs().max(b.abs()), q);
                assert!(
                    margin >= -1e-12 * scale,
                    "q = {q}, a = {a}, b = {b}: margin {margin}"
                );
            }
        }
    }

    #[test]
    fn keyprop_ratio_is_positive_and_guards_its_inputs() {
        let grid = Grid::new(1, 10.0, 64).unwrap();
        let spec = KernelSpec::fractional_tail(1, 0.5, 1.0, 1.0).unwrap();
        let u = random_test_field(&grid, 3, TestFieldProfile::GaussianBump).unwrap();
        let ratio = keyprop_ratio(&spec, &u, 2.0).unwrap();
        assert!(ratio.is_finite() && ratio > 0.0, "ratio {ratio}");

        assert_eq!(
            keyprop_ratio(&spec, &Field::zeros(grid.clone()), 2.0).unwrap(),
            0.0
        );
        assert!(keyprop_ratio(&spec, &u, 1.0).is_err());
        let compact = KernelSpec::compact_smooth(1, 1.0, 1.0).unwrap();
        assert!(keyprop_ratio(&compact, &u, 2.0).is_err());
    }

    #[test]
    fn sobolev_ratio_guards_its_inputs() {
        let grid = Grid::new(1, 10.0, 64).unwrap();
        let u = random_test_field(&grid, 5, TestFieldProfile::GaussianBump).unwrap();
        let ratio = sobolev_ratio(&u, 0.25, 2.0).unwrap();
        assert!(ratio.is_finite() && ratio > 0.0);

        assert!(sobolev_ratio(&u, 0.6, 2.0).is_err());
        assert!(sobolev_ratio(&Field::zeros(grid), 0.25, 2.0).is_err());
    }

    #[test]
    fn interpolation_exponents_match_the_oracle() {
        let e = interpolation_exponents(2, 2.0, 0.5).unwrap();
        assert!((e.theta - 2.0 / 3.0).abs() <= 1e-15);
        assert_eq!(e.q_tilde_star, 4.0);

        assert!(interpolation_exponents(1, 2.0, 0.5).is_err());
        assert!(interpolation_exponents(2, 2.0, 1.5).is_err());
    }

    #[test]
    fn interpolation_identity_holds_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let dimension = rng.gen_range(1..=3usize);
            let q = rng.gen_range(1.0..6.0);
            let max_sigma = (dimension as f64 / 2.0 - 0.01).min(0.95);
            let sigma = rng.gen_range(0.05..max_sigma);
            let e = interpolation_exponents(dimension, q, sigma).unwrap();
            let residual = (1.0 / q - e.theta / e.q_tilde_star - (1.0 - e.theta)).abs();
            assert!(
                residual <= 1e-12,
                "n = {dimension}, q = {q}, sigma = {sigma}: residual {residual}"
            );
        }
    }

    #[test]
    fn energy_interpolation_bound_is_finite_on_decaying_fields() {
        let grid = Grid::new(1, 10.0, 64).unwrap();
        let spec = KernelSpec::fractional_tail(1, 0.4, 1.0, 1.0).unwrap();
        for seed in [2u64, 9, 17] {
            let u = random_test_field(&grid, seed, TestFieldProfile::DoubleBump).unwrap();
            let report = energy_interpolation_bound(&spec, &u, 2.0).unwrap();
            assert!(report.observed_constant.is_finite() && report.observed_constant > 0.0);
            assert!(report.interpolation_term >= 0.0);
            assert!(report.energy_term >= 0.0);
            assert!(report.theta > 0.0 && report.theta < 1.0);
        }
    }
}
