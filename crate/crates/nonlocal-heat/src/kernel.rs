//! Jump kernel families: compactly supported bumps, capped power-law tails,
//! their non-translation-invariant modulation, and user-supplied kernels.
//!
//! Every kernel is bounded, nonnegative and symmetric, so the operator it
//! induces is of zero order: no singularity at the diagonal, all the
//! interesting behaviour comes from how slowly `J` decays at infinity. The
//! heavy-tail families satisfy the lower bound
//! `J(x, y) >= c1 |x - y|^-(n + 2 sigma)` for `|x - y| > c2`, which is the
//! structural hypothesis behind the fractional decay rates measured in
//! [`crate::decay`].

use crate::error::{Error, Result};
use crate::grid::{distance_squared, Grid, Point};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

/// Shell lattice sums for exterior integrals stop at this multiple of the
/// box half-width; beyond it an analytic remainder takes over.
pub const TAIL_SHELL_FACTOR: f64 = 8.0;

/// The built-in kernel shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `cap * bump(|x - y| / radius)`, supported in `|x - y| <= radius`.
    CompactSmooth,
    /// `min(cap, c1 |x - y|^-(n + 2 sigma))`: bounded near the diagonal,
    /// exact power-law tail.
    FractionalTail,
    /// The fractional tail times `1 + modulation * g(x) g(y)` for a fixed
    /// smooth odd `g` with `|g| <= 1`; symmetric but not a convolution.
    NonconvolutionFractional,
    /// Caller-supplied symmetric kernel, mainly for tests and experiments.
    Custom,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            KernelFamily::CompactSmooth => "compact_smooth",
            KernelFamily::FractionalTail => "fractional_tail",
            KernelFamily::NonconvolutionFractional => "nonconvolution_fractional",
            KernelFamily::Custom => "custom",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<KernelFamily> {
        match s {
            "compact_smooth" => Ok(KernelFamily::CompactSmooth),
            "fractional_tail" => Ok(KernelFamily::FractionalTail),
            "nonconvolution_fractional" => Ok(KernelFamily::NonconvolutionFractional),
            "custom" => Ok(KernelFamily::Custom),
            other => Err(Error::invalid(format!(
                "unknown kernel family {other:?}; expected compact_smooth, \
                 fractional_tail or nonconvolution_fractional"
            ))),
        }
    }
}

type CustomKernel = Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>;

/// A fully parameterized kernel, tied to a spatial dimension.
#[derive(Clone)]
pub struct KernelSpec {
    family: KernelFamily,
    dimension: usize,
    sigma: f64,
    c1: f64,
    c2: f64,
    cap: f64,
    modulation: f64,
    radius: f64,
    mass: Option<f64>,
    custom: Option<CustomKernel>,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("family", &self.family)
            .field("dimension", &self.dimension)
            .field("sigma", &self.sigma)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("cap", &self.cap)
            .field("modulation", &self.modulation)
            .field("radius", &self.radius)
            .field("mass", &self.mass)
            .finish()
    }
}

fn check_dimension(dimension: usize) -> Result<()> {
    if dimension == 0 || dimension > crate::grid::MAX_DIMENSION {
        return Err(Error::invalid(format!(
            "kernel dimension must be 1, 2 or 3, got {dimension}"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::invalid(format!(
            "{name} must be a positive real, got {value}"
        )));
    }
    Ok(())
}

impl KernelSpec {
    /// Smooth bump of height `cap` supported in `|x - y| <= radius`.
    pub fn compact_smooth(dimension: usize, cap: f64, radius: f64) -> Result<KernelSpec> {
        check_dimension(dimension)?;
        check_positive("cap", cap)?;
        check_positive("radius", radius)?;
        Ok(KernelSpec {
            family: KernelFamily::CompactSmooth,
            dimension,
            sigma: 0.0,
            c1: 0.0,
            c2: 1.0,
            cap,
            modulation: 0.0,
            radius,
            mass: None,
            custom: None,
        })
    }

    /// Capped power law `min(cap, c1 |x - y|^-(n + 2 sigma))`.
    pub fn fractional_tail(dimension: usize, sigma: f64, c1: f64, cap: f64) -> Result<KernelSpec> {
        check_dimension(dimension)?;
        check_sigma(sigma)?;
        check_positive("c1", c1)?;
        check_positive("cap", cap)?;
        Ok(KernelSpec {
            family: KernelFamily::FractionalTail,
            dimension,
            sigma,
            c1,
            c2: 1.0,
            cap,
            modulation: 0.0,
            radius: 1.0,
            mass: None,
            custom: None,
        })
    }

    /// Fractional tail with the symmetric modulation
    /// `(1 + modulation * g(x) g(y))`, `g(x) = tanh(x_1)`. Bounded between
    /// `(1 - modulation)` and `(1 + modulation)` times the unmodulated
    /// kernel, so the tail lower bound survives with constant
    /// `c1 (1 - modulation)`.
    pub fn nonconvolution_fractional(
        dimension: usize,
        sigma: f64,
        c1: f64,
        cap: f64,
        modulation: f64,
    ) -> Result<KernelSpec> {
        check_dimension(dimension)?;
        check_sigma(sigma)?;
        check_positive("c1", c1)?;
        check_positive("cap", cap)?;
        if !(0.0..1.0).contains(&modulation) {
            return Err(Error::invalid(format!(
                "modulation must lie in [0, 1), got {modulation}"
            )));
        }
        Ok(KernelSpec {
            family: KernelFamily::NonconvolutionFractional,
            dimension,
            sigma,
            c1,
            c2: 1.0,
            cap,
            modulation,
            radius: 1.0,
            mass: None,
            custom: None,
        })
    }

    /// Wraps a caller-supplied symmetric nonnegative kernel. `cap` must be a
    /// correct upper bound for the supplied values; it feeds stability
    /// estimates. Exterior-tail operations are not available.
    pub fn custom(
        dimension: usize,
        cap: f64,
        eval: impl Fn(Point, Point) -> f64 + Send + Sync + 'static,
    ) -> Result<KernelSpec> {
        check_dimension(dimension)?;
        check_positive("cap", cap)?;
        Ok(KernelSpec {
            family: KernelFamily::Custom,
            dimension,
            sigma: 0.0,
            c1: 0.0,
            c2: 1.0,
            cap,
            modulation: 0.0,
            radius: 1.0,
            mass: None,
            custom: Some(Arc::new(eval)),
        })
    }

    /// Overrides the tail onset radius `c2` (default 1).
    pub fn with_tail_onset(mut self, c2: f64) -> Result<KernelSpec> {
        check_positive("c2", c2)?;
        self.c2 = c2;
        Ok(self)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn sigma(&self) -> Option<f64> {
        match self.family {
            KernelFamily::FractionalTail | KernelFamily::NonconvolutionFractional => {
                Some(self.sigma)
            }
            _ => None,
        }
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn modulation(&self) -> f64 {
        self.modulation
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Mass target recorded by the last [`KernelSpec::normalize_mass`].
    pub fn mass(&self) -> Option<f64> {
        self.mass
    }

    /// True when `J(x, y)` depends on `x - y` only.
    pub fn is_convolution(&self) -> bool {
        matches!(
            self.family,
            KernelFamily::CompactSmooth | KernelFamily::FractionalTail
        )
    }

    /// Pointwise upper bound on the kernel values.
    pub fn sup_bound(&self) -> f64 {
        self.cap * (1.0 + self.modulation)
    }

    /// Evaluates `J(x, y)`.
    pub fn evaluate(&self, x: Point, y: Point) -> f64 {
        match self.family {
            KernelFamily::Custom => (self.custom.as_ref().expect("custom kernel fn"))(x, y),
            KernelFamily::NonconvolutionFractional => {
                // Multiplying the shapes first keeps J(x, y) and J(y, x)
                // bitwise identical.
                let gg = modulation_shape(x) * modulation_shape(y);
                self.evaluate_d2(distance_squared(x, y), gg)
            }
            _ => self.evaluate_d2(distance_squared(x, y), 0.0),
        }
    }

    /// Built-in families as a function of squared distance; `gg` is the
    /// product of the modulation shapes at the two points (ignored unless the
    /// family is modulated). Operator hot loops use this with cached shapes;
    /// it must stay the single definition of the built-in kernel values.
    pub(crate) fn evaluate_d2(&self, d2: f64, gg: f64) -> f64 {
        match self.family {
            KernelFamily::CompactSmooth => {
                self.cap * bump_profile_sq(d2 / (self.radius * self.radius))
            }
            KernelFamily::FractionalTail => self.capped_tail(d2),
            KernelFamily::NonconvolutionFractional => {
                self.capped_tail(d2) * (1.0 + self.modulation * gg)
            }
            KernelFamily::Custom => unreachable!("custom kernels need coordinates"),
        }
    }

    /// Evaluates the convolution profile `K(z)` with `J(x, y) = K(x - y)`.
    /// Errors for families that are not convolutions.
    pub fn convolution_profile(&self, z: Point) -> Result<f64> {
        if !self.is_convolution() {
            return Err(Error::unsupported(format!(
                "kernel family {} is not a convolution",
                self.family
            )));
        }
        Ok(self.evaluate(z, [0.0; 3]))
    }

    fn capped_tail(&self, d2: f64) -> f64 {
        if d2 == 0.0 {
            return self.cap;
        }
        // n + 2 sigma is an integer for sigma = 1/2, which covers the most
        // common runs; spelling those powers out avoids powf in the pairwise
        // hot loops. Each branch is a fixed expression, so repeated
        // evaluations of the same pair stay bitwise identical.
        let twice_exponent = self.dimension as f64 + 2.0 * self.sigma;
        let tail = if twice_exponent == 2.0 {
            self.c1 / d2
        } else if twice_exponent == 3.0 {
            self.c1 / (d2 * d2.sqrt())
        } else if twice_exponent == 4.0 {
            self.c1 / (d2 * d2)
        } else {
            self.c1 * d2.powf(-0.5 * twice_exponent)
        };
        tail.min(self.cap)
    }

    /// Exact integral of the kernel profile over the whole space. This is the
    /// row integral of a convolution kernel; modulated and custom kernels
    /// have x-dependent rows and are rejected.
    pub fn continuum_mass(&self) -> Result<f64> {
        let n = self.dimension;
        match self.family {
            KernelFamily::CompactSmooth => {
                // cap * r^n * |S^(n-1)| * int_0^1 t^(n-1) bump(t) dt
                let shell = unit_sphere_area(n);
                let radial = integrate_adaptive(
                    |t| t.powi(n as i32 - 1) * bump_profile_sq(t * t),
                    0.0,
                    1.0,
                    1e-13,
                );
                Ok(self.cap * self.radius.powi(n as i32) * shell * radial)
            }
            KernelFamily::FractionalTail => {
                // Below the crossover radius rho the kernel is the constant
                // cap; beyond it the power law integrates in closed form.
                let rho = (self.c1 / self.cap).powf(1.0 / (n as f64 + 2.0 * self.sigma));
                let inner = self.cap * unit_ball_volume(n) * rho.powi(n as i32);
                let outer = self.c1 * unit_sphere_area(n) * rho.powf(-2.0 * self.sigma)
                    / (2.0 * self.sigma);
                Ok(inner + outer)
            }
            KernelFamily::NonconvolutionFractional | KernelFamily::Custom => {
                Err(Error::unsupported(format!(
                    "continuum mass is only defined for convolution families, not {}",
                    self.family
                )))
            }
        }
    }

    /// Rescales the kernel amplitude (`cap` and `c1` jointly) so the
    /// continuum mass equals `target`. The scaling is exact, so a round trip
    /// through two normalizations recovers the original parameters.
    pub fn normalize_mass(&self, target: f64) -> Result<KernelSpec> {
        check_positive("mass target", target)?;
        let current = self.continuum_mass().map_err(|_| {
            Error::unsupported(format!(
                "normalize_mass is not defined for family {}; \
                 its row integrals depend on x",
                self.family
            ))
        })?;
        let scale = target / current;
        let mut out = self.clone();
        out.cap *= scale;
        out.c1 *= scale;
        out.mass = Some(target);
        Ok(out)
    }

    /// Integral of `J(x, .)` over the exterior of the grid box, by a shell
    /// lattice sum out to `TAIL_SHELL_FACTOR * L` from `x` plus the analytic
    /// radial remainder of the power-law tail. Compactly supported kernels
    /// whose support does not reach the boundary return exactly 0.
    pub fn tail_mass(&self, grid: &Grid, x: Point) -> Result<f64> {
        if grid.dimension() != self.dimension {
            return Err(Error::GridMismatch(format!(
                "kernel dimension {} vs grid dimension {}",
                self.dimension,
                grid.dimension()
            )));
        }
        match self.family {
            KernelFamily::Custom => {
                return Err(Error::unsupported(
                    "tail_mass needs a known decay profile; custom kernels have none",
                ))
            }
            KernelFamily::CompactSmooth if grid.distance_to_boundary(x) >= self.radius => {
                return Ok(0.0)
            }
            _ => {}
        }
        // Beyond the support radius a compact kernel contributes nothing, so
        // its shell can stop there instead of sweeping the extended box.
        let r_max = match self.family {
            KernelFamily::CompactSmooth => self.radius,
            _ => TAIL_SHELL_FACTOR * grid.half_width(),
        };
        let shell = self.shell_sum(grid, x, r_max);
        let remainder = match self.family {
            KernelFamily::CompactSmooth => 0.0,
            _ => self.tail_remainder(r_max),
        };
        Ok(shell + remainder)
    }

    /// Analytic integral of the unmodulated power-law tail over `|z| > r`.
    pub(crate) fn tail_remainder(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::FractionalTail | KernelFamily::NonconvolutionFractional => {
                self.c1 * unit_sphere_area(self.dimension) * r.powf(-2.0 * self.sigma)
                    / (2.0 * self.sigma)
            }
            _ => 0.0,
        }
    }

    /// Midpoint sum of `J(x, .)` over lattice cells outside the box but
    /// within distance `r_max` of `x`, on the infinite extension of the
    /// grid lattice.
    fn shell_sum(&self, grid: &Grid, x: Point, r_max: f64) -> f64 {
        let h = grid.spacing();
        let l = grid.half_width();
        let m = grid.points_per_axis() as i64;
        let n = grid.dimension();
        let range = |x_a: f64| -> (i64, i64) {
            let lo = ((x_a - r_max + l) / h - 0.5).ceil() as i64;
            let hi = ((x_a + r_max + l) / h - 0.5).floor() as i64;
            (lo, hi)
        };
        let center = |k: i64| -> f64 { -l + (k as f64 + 0.5) * h };
        let mut ranges = [(0i64, -1i64); 3];
        for axis in 0..n {
            ranges[axis] = range(x[axis]);
        }
        for axis in n..3 {
            ranges[axis] = (0, 0);
        }
        let r2_max = r_max * r_max;
        let hn = grid.cell_volume();
        let mut sum = 0.0;
        let mut y = [0.0; 3];
        for k0 in ranges[0].0..=ranges[0].1 {
            y[0] = if n > 0 { center(k0) } else { 0.0 };
            for k1 in ranges[1].0..=ranges[1].1 {
                if n > 1 {
                    y[1] = center(k1);
                }
                for k2 in ranges[2].0..=ranges[2].1 {
                    if n > 2 {
                        y[2] = center(k2);
                    }
                    let inside_box = (0..n).all(|a| {
                        let k = [k0, k1, k2][a];
                        k >= 0 && k < m
                    });
                    if inside_box {
                        continue;
                    }
                    if distance_squared(x, y) > r2_max {
                        continue;
                    }
                    sum += self.evaluate(x, y) * hn;
                }
            }
        }
        sum
    }

    /// Samples the kernel against its contracts and estimates one row
    /// integral. Deterministic for a given spec, grid and sample count.
    pub fn validate(&self, grid: &Grid, sample_count: usize) -> Result<KernelReport> {
        if grid.dimension() != self.dimension {
            return Err(Error::GridMismatch(format!(
                "kernel dimension {} vs grid dimension {}",
                self.dimension,
                grid.dimension()
            )));
        }
        if sample_count == 0 {
            return Err(Error::invalid("sample_count must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
        let n = self.dimension;
        let l = grid.half_width();
        let coord = Uniform::new(-l, l);
        let gauss = Uniform::new(-1.0f64, 1.0);

        let mut symmetry_defect: f64 = 0.0;
        let mut max_value: f64 = 0.0;
        let mut worst_tail_ratio: Option<f64> = None;
        let diameter = 2.0 * l * (n as f64).sqrt();
        // Log-uniform distances cover the near-onset region where a cap that
        // is too low would dip under the power-law floor.
        let log_d = Uniform::new((self.c2 * 1.0001).ln(), diameter.ln());

        for k in 0..sample_count {
            let mut x = [0.0; 3];
            for axis in 0..n {
                x[axis] = coord.sample(&mut rng);
            }
            // Random direction by normalizing a cube sample (rejecting tiny
            // vectors); adequate isotropy for validation purposes.
            let mut dir = [0.0; 3];
            loop {
                let mut norm2 = 0.0;
                for axis in 0..n {
                    dir[axis] = gauss.sample(&mut rng);
                    norm2 += dir[axis] * dir[axis];
                }
                if norm2 > 1e-4 {
                    let norm = norm2.sqrt();
                    for d in dir.iter_mut().take(n) {
                        *d /= norm;
                    }
                    break;
                }
            }
            // Alternate between tail distances and short distances so both
            // regimes are exercised.
            let d = if k % 3 == 0 {
                Uniform::new(0.0, self.c2 * 1.5).sample(&mut rng).max(1e-9)
            } else {
                log_d.sample(&mut rng).exp()
            };
            let mut y = x;
            for axis in 0..n {
                y[axis] = x[axis] + d * dir[axis];
            }

            let v_xy = self.evaluate(x, y);
            let v_yx = self.evaluate(y, x);
            if !v_xy.is_finite() || v_xy < 0.0 {
                return Err(Error::invalid(format!(
                    "kernel value {v_xy} at distance {d} violates nonnegativity"
                )));
            }
            symmetry_defect = symmetry_defect.max((v_xy - v_yx).abs());
            max_value = max_value.max(v_xy);
            if d > self.c2 {
                if let Some(sigma) = self.sigma() {
                    let floor = self.c1 * d.powf(-(n as f64 + 2.0 * sigma));
                    let ratio = v_xy / floor;
                    worst_tail_ratio = Some(worst_tail_ratio.map_or(ratio, |w: f64| w.min(ratio)));
                }
            }
        }
        max_value = max_value.max(self.evaluate([0.0; 3], [0.0; 3]));

        // The tail bound must hold with the guaranteed constant
        // c1 (1 - modulation); a small relative slack absorbs roundoff.
        let tail_bound_satisfied = match self.sigma() {
            Some(_) => worst_tail_ratio
                .map(|w| w >= (1.0 - self.modulation) * (1.0 - 1e-9))
                .unwrap_or(false),
            None => false,
        };

        let row_integral_estimate = self.row_integral(grid, nearest_cell(grid, [0.0; 3]))?;

        Ok(KernelReport {
            family: self.family,
            row_integral_estimate,
            tail_bound_satisfied,
            worst_tail_ratio,
            symmetry_defect,
            max_value,
        })
    }

    /// Row integral of `J(x_i, .)` over all of space: lattice sum over the
    /// box plus the exterior tail.
    pub fn row_integral(&self, grid: &Grid, cell: usize) -> Result<f64> {
        let x = grid.coordinate(cell);
        let hn = grid.cell_volume();
        let mut interior = 0.0;
        for j in 0..grid.cell_count() {
            interior += self.evaluate(x, grid.coordinate(j)) * hn;
        }
        let tail = match self.family {
            KernelFamily::Custom => 0.0,
            _ => self.tail_mass(grid, x)?,
        };
        Ok(interior + tail)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !sigma.is_finite() || sigma <= 0.0 || sigma >= 1.0 {
        return Err(Error::invalid(format!(
            "sigma must lie in the open interval (0, 1), got {sigma}"
        )));
    }
    Ok(())
}

/// Validation summary produced by [`KernelSpec::validate`].
#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub family: KernelFamily,
    /// Estimate of `integral J(x, y) dy` at the cell nearest the origin.
    pub row_integral_estimate: f64,
    /// Whether the sampled tail stayed above
    /// `c1 (1 - modulation) |x - y|^-(n + 2 sigma)` beyond `c2`.
    pub tail_bound_satisfied: bool,
    /// Smallest sampled ratio against the unmodulated power-law floor;
    /// absent for families without a tail exponent.
    pub worst_tail_ratio: Option<f64>,
    /// Largest sampled `|J(x, y) - J(y, x)|`.
    pub symmetry_defect: f64,
    /// Largest sampled kernel value.
    pub max_value: f64,
}

/// Index of the cell whose center is closest to `p`.
pub fn nearest_cell(grid: &Grid, p: Point) -> usize {
    let m = grid.points_per_axis();
    let mut idx = [0usize; 3];
    for axis in 0..grid.dimension() {
        let f = ((p[axis] + grid.half_width()) / grid.spacing() - 0.5).round();
        idx[axis] = f.clamp(0.0, (m - 1) as f64) as usize;
    }
    grid.flat_index(idx)
}

/// Smooth bump profile as a function of `t^2`: `exp(-t^2 / (1 - t^2))` for
/// `t^2 < 1`, zero beyond. Equals 1 at the origin, vanishes with all
/// derivatives at `t = 1`.
pub(crate) fn bump_profile_sq(t2: f64) -> f64 {
    if t2 >= 1.0 {
        0.0
    } else {
        (-t2 / (1.0 - t2)).exp()
    }
}

/// Fixed smooth odd modulation shape with `|g| <= 1`.
pub(crate) fn modulation_shape(x: Point) -> f64 {
    x[0].tanh()
}

/// Volume of the unit ball in dimension `n`.
pub(crate) fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => unreachable!("dimension checked at construction"),
    }
}

/// Surface area of the unit sphere bounding that ball.
pub(crate) fn unit_sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => unreachable!("dimension checked at construction"),
    }
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub(crate) fn integrate_adaptive(f: impl Fn(f64) -> f64 + Copy, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn recurse(
        f: impl Fn(f64) -> f64 + Copy,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let mid = 0.5 * (a + b);
        let left = simpson(f, a, mid);
        let right = simpson(f, mid, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, mid, left, tol / 2.0, depth - 1)
                + recurse(f, mid, b, right, tol / 2.0, depth - 1)
        }
    }
    recurse(f, a, b, simpson(f, a, b), tol, 40)
}
