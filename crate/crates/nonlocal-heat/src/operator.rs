//! Discrete nonlocal diffusion operator on the box grid.
//!
//! For a field u the operator computes the midpoint discretization of
//! integral J(x_i, y) (u(y) - u(x_i)) dy,
//!
//! (L u)_i = sum_{j != i} J(x_i, x_j) h^n (u_j - u_i) - tail_i u_i.
//!
//! In conservative mode tail_i = 0 and the integral runs over the box only,
//! so the operator annihilates constants and preserves total mass. In
//! absorbing mode tail_i approximates the exterior integral of the kernel
//! row, modelling a field on the whole space that is negligible outside the
//! box: mass near the boundary leaks out and constants decay.
//!
//! The difference form above is used verbatim by the `Dense` and `OnTheFly`
//! strategies, so applying the operator to a constant field yields exactly
//! zero (or exactly -tail_i in absorbing mode) with no rounding residue.
//! The `FftConvolution` strategy evaluates sum_j J(x_i - x_j) h^n u_j by a
//! zero-padded FFT and subtracts the convolution of the all-ones field,
//! computed once at assembly through the same code path, times u_i; constants
//! therefore cancel bitwise there as well.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{distance_squared, Field, Grid, Point};
use crate::kernel::{modulation_shape, KernelFamily, KernelSpec};

/// Default cap on dense weight-matrix storage, 1.5 GiB. A 128 x 128 grid in
/// two dimensions already needs 2 GiB and is redirected to `OnTheFly`.
pub const DEFAULT_DENSE_BUDGET_BYTES: u64 = 1_610_612_736;

/// Treatment of the box boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// No flux through the boundary: the kernel row is truncated to the box
    /// and total mass is preserved.
    Conservative,
    /// The exterior integral of each kernel row acts as a sink, as if the
    /// field continued by zero outside the box.
    Absorbing,
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryMode::Conservative => "conservative",
            BoundaryMode::Absorbing => "absorbing",
        })
    }
}

impl FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<BoundaryMode> {
        match s {
            "conservative" => Ok(BoundaryMode::Conservative),
            "absorbing" => Ok(BoundaryMode::Absorbing),
            other => Err(Error::invalid(format!(
                "unknown boundary mode {other:?}; expected conservative or absorbing"
            ))),
        }
    }
}

/// How the pairwise weights are evaluated when the operator is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Precompute all M^n x M^n weights. Fastest per application, quadratic
    /// memory; guarded by a byte budget.
    Dense,
    /// Recompute weights on every application. No extra memory, quadratic
    /// time per application.
    OnTheFly,
    /// Zero-padded FFT convolution. Requires a convolution kernel; near
    /// linear time and memory.
    FftConvolution,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Dense => "dense",
            Strategy::OnTheFly => "on_the_fly",
            Strategy::FftConvolution => "fft_convolution",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        match s {
            "dense" => Ok(Strategy::Dense),
            "on_the_fly" => Ok(Strategy::OnTheFly),
            "fft_convolution" => Ok(Strategy::FftConvolution),
            other => Err(Error::invalid(format!(
                "unknown strategy {other:?}; expected dense, on_the_fly or fft_convolution"
            ))),
        }
    }
}

/// Pairwise kernel weights J(x_i, x_j) h^n with per-cell caches.
///
/// Coordinates and modulation shapes are precomputed once so the quadratic
/// loops pay only for the radial profile. `kernel_value` reproduces
/// `KernelSpec::evaluate` bitwise; a test pins that equivalence.
pub(crate) struct PairWeights {
    spec: KernelSpec,
    points: Vec<Point>,
    shapes: Option<Vec<f64>>,
    cell_volume: f64,
}

impl PairWeights {
    pub(crate) fn new(spec: &KernelSpec, grid: &Grid) -> PairWeights {
        let points: Vec<Point> = (0..grid.cell_count()).map(|i| grid.coordinate(i)).collect();
        let shapes = matches!(spec.family(), KernelFamily::NonconvolutionFractional)
            .then(|| points.iter().map(|&p| modulation_shape(p)).collect());
        PairWeights {
            spec: spec.clone(),
            points,
            shapes,
            cell_volume: grid.cell_volume(),
        }
    }

    pub(crate) fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    /// J(x_i, x_j).
    pub(crate) fn kernel_value(&self, i: usize, j: usize) -> f64 {
        match self.spec.family() {
            KernelFamily::Custom => self.spec.evaluate(self.points[i], self.points[j]),
            KernelFamily::NonconvolutionFractional => {
                let shapes = self
                    .shapes
                    .as_ref()
                    .expect("shapes cached for modulated kernels");
                let gg = shapes[i] * shapes[j];
                self.spec
                    .evaluate_d2(distance_squared(self.points[i], self.points[j]), gg)
            }
            _ => self
                .spec
                .evaluate_d2(distance_squared(self.points[i], self.points[j]), 0.0),
        }
    }

    /// J(x_i, x_j) h^n, the quadrature weight of cell j in row i.
    pub(crate) fn weight(&self, i: usize, j: usize) -> f64 {
        self.kernel_value(i, j) * self.cell_volume
    }
}

enum Storage {
    Dense(Vec<f64>),
    OnTheFly,
    Fft(Box<FftConvolver>),
}

/// An assembled operator: kernel, grid, boundary treatment and the data the
/// chosen strategy needs to apply L to fields.
pub struct OperatorApplier {
    grid: Grid,
    spec: KernelSpec,
    mode: BoundaryMode,
    strategy: Strategy,
    pair: PairWeights,
    /// sum_{j != i} w_ij, the in-box part of the row sums.
    interior: Vec<f64>,
    /// Exterior absorption coefficients; all zero in conservative mode.
    tail: Vec<f64>,
    storage: Storage,
}

impl fmt::Debug for OperatorApplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorApplier")
            .field("strategy", &self.strategy)
            .field("mode", &self.mode)
            .field("cells", &self.grid.cell_count())
            .finish()
    }
}

impl OperatorApplier {
    /// Assembles the operator with the default dense memory budget.
    pub fn assemble(
        spec: &KernelSpec,
        grid: &Grid,
        mode: BoundaryMode,
        strategy: Strategy,
    ) -> Result<OperatorApplier> {
        Self::assemble_with_budget(spec, grid, mode, strategy, DEFAULT_DENSE_BUDGET_BYTES)
    }

    /// Assembles the operator, refusing dense storage beyond `budget` bytes.
    pub fn assemble_with_budget(
        spec: &KernelSpec,
        grid: &Grid,
        mode: BoundaryMode,
        strategy: Strategy,
        budget: u64,
    ) -> Result<OperatorApplier> {
        if spec.dimension() != grid.dimension() {
            return Err(Error::GridMismatch(format!(
                "kernel dimension {} vs grid dimension {}",
                spec.dimension(),
                grid.dimension()
            )));
        }
        let cells = grid.cell_count();
        let pair = PairWeights::new(spec, grid);
        let (storage, interior) = match strategy {
            Strategy::Dense => {
                let required = (cells as u64) * (cells as u64) * 8;
                if required > budget {
                    return Err(Error::MemoryBudget { required, budget });
                }
                let mut weights = vec![0.0; cells * cells];
                weights
                    .par_chunks_mut(cells)
                    .enumerate()
                    .for_each(|(i, row)| {
                        for (j, slot) in row.iter_mut().enumerate() {
                            if j != i {
                                *slot = pair.weight(i, j);
                            }
                        }
                    });
                let interior: Vec<f64> = weights
                    .par_chunks(cells)
                    .map(|row| row.iter().sum::<f64>())
                    .collect();
                (Storage::Dense(weights), interior)
            }
            Strategy::OnTheFly => {
                let interior: Vec<f64> = (0..cells)
                    .into_par_iter()
                    .map(|i| {
                        let mut s = 0.0;
                        for j in 0..cells {
                            if j != i {
                                s += pair.weight(i, j);
                            }
                        }
                        s
                    })
                    .collect();
                (Storage::OnTheFly, interior)
            }
            Strategy::FftConvolution => {
                if !spec.is_convolution() {
                    return Err(Error::unsupported(format!(
                        "the fft_convolution strategy needs a convolution kernel \
                         (compact_smooth or fractional_tail), not {}; \
                         use dense or on_the_fly",
                        spec.family()
                    )));
                }
                let convolver = FftConvolver::new(spec, grid);
                let self_weight = spec.evaluate_d2(0.0, 0.0) * grid.cell_volume();
                let interior: Vec<f64> = convolver
                    .conv_ones
                    .iter()
                    .map(|&full| full - self_weight)
                    .collect();
                (Storage::Fft(Box::new(convolver)), interior)
            }
        };
        let tail = match mode {
            BoundaryMode::Conservative => vec![0.0; cells],
            BoundaryMode::Absorbing => absorbing_tail(spec, grid, &pair, &interior)?,
        };
        Ok(OperatorApplier {
            grid: grid.clone(),
            spec: spec.clone(),
            mode,
            strategy,
            pair,
            interior,
            tail,
            storage,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub(crate) fn pair_weights(&self) -> &PairWeights {
        &self.pair
    }

    /// Applies the operator to a field on the same grid.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch(
                "field grid does not match the operator grid".into(),
            ));
        }
        let v = u.values();
        let cells = v.len();
        let out: Vec<f64> = match &self.storage {
            Storage::Dense(weights) => weights
                .par_chunks(cells)
                .enumerate()
                .map(|(i, row)| {
                    let ui = v[i];
                    let mut s = 0.0;
                    for (j, &wij) in row.iter().enumerate() {
                        s += wij * (v[j] - ui);
                    }
                    s - self.tail[i] * ui
                })
                .collect(),
            Storage::OnTheFly => (0..cells)
                .into_par_iter()
                .map(|i| {
                    let ui = v[i];
                    let mut s = 0.0;
                    for (j, vj) in v.iter().enumerate() {
                        if j != i {
                            s += self.pair.weight(i, j) * (vj - ui);
                        }
                    }
                    s - self.tail[i] * ui
                })
                .collect(),
            Storage::Fft(convolver) => {
                let conv = convolver.convolve(v);
                (0..cells)
                    .into_par_iter()
                    .map(|i| conv[i] - convolver.conv_ones[i] * v[i] - self.tail[i] * v[i])
                    .collect()
            }
        };
        Ok(Field::from_raw(self.grid.clone(), out))
    }

    /// Row sums D_i = sum_{j != i} w_ij + tail_i. The largest one bounds the
    /// stable step size of explicit time integration.
    pub fn row_sums(&self) -> Field {
        let sums: Vec<f64> = self
            .interior
            .iter()
            .zip(&self.tail)
            .map(|(a, b)| a + b)
            .collect();
        Field::from_raw(self.grid.clone(), sums)
    }

    /// The absorption coefficients tail_i (all zero in conservative mode).
    pub fn tail(&self) -> Field {
        Field::from_raw(self.grid.clone(), self.tail.clone())
    }

    pub fn max_row_sum(&self) -> f64 {
        self.interior
            .iter()
            .zip(&self.tail)
            .map(|(a, b)| a + b)
            .fold(0.0, f64::max)
    }
}

/// Absorption coefficients for the absorbing boundary mode.
///
/// Convolution tail families use mass balance: the exterior integral is the
/// known total mass minus the in-box row sum. Compact and modulated kernels
/// evaluate the exterior lattice sum per cell, which keeps the coefficient
/// exactly zero wherever a compact support stays inside the box.
fn absorbing_tail(
    spec: &KernelSpec,
    grid: &Grid,
    pair: &PairWeights,
    interior: &[f64],
) -> Result<Vec<f64>> {
    match spec.family() {
        KernelFamily::Custom => Err(Error::unsupported(
            "absorbing boundaries need a kernel with a known exterior integral; \
             custom kernels support the conservative mode only",
        )),
        KernelFamily::CompactSmooth | KernelFamily::NonconvolutionFractional => (0..interior.len())
            .into_par_iter()
            .map(|i| spec.tail_mass(grid, pair.point(i)))
            .collect(),
        KernelFamily::FractionalTail => {
            let mass = spec.continuum_mass()?;
            let self_weight = spec.evaluate_d2(0.0, 0.0) * grid.cell_volume();
            Ok(interior
                .iter()
                .map(|&s| (mass - (s + self_weight)).max(0.0))
                .collect())
        }
    }
}

/// Zero-padded FFT convolution plan for convolution kernels.
///
/// Each axis is padded to 2M so the circular convolution reproduces the
/// linear one on the box. `conv_ones` is the convolution of the all-ones
/// field, stored so that applications can subtract it through the same
/// floating-point path that produced it.
struct FftConvolver {
    dimension: usize,
    padded: usize,
    total: usize,
    embed: Vec<usize>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    stencil_hat: Vec<Complex<f64>>,
    conv_ones: Vec<f64>,
}

impl FftConvolver {
    fn new(spec: &KernelSpec, grid: &Grid) -> FftConvolver {
        let m = grid.points_per_axis();
        let p = 2 * m;
        let n = grid.dimension();
        let total = p.pow(n as u32);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(p);
        let inverse = planner.plan_fft_inverse(p);

        let embed: Vec<usize> = (0..grid.cell_count())
            .map(|flat| {
                let idx = grid.multi_index(flat);
                let mut padded_flat = 0;
                for axis in 0..n {
                    padded_flat = padded_flat * p + idx[axis];
                }
                padded_flat
            })
            .collect();

        // Kernel stencil at lattice offsets, wrapped into the padded array.
        // Offsets with |delta| = M are unreachable within the box and stay
        // zero.
        let h = grid.spacing();
        let hn = grid.cell_volume();
        let mut stencil_hat = vec![Complex::new(0.0, 0.0); total];
        for (padded_flat, slot) in stencil_hat.iter_mut().enumerate() {
            let mut rest = padded_flat;
            let mut d2 = 0.0;
            let mut reachable = true;
            for _ in 0..n {
                let ia = rest % p;
                rest /= p;
                let delta = if ia < m {
                    ia as i64
                } else if ia > m {
                    ia as i64 - p as i64
                } else {
                    reachable = false;
                    0
                };
                let z = delta as f64 * h;
                d2 += z * z;
            }
            if reachable {
                *slot = Complex::new(spec.evaluate_d2(d2, 0.0) * hn, 0.0);
            }
        }
        Self::transform_all(&mut stencil_hat, n, p, &forward);

        let mut convolver = FftConvolver {
            dimension: n,
            padded: p,
            total,
            embed,
            forward,
            inverse,
            stencil_hat,
            conv_ones: Vec::new(),
        };
        convolver.conv_ones = convolver.convolve(&vec![1.0; grid.cell_count()]);
        convolver
    }

    /// sum_j J(x_i - x_j) h^n u_j over the box, including j = i.
    fn convolve(&self, u: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.total];
        for (flat, &value) in u.iter().enumerate() {
            buf[self.embed[flat]] = Complex::new(value, 0.0);
        }
        Self::transform_all(&mut buf, self.dimension, self.padded, &self.forward);
        for (b, s) in buf.iter_mut().zip(&self.stencil_hat) {
            *b *= *s;
        }
        Self::transform_all(&mut buf, self.dimension, self.padded, &self.inverse);
        let scale = 1.0 / self.total as f64;
        self.embed
            .iter()
            .map(|&padded_flat| buf[padded_flat].re * scale)
            .collect()
    }

    /// In-place transform along every axis of a p^dimension array.
    fn transform_all(
        buf: &mut [Complex<f64>],
        dimension: usize,
        p: usize,
        fft: &Arc<dyn Fft<f64>>,
    ) {
        let total = buf.len();
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut line = vec![Complex::new(0.0, 0.0); p];
        for axis in 0..dimension {
            let stride = p.pow((dimension - 1 - axis) as u32);
            let block = stride * p;
            for base_block in (0..total).step_by(block) {
                for offset in 0..stride {
                    let base = base_block + offset;
                    for (k, slot) in line.iter_mut().enumerate() {
                        *slot = buf[base + k * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (k, &value) in line.iter().enumerate() {
                        buf[base + k * stride] = value;
                    }
                }
            }
        }
    }
}
