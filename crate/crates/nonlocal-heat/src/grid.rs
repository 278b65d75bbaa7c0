//! Cell-centered uniform grids on the box `[-L, L]^n` and fields living on them.
//!
//! Cells are indexed in row-major order, axis 0 slowest. Along each axis the
//! center of cell `i` sits at `-L + (i + 1/2) h` with `h = 2L / M`, so the
//! lattice is symmetric under reflection and never places a cell on the
//! boundary. All fields are flat `Vec<f64>` in this ordering.

use crate::error::{Error, Result};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Coordinates are fixed-size and zero-padded beyond `dimension`, so squared
/// distances can always be accumulated over all three components.
pub type Point = [f64; 3];

/// Supported spatial dimensions.
pub const MAX_DIMENSION: usize = 3;

/// Width (in length units) of the boundary band that generated test fields
/// leave identically zero. Matches the reach of the unit-radius mollifier
/// plus one extra unit so that mollified fields stay interior.
pub const BOUNDARY_BAND: f64 = 2.0;

/// Uniform cell-centered grid on `[-L, L]^dimension`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dimension: usize,
    half_width: f64,
    points_per_axis: usize,
    spacing: f64,
}

impl Grid {
    /// Builds a grid, rejecting unsupported dimensions, nonpositive widths
    /// and odd or nonpositive axis counts.
    pub fn new(dimension: usize, half_width: f64, points_per_axis: usize) -> Result<Grid> {
        if dimension == 0 || dimension > MAX_DIMENSION {
            return Err(Error::invalid(format!(
                "dimension must be 1, 2 or 3, got {dimension}"
            )));
        }
        if !half_width.is_finite() || half_width <= 0.0 {
            return Err(Error::invalid(format!(
                "half_width must be a positive real, got {half_width}"
            )));
        }
        if points_per_axis < 2 || !points_per_axis.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "points_per_axis must be a positive even integer, got {points_per_axis}"
            )));
        }
        Ok(Grid::new_unchecked(dimension, half_width, points_per_axis))
    }

    /// Same as `new` but without the evenness check; used internally for
    /// hand-sized geometries in unit tests.
    pub(crate) fn new_unchecked(dimension: usize, half_width: f64, points_per_axis: usize) -> Grid {
        Grid {
            dimension,
            half_width,
            points_per_axis,
            spacing: 2.0 * half_width / points_per_axis as f64,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Cell edge length `h = 2L / M`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of cells, `M^n`.
    pub fn cell_count(&self) -> usize {
        self.points_per_axis.pow(self.dimension as u32)
    }

    /// Volume of one cell, `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dimension as i32)
    }

    /// Center coordinate of cell `i` along one axis.
    pub fn axis_coordinate(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing
    }

    /// Decomposes a flat index into per-axis indices (unused axes are 0).
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        debug_assert!(flat < self.cell_count());
        let m = self.points_per_axis;
        let mut idx = [0usize; 3];
        let mut rest = flat;
        for axis in (0..self.dimension).rev() {
            idx[axis] = rest % m;
            rest /= m;
        }
        idx
    }

    /// Flattens per-axis indices in row-major order, axis 0 slowest.
    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        let m = self.points_per_axis;
        let mut flat = 0usize;
        for axis in 0..self.dimension {
            debug_assert!(idx[axis] < m);
            flat = flat * m + idx[axis];
        }
        flat
    }

    /// Center of the cell with the given flat index, zero-padded.
    pub fn coordinate(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut p = [0.0; 3];
        for axis in 0..self.dimension {
            p[axis] = self.axis_coordinate(idx[axis]);
        }
        p
    }

    /// Distance from a point to the box boundary, `min_axis (L - |x_axis|)`.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        let mut d = f64::INFINITY;
        for axis in 0..self.dimension {
            d = d.min(self.half_width - p[axis].abs());
        }
        d
    }
}

/// Squared Euclidean distance between two zero-padded points.
pub fn distance_squared(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Scalar field on a grid: one finite value per cell, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    /// Wraps raw values, checking length and finiteness.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.cell_count() {
            return Err(Error::invalid(format!(
                "field needs {} values for this grid, got {}",
                grid.cell_count(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at cell {i}")));
        }
        Ok(Field { grid, values })
    }

    /// Wraps values that are already known to belong to the grid, without
    /// the finiteness scan. Operator output uses this so that an unstable
    /// time step can be diagnosed by the integrator instead of surfacing as
    /// a construction error.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), grid.cell_count());
        Field { grid, values }
    }

    pub fn zeros(grid: Grid) -> Field {
        let n = grid.cell_count();
        Field {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Field {
        let n = grid.cell_count();
        Field {
            grid,
            values: vec![value; n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// True when every cell within `band` of the boundary is exactly zero.
    pub fn boundary_band_is_zero(&self, band: f64) -> bool {
        (0..self.grid.cell_count()).all(|i| {
            self.values[i] == 0.0 || self.grid.distance_to_boundary(self.grid.coordinate(i)) >= band
        })
    }
}

/// Evaluates `f` at every cell center. Fails with the offending cell index if
/// a sample is NaN or infinite.
pub fn sample_function(grid: &Grid, f: impl Fn(Point) -> f64) -> Result<Field> {
    let mut values = Vec::with_capacity(grid.cell_count());
    for i in 0..grid.cell_count() {
        let v = f(grid.coordinate(i));
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "sample at cell {i} (coordinate {:?})",
                &grid.coordinate(i)[..grid.dimension()]
            )));
        }
        values.push(v);
    }
    Ok(Field {
        grid: grid.clone(),
        values,
    })
}

/// Shapes of deterministic pseudo-random test fields.
///
/// Each profile draws the parameters of a fixed *continuum* function from the
/// seed and then samples that function on the grid, so refining the grid
/// refines the same underlying field rather than producing fresh noise. All
/// profiles return exactly zero on the boundary band of width
/// [`BOUNDARY_BAND`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFieldProfile {
    /// Single positive bump centered at the origin.
    GaussianBump,
    /// Two bumps of opposite sign at seeded interior locations.
    DoubleBump,
    /// A handful of low-frequency cosine modes under a smooth interior
    /// envelope; sign-changing and not radially symmetric.
    RandomModes,
}

/// Deterministic seeded test field on the grid. The result is never
/// identically zero and vanishes on all cells within [`BOUNDARY_BAND`] of the
/// boundary.
pub fn random_test_field(grid: &Grid, seed: u64, profile: TestFieldProfile) -> Result<Field> {
    let band = BOUNDARY_BAND;
    if grid.half_width() <= band + 0.5 {
        return Err(Error::invalid(format!(
            "half_width {} leaves no interior outside the zero band of width {band}",
            grid.half_width()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.half_width();
    let n = grid.dimension();
    let field = match profile {
        TestFieldProfile::GaussianBump => {
            let amplitude = Uniform::new(0.5, 1.5).sample(&mut rng);
            let width = Uniform::new(l / 16.0, l / 8.0).sample(&mut rng);
            sample_function(grid, |p| {
                let r2 = distance_squared(p, [0.0; 3]);
                amplitude * (-r2 / (2.0 * width * width)).exp()
            })?
        }
        TestFieldProfile::DoubleBump => {
            let center = Uniform::new(-l / 4.0, l / 4.0);
            let mut c1 = [0.0; 3];
            let mut c2 = [0.0; 3];
            for axis in 0..n {
                c1[axis] = center.sample(&mut rng);
                c2[axis] = center.sample(&mut rng);
            }
            let widths = Uniform::new(l / 16.0, l / 8.0);
            let w1 = widths.sample(&mut rng);
            let w2 = widths.sample(&mut rng);
            let amp = Uniform::new(0.5, 1.5);
            let a1 = amp.sample(&mut rng);
            let a2 = -amp.sample(&mut rng);
            sample_function(grid, |p| {
                a1 * (-distance_squared(p, c1) / (2.0 * w1 * w1)).exp()
                    + a2 * (-distance_squared(p, c2) / (2.0 * w2 * w2)).exp()
            })?
        }
        TestFieldProfile::RandomModes => {
            const MODES: usize = 8;
            let wavevector = Uniform::new(-1.5, 1.5);
            let phase = Uniform::new(0.0, std::f64::consts::TAU);
            let amp = Uniform::new(-1.0, 1.0);
            let mut modes = Vec::with_capacity(MODES);
            for _ in 0..MODES {
                let mut k = [0.0; 3];
                for axis in 0..n {
                    k[axis] = wavevector.sample(&mut rng);
                }
                modes.push((amp.sample(&mut rng), k, phase.sample(&mut rng)));
            }
            sample_function(grid, |p| {
                let envelope: f64 = (0..n)
                    .map(|axis| smooth_ramp((l - p[axis].abs() - band) / band))
                    .product();
                if envelope == 0.0 {
                    return 0.0;
                }
                let waves: f64 = modes
                    .iter()
                    .map(|(a, k, phi)| a * (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phi).cos())
                    .sum();
                envelope * waves
            })?
        }
    };
    let mut field = field;
    mask_boundary_band(&mut field, band);
    if field.values().iter().all(|&v| v == 0.0) {
        return Err(Error::invalid(
            "generated test field is identically zero; enlarge the grid",
        ));
    }
    Ok(field)
}

/// Forces exact zeros on every cell within `band` of the boundary.
fn mask_boundary_band(field: &mut Field, band: f64) {
    let grid = field.grid.clone();
    for i in 0..grid.cell_count() {
        if grid.distance_to_boundary(grid.coordinate(i)) < band {
            field.values[i] = 0.0;
        }
    }
}

/// C-infinity ramp: 0 for `t <= 0`, 1 for `t >= 1`, strictly increasing in
/// between.
fn smooth_ramp(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_cell_line_has_symmetric_centers() {
        let g = Grid::new(1, 1.0, 2).unwrap();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.cell_count(), 2);
        assert_eq!(g.coordinate(0)[0], -0.5);
        assert_eq!(g.coordinate(1)[0], 0.5);
    }

    #[test]
    fn flagship_grid_dimensions() {
        let g = Grid::new(2, 40.0, 128).unwrap();
        assert_eq!(g.spacing(), 0.625);
        assert_eq!(g.cell_count(), 16384);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(Grid::new(0, 1.0, 2).is_err());
        assert!(Grid::new(4, 1.0, 2).is_err());
        assert!(Grid::new(1, 0.0, 2).is_err());
        assert!(Grid::new(1, -1.0, 2).is_err());
        assert!(Grid::new(1, 1.0, 0).is_err());
        assert!(Grid::new(2, 1.0, 7).is_err());
    }

    #[test]
    fn indices_round_trip_and_reflect() {
        let g = Grid::new(3, 2.0, 4).unwrap();
        for flat in 0..g.cell_count() {
            let idx = g.multi_index(flat);
            assert_eq!(g.flat_index(idx), flat);
            // Reflecting all indices negates the coordinate.
            let m = g.points_per_axis();
            let mirrored = g.flat_index([m - 1 - idx[0], m - 1 - idx[1], m - 1 - idx[2]]);
            let p = g.coordinate(flat);
            let q = g.coordinate(mirrored);
            for axis in 0..3 {
                assert!((p[axis] + q[axis]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn indicator_sample_on_two_cells() {
        let g = Grid::new(1, 1.0, 2).unwrap();
        let f = sample_function(&g, |p| if p[0].abs() <= 0.5 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(f.values(), &[1.0, 1.0]);
    }

    #[test]
    fn non_finite_sample_names_the_cell() {
        let g = Grid::new(1, 1.0, 4).unwrap();
        let err = sample_function(&g, |p| 1.0 / (p[0] - g.axis_coordinate(2))).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cell 2"), "unexpected message: {msg}");
    }

    #[test]
    fn test_fields_are_deterministic() {
        let g = Grid::new(2, 10.0, 32).unwrap();
        for profile in [
            TestFieldProfile::GaussianBump,
            TestFieldProfile::DoubleBump,
            TestFieldProfile::RandomModes,
        ] {
            let a = random_test_field(&g, 7, profile).unwrap();
            let b = random_test_field(&g, 7, profile).unwrap();
            assert_eq!(a, b);
            let c = random_test_field(&g, 8, profile).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn test_fields_vanish_on_the_boundary_band_and_not_everywhere() {
        let g = Grid::new(2, 10.0, 32).unwrap();
        for profile in [
            TestFieldProfile::GaussianBump,
            TestFieldProfile::DoubleBump,
            TestFieldProfile::RandomModes,
        ] {
            for seed in 0..20 {
                let f = random_test_field(&g, seed, profile).unwrap();
                assert!(f.boundary_band_is_zero(BOUNDARY_BAND));
                assert!(f.values().iter().any(|&v| v != 0.0));
            }
        }
    }

    #[test]
    fn gaussian_bump_peaks_near_the_origin() {
        let g = Grid::new(2, 40.0, 128).unwrap();
        let f = random_test_field(&g, 3, TestFieldProfile::GaussianBump).unwrap();
        let (imax, _) = f
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        let p = g.coordinate(imax);
        let r = distance_squared(p, [0.0; 3]).sqrt();
        assert!(r <= g.half_width() / 4.0, "peak at radius {r}");
    }

    #[test]
    fn refining_the_grid_keeps_the_same_continuum_field() {
        // The profile parameters depend only on the seed, so the l2 Riemann
        // sums on M and 2M cells approximate the same integral.
        let coarse = Grid::new(2, 10.0, 64).unwrap();
        let fine = Grid::new(2, 10.0, 128).unwrap();
        for profile in [TestFieldProfile::DoubleBump, TestFieldProfile::RandomModes] {
            let fc = random_test_field(&coarse, 11, profile).unwrap();
            let ff = random_test_field(&fine, 11, profile).unwrap();
            let l2 = |f: &Field| {
                (f.values().iter().map(|v| v * v).sum::<f64>() * f.grid().cell_volume()).sqrt()
            };
            let (a, b) = (l2(&fc), l2(&ff));
            assert!((a - b).abs() <= 0.05 * a.max(b), "{profile:?}: {a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn sampling_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let g = Grid::new(1, 3.0, 6).unwrap();
            let f1 = sample_function(&g, |p| p[0]).unwrap();
            let f2 = sample_function(&g, |p| p[0] * p[0]).unwrap();
            let combo = sample_function(&g, |p| a * p[0] + b * p[0] * p[0]).unwrap();
            for i in 0..g.cell_count() {
                let expect = a * f1.values()[i] + b * f2.values()[i];
                prop_assert!((combo.values()[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            }
        }

        #[test]
        fn field_length_must_match(extra in 1usize..4) {
            let g = Grid::new(1, 2.0, 4).unwrap();
            let values = vec![0.0; g.cell_count() + extra];
            prop_assert!(Field::new(g, values).is_err());
        }
    }
}
