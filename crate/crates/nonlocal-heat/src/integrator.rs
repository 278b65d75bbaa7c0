//! Explicit time stepping for u' = L u.
//!
//! The operator is linear with nonpositive spectrum bounded below by twice
//! the largest row sum, so forward Euler is positivity preserving and stable
//! whenever dt max_i D_i <= 1. Both schemes take their step from that bound
//! scaled by a safety factor; the classical fourth-order scheme could go a
//! little further, but a shared bound keeps runs comparable across schemes.
//!
//! `evolve` walks a strictly increasing list of sample times, shrinking the
//! final step before each one so snapshots land on the requested times
//! exactly, and aborts with a diagnostic the moment the state stops being
//! finite.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::OperatorApplier;

/// Explicit time-stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Forward Euler: first order, positivity preserving under the step
    /// bound.
    Euler,
    /// Classical fourth-order Runge-Kutta.
    Rk4,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Scheme> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(Error::invalid(format!(
                "unknown scheme {other:?}; expected euler or rk4"
            ))),
        }
    }
}

/// Strictly increasing positive times at which `evolve` records snapshots.
#[derive(Clone, Debug)]
pub struct TimeSchedule {
    times: Vec<f64>,
}

impl TimeSchedule {
    /// `count` times spaced evenly in log t from `t_min` (default
    /// `t_end / 100`) up to and including `t_end`.
    pub fn log_spaced(t_end: f64, count: usize, t_min: Option<f64>) -> Result<TimeSchedule> {
        if !t_end.is_finite() || t_end <= 0.0 {
            return Err(Error::invalid(format!(
                "t_end must be a positive real, got {t_end}"
            )));
        }
        if count == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        let t_min = t_min.unwrap_or(t_end / 100.0);
        if !t_min.is_finite() || t_min <= 0.0 || t_min > t_end {
            return Err(Error::invalid(format!(
                "t_min must lie in (0, t_end], got {t_min}"
            )));
        }
        if count == 1 {
            return TimeSchedule::from_times(vec![t_end]);
        }
        let (log_min, log_max) = (t_min.ln(), t_end.ln());
        let times: Vec<f64> = (0..count)
            .map(|k| {
                if k == 0 {
                    t_min
                } else if k == count - 1 {
                    t_end
                } else {
                    let s = k as f64 / (count - 1) as f64;
                    (log_min + s * (log_max - log_min)).exp()
                }
            })
            .collect();
        TimeSchedule::from_times(times)
    }

    /// Wraps explicit sample times, which must be finite, positive and
    /// strictly increasing.
    pub fn from_times(times: Vec<f64>) -> Result<TimeSchedule> {
        if times.is_empty() {
            return Err(Error::invalid("a time schedule needs at least one time"));
        }
        let mut prev = 0.0;
        for &t in &times {
            if !t.is_finite() || t <= prev {
                return Err(Error::invalid(format!(
                    "sample times must be finite, positive and strictly increasing; \
                     got {t} after {prev}"
                )));
            }
            prev = t;
        }
        Ok(TimeSchedule { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("schedules are nonempty")
    }
}

/// Snapshots of an evolution: the initial field and one field per sample
/// time.
#[derive(Clone, Debug)]
pub struct Trajectory {
    initial: Field,
    samples: Vec<(f64, Field)>,
}

impl Trajectory {
    pub fn initial(&self) -> &Field {
        &self.initial
    }

    pub fn samples(&self) -> &[(f64, Field)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Largest time step the explicit schemes may take: `dt_safety / max_i D_i`.
pub fn max_stable_dt(op: &OperatorApplier, scheme: Scheme, dt_safety: f64) -> Result<f64> {
    let _ = scheme;
    if !(0.0..=1.0).contains(&dt_safety) || dt_safety == 0.0 || !dt_safety.is_finite() {
        return Err(Error::invalid(format!(
            "dt_safety must lie in (0, 1], got {dt_safety}"
        )));
    }
    let max_row = op.max_row_sum();
    if !max_row.is_finite() || max_row <= 0.0 {
        return Err(Error::invalid(format!(
            "the operator has no positive row sum to bound the step (max D_i = {max_row})"
        )));
    }
    Ok(dt_safety / max_row)
}

/// One explicit step of size `dt`. The output is not checked for finiteness;
/// `evolve` performs that check so it can report the time of failure.
pub fn step(op: &OperatorApplier, u: &Field, dt: f64, scheme: Scheme) -> Result<Field> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::invalid(format!(
            "step size must be a positive real, got {dt}"
        )));
    }
    match scheme {
        Scheme::Euler => {
            let lu = op.apply(u)?;
            Ok(linear_combination(u, dt, &lu))
        }
        Scheme::Rk4 => {
            let k1 = op.apply(u)?;
            let k2 = op.apply(&linear_combination(u, 0.5 * dt, &k1))?;
            let k3 = op.apply(&linear_combination(u, 0.5 * dt, &k2))?;
            let k4 = op.apply(&linear_combination(u, dt, &k3))?;
            let grid = u.grid().clone();
            let sixth = dt / 6.0;
            let values: Vec<f64> = u
                .values()
                .iter()
                .zip(k1.values())
                .zip(k2.values())
                .zip(k3.values())
                .zip(k4.values())
                .map(|((((ui, a), b), c), d)| ui + sixth * (a + 2.0 * b + 2.0 * c + d))
                .collect();
            Ok(Field::from_raw(grid, values))
        }
    }
}

/// Marches from the initial field through every sample time of the schedule.
///
/// Interior steps use the full stable step; the step before each sample time
/// shrinks so the snapshot is taken exactly there. Aborts with
/// `Error::Instability` if any state value stops being finite.
pub fn evolve(
    op: &OperatorApplier,
    initial: &Field,
    schedule: &TimeSchedule,
    scheme: Scheme,
    dt_safety: f64,
) -> Result<Trajectory> {
    if initial.grid() != op.grid() {
        return Err(Error::GridMismatch(
            "initial field grid does not match the operator grid".into(),
        ));
    }
    let dt_max = max_stable_dt(op, scheme, dt_safety)?;
    let mut state = initial.clone();
    let mut t = 0.0;
    let mut samples = Vec::with_capacity(schedule.times().len());
    for &target in schedule.times() {
        while t < target {
            let remaining = target - t;
            let (dt, landed) = if remaining <= dt_max {
                (remaining, true)
            } else {
                (dt_max, false)
            };
            state = step(op, &state, dt, scheme)?;
            t = if landed { target } else { t + dt };
            ensure_finite(&state, t)?;
        }
        samples.push((target, state.clone()));
    }
    Ok(Trajectory {
        initial: initial.clone(),
        samples,
    })
}

fn linear_combination(u: &Field, a: f64, v: &Field) -> Field {
    let values: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(x, y)| x + a * y)
        .collect();
    Field::from_raw(u.grid().clone(), values)
}

fn ensure_finite(state: &Field, t: f64) -> Result<()> {
    if let Some(cell) = state.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::Instability {
            time: t,
            message: format!(
                "cell {cell} became {}; reduce dt_safety or check the kernel",
                state.values()[cell]
            ),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{random_test_field, sample_function, Grid, TestFieldProfile};
    use crate::kernel::KernelSpec;
    use crate::operator::{BoundaryMode, Strategy};

    fn three_cell_op() -> OperatorApplier {
        let grid = Grid::new_unchecked(1, 1.5, 3);
        let spec = KernelSpec::custom(1, 1.0, |_, _| 1.0).unwrap();
        OperatorApplier::assemble(&spec, &grid, BoundaryMode::Conservative, Strategy::Dense)
            .unwrap()
    }

    fn line_op(mode: BoundaryMode) -> OperatorApplier {
        let grid = Grid::new(1, 10.0, 64).unwrap();
        let spec = KernelSpec::fractional_tail(1, 0.5, 1.0, 1.0).unwrap();
        OperatorApplier::assemble(&spec, &grid, mode, Strategy::Dense).unwrap()
    }

    fn lq_norm_plain(u: &Field, q: f64) -> f64 {
        let hn = u.grid().cell_volume();
        (u.values().iter().map(|v| v.abs().powf(q)).sum::<f64>() * hn).powf(1.0 / q)
    }

    #[test]
    fn stable_step_matches_the_row_sum_bound() {
        let op = three_cell_op();
        for scheme in [Scheme::Euler, Scheme::Rk4] {
            assert_eq!(max_stable_dt(&op, scheme, 0.9).unwrap(), 0.45);
        }
        assert!(max_stable_dt(&op, Scheme::Euler, 0.0).is_err());
        assert!(max_stable_dt(&op, Scheme::Euler, 1.5).is_err());
    }

    #[test]
    fn euler_step_matches_hand_computation() {
        let op = three_cell_op();
        let u = Field::new(op.grid().clone(), vec![0.0, 1.0, 0.0]).unwrap();
        let next = step(&op, &u, 0.25, Scheme::Euler).unwrap();
        assert_eq!(next.values(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn log_spaced_schedules_pin_their_endpoints() {
        let schedule = TimeSchedule::log_spaced(20.0, 40, None).unwrap();
        let times = schedule.times();
        assert_eq!(times.len(), 40);
        assert_eq!(times[0], 0.2);
        assert_eq!(*times.last().unwrap(), 20.0);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        // Even log spacing: constant ratios between consecutive times.
        let r0 = times[1] / times[0];
        let r1 = times[21] / times[20];
        assert!((r0 - r1).abs() < 1e-12 * r0);

        assert!(TimeSchedule::from_times(vec![1.0, 1.0]).is_err());
        assert!(TimeSchedule::from_times(vec![-1.0]).is_err());
        assert!(TimeSchedule::from_times(vec![]).is_err());
        assert!(TimeSchedule::log_spaced(0.0, 4, None).is_err());
    }

    #[test]
    fn evolve_lands_exactly_on_sample_times() {
        let op = three_cell_op();
        let u = Field::new(op.grid().clone(), vec![0.0, 1.0, 0.0]).unwrap();
        let schedule = TimeSchedule::from_times(vec![0.3, 1.0, 2.0]).unwrap();
        let trajectory = evolve(&op, &u, &schedule, Scheme::Euler, 0.9).unwrap();
        let recorded: Vec<f64> = trajectory.samples().iter().map(|(t, _)| *t).collect();
        assert_eq!(recorded, vec![0.3, 1.0, 2.0]);
        assert_eq!(trajectory.initial().values(), u.values());
    }

    #[test]
    fn instability_reports_the_failure_time() {
        let op = three_cell_op();
        let u = Field::new(op.grid().clone(), vec![1e308, 0.0, 0.0]).unwrap();
        let schedule = TimeSchedule::from_times(vec![1.0]).unwrap();
        let err = evolve(&op, &u, &schedule, Scheme::Euler, 0.9).unwrap_err();
        match err {
            Error::Instability { time, .. } => assert_eq!(time, 0.45),
            other => panic!("expected instability, got {other}"),
        }
    }

    #[test]
    fn l1_and_sup_norms_contract() {
        let op = line_op(BoundaryMode::Conservative);
        let u = random_test_field(op.grid(), 4, TestFieldProfile::RandomModes).unwrap();
        let schedule = TimeSchedule::from_times(vec![0.5, 1.0, 2.0, 4.0]).unwrap();
        for scheme in [Scheme::Euler, Scheme::Rk4] {
            let trajectory = evolve(&op, &u, &schedule, scheme, 0.9).unwrap();
            let mut l1_prev = lq_norm_plain(&u, 1.0);
            let mut sup_prev = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (_, field) in trajectory.samples() {
                let l1 = lq_norm_plain(field, 1.0);
                let sup = field.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(l1 <= l1_prev * (1.0 + 1e-12));
                assert!(sup <= sup_prev * (1.0 + 1e-12));
                l1_prev = l1;
                sup_prev = sup;
            }
        }
    }

    #[test]
    fn lq_norms_are_monotone_along_the_flow() {
        let op = line_op(BoundaryMode::Conservative);
        let u = random_test_field(op.grid(), 9, TestFieldProfile::DoubleBump).unwrap();
        let schedule = TimeSchedule::from_times(vec![0.25, 0.5, 1.0, 2.0]).unwrap();
        let trajectory = evolve(&op, &u, &schedule, Scheme::Rk4, 0.9).unwrap();
        for q in [1.5, 2.0, 3.0, 4.0] {
            let mut prev = lq_norm_plain(&u, q);
            for (_, field) in trajectory.samples() {
                let norm = lq_norm_plain(field, q);
                assert!(norm <= prev * (1.0 + 1e-12), "q = {q}: {norm} > {prev}");
                prev = norm;
            }
        }
    }

    #[test]
    fn euler_preserves_nonnegativity_exactly() {
        let op = line_op(BoundaryMode::Absorbing);
        let u = sample_function(op.grid(), |p| (-p[0] * p[0]).exp()).unwrap();
        let schedule = TimeSchedule::log_spaced(5.0, 10, None).unwrap();
        let trajectory = evolve(&op, &u, &schedule, Scheme::Euler, 0.9).unwrap();
        for (t, field) in trajectory.samples() {
            let min = field.values().iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= 0.0, "negative value {min} at t = {t}");
        }
    }

    #[test]
    fn conservative_mode_preserves_mass() {
        let op = line_op(BoundaryMode::Conservative);
        let u = sample_function(op.grid(), |p| (-p[0] * p[0]).exp()).unwrap();
        let hn = op.grid().cell_volume();
        let mass0: f64 = u.values().iter().sum::<f64>() * hn;
        let schedule = TimeSchedule::from_times(vec![1.0, 3.0, 6.0]).unwrap();
        for scheme in [Scheme::Euler, Scheme::Rk4] {
            let trajectory = evolve(&op, &u, &schedule, scheme, 0.9).unwrap();
            for (t, field) in trajectory.samples() {
                let mass: f64 = field.values().iter().sum::<f64>() * hn;
                assert!(
                    (mass - mass0).abs() <= 1e-12 * mass0.abs(),
                    "scheme {scheme}: mass {mass} vs {mass0} at t = {t}"
                );
            }
        }
    }

    #[test]
    fn scheme_gap_shrinks_linearly_with_the_step() {
        let op = line_op(BoundaryMode::Conservative);
        let u = random_test_field(op.grid(), 13, TestFieldProfile::GaussianBump).unwrap();
        // March to t = 1 with fixed steps; the fourth-order path is accurate
        // enough that the gap is the Euler error, which is linear in dt.
        let gap = |dt: f64, steps: usize| -> f64 {
            let mut euler = u.clone();
            let mut rk4 = u.clone();
            for _ in 0..steps {
                euler = step(&op, &euler, dt, Scheme::Euler).unwrap();
                rk4 = step(&op, &rk4, dt, Scheme::Rk4).unwrap();
            }
            euler
                .values()
                .iter()
                .zip(rk4.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let coarse = gap(0.125, 8);
        let fine = gap(0.0625, 16);
        let ratio = fine / coarse;
        assert!(
            (0.4..=0.6).contains(&ratio),
            "halving dt changed the scheme gap by {ratio}"
        );
    }
}
