//! Self-contained invariant suites with fixed seeds.
//!
//! Three suites bundle the properties the library is built around, sized to
//! finish in seconds so they can gate a checkout. `inequalities` exercises
//! the static estimates: the convexity pairing bound, the mollifier norm
//! bounds, the stability of the energy-to-seminorm ratio, the discrete
//! Sobolev quotient and the interpolation exponent algebra. `dynamics`
//! exercises the semigroup: conservation, contraction, positivity and the
//! second-order convergence of the dissipation identity residual. `decay`
//! exercises the measurement chain: exact fits on synthetic power laws, the
//! kernel symbol windows and monotone norm decay on a short absorbing run.
//!
//! Every check reports a measured margin alongside pass/fail so a regression
//! shows up as a number, not just a flipped bit.

use serde::Serialize;

use crate::config::parse_config;
use crate::decay::{fit_decay, record, symbol_exponent_fit};
use crate::error::{Error, Result};
use crate::experiment::execute;
use crate::functionals::{
    build_mollifier, dissipation_identity_residual, energy_interpolation_bound,
    interpolation_exponents, keyprop_ratio, lq_norm, mollifier_decompose, pairing_constant,
    pairing_margin, total_mass, PairingMethod,
};
use crate::grid::{Grid, TestFieldProfile};
use crate::integrator::{evolve, Scheme, TimeSchedule};
use crate::kernel::KernelSpec;
use crate::operator::{BoundaryMode, OperatorApplier, Strategy};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which suites to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteSelector {
    All,
    Inequalities,
    Dynamics,
    Decay,
}

impl std::str::FromStr for SuiteSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<SuiteSelector> {
        match s {
            "all" => Ok(SuiteSelector::All),
            "inequalities" => Ok(SuiteSelector::Inequalities),
            "dynamics" => Ok(SuiteSelector::Dynamics),
            "decay" => Ok(SuiteSelector::Decay),
            other => Err(Error::invalid(format!(
                "unknown suite {other:?}; expected all, inequalities, dynamics or decay"
            ))),
        }
    }
}

/// One named invariant with its measured margin.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Distance to the failure threshold; positive means satisfied.
    pub margin: f64,
    pub detail: String,
}

/// All checks of one suite.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    fn new(suite: &str, checks: Vec<CheckResult>) -> SuiteReport {
        SuiteReport {
            suite: suite.to_string(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

/// Runs the selected suites.
pub fn run_suites(selector: SuiteSelector) -> Result<Vec<SuiteReport>> {
    let mut reports = Vec::new();
    if matches!(selector, SuiteSelector::All | SuiteSelector::Inequalities) {
        reports.push(inequalities_suite()?);
    }
    if matches!(selector, SuiteSelector::All | SuiteSelector::Dynamics) {
        reports.push(dynamics_suite()?);
    }
    if matches!(selector, SuiteSelector::All | SuiteSelector::Decay) {
        reports.push(decay_suite()?);
    }
    Ok(reports)
}

fn check(name: &str, passed: bool, margin: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        margin,
        detail,
    }
}

fn profile_for(seed: u64) -> TestFieldProfile {
    match seed % 3 {
        0 => TestFieldProfile::GaussianBump,
        1 => TestFieldProfile::DoubleBump,
        _ => TestFieldProfile::RandomModes,
    }
}

/// Static inequality checks on random fields.
pub fn inequalities_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();

    // Convexity pairing bound: (a - b)(phi(a) - phi(b)) >= C |a - b|^q.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let span = Uniform::new(-3.0f64, 3.0);
        let mut worst = f64::INFINITY;
        for &q in &[1.5, 2.0, 3.0, 4.0] {
            let method = if q == 2.0 {
                PairingMethod::ExactQ2
            } else if q > 2.0 {
                PairingMethod::AppendixBound
            } else {
                PairingMethod::NumericMinimization
            };
            let constant = pairing_constant(q, method)?;
            for _ in 0..20_000 {
                let a = span.sample(&mut rng);
                let b = span.sample(&mut rng);
                let scale = a.abs().max(b.abs()).max(1e-9).powf(q);
                worst = worst.min(pairing_margin(a, b, q, constant) / scale);
            }
        }
        let exact_two = pairing_constant(2.0, PairingMethod::ExactQ2)? == 1.0;
        let four_bound = pairing_constant(4.0, PairingMethod::AppendixBound)? >= 1.0 / 16.0;
        checks.push(check(
            "pairing_margin",
            worst >= -1e-12 && exact_two && four_bound,
            worst,
            format!(
                "min normalized margin {worst:.3e} over 20000 pairs for each \
                 q in {{1.5, 2, 3, 4}}; C(2) = 1 and C(4) >= 1/16"
            ),
        ));
    }

    // Mollifier split: |v|_q <= |u|_q and |w|_q <= 2 |u|_q.
    {
        let grid = Grid::new(2, 10.0, 64)?;
        let mollifier = build_mollifier(&grid, 1.0)?;
        let mut margin = f64::INFINITY;
        for seed in 0..25 {
            let u = crate::grid::random_test_field(&grid, seed, profile_for(seed))?;
            let split = mollifier_decompose(&u, &mollifier)?;
            for &q in &[1.0, 1.5, 2.0, 3.0] {
                let nu = lq_norm(&u, q)?;
                let nv = lq_norm(&split.smooth_part, q)?;
                let nw = lq_norm(&split.remainder, q)?;
                margin = margin.min((nu - nv) / nu).min((2.0 * nu - nw) / (2.0 * nu));
            }
        }
        checks.push(check(
            "mollifier_norm_bounds",
            margin >= -1e-10,
            margin,
            format!(
                "min of (|u|_q - |v|_q)/|u|_q and (2|u|_q - |w|_q)/(2|u|_q) \
                 over 25 fields, q in {{1, 1.5, 2, 3}}: {margin:.3e}"
            ),
        ));
    }

    // Seminorm-plus-remainder against energy: the ratio stays in a narrow
    // band across fields and refinements.
    {
        let spec = KernelSpec::fractional_tail(2, 0.5, 1.0, 1.0)?;
        let coarse = Grid::new(2, 10.0, 64)?;
        let fine = Grid::new(2, 10.0, 128)?;
        let mut ratios = Vec::new();
        let mut refinement_change: f64 = 1.0;
        for seed in 0..10 {
            let profile = profile_for(seed);
            let u_coarse = crate::grid::random_test_field(&coarse, seed, profile)?;
            let u_fine = crate::grid::random_test_field(&fine, seed, profile)?;
            let r_coarse = keyprop_ratio(&spec, &u_coarse, 2.0)?;
            let r_fine = keyprop_ratio(&spec, &u_fine, 2.0)?;
            ratios.push(r_coarse);
            ratios.push(r_fine);
            let change = (r_fine / r_coarse).max(r_coarse / r_fine);
            refinement_change = refinement_change.max(change);
        }
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        let spread = max / min;
        let passed = ratios.iter().all(|r| r.is_finite() && *r > 0.0)
            && spread <= 10.0
            && refinement_change <= 2.0;
        checks.push(check(
            "keyprop_ratio_stability",
            passed,
            10.0 - spread,
            format!(
                "ratio spread {spread:.3} (bound 10) and worst refinement \
                 change {refinement_change:.3} (bound 2) over 10 fields at \
                 M = 64 and 128"
            ),
        ));
    }

    // Discrete Sobolev quotient stays finite and positive.
    {
        let grid = Grid::new(2, 10.0, 64)?;
        let mut max_ratio = 0.0f64;
        let mut all_good = true;
        for seed in 0..10 {
            let u = crate::grid::random_test_field(&grid, seed, profile_for(seed))?;
            let ratio = crate::functionals::sobolev_ratio(&u, 0.5, 2.0)?;
            all_good &= ratio.is_finite() && ratio > 0.0;
            max_ratio = max_ratio.max(ratio);
        }
        checks.push(check(
            "sobolev_quotient",
            all_good,
            max_ratio,
            format!(
                "max |u|_(q*) / [u]_(s,q) over 10 fields (s = 1/2, q = 2): \
                 {max_ratio:.3}"
            ),
        ));
    }

    // Interpolation exponent algebra.
    {
        let headline = interpolation_exponents(2, 2.0, 0.5)?;
        let theta_exact =
            (headline.theta - 2.0 / 3.0).abs() <= 1e-15 && headline.q_tilde_star == 4.0;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dims = Uniform::new_inclusive(1usize, 3);
        let qs = Uniform::new(1.0f64, 6.0);
        let mut defect = 0.0f64;
        for _ in 0..200 {
            let n = dims.sample(&mut rng);
            let q = qs.sample(&mut rng);
            let sigma_max = (n as f64 / 2.0 - 0.01).min(0.95);
            let sigma = Uniform::new(0.01, sigma_max).sample(&mut rng);
            let e = interpolation_exponents(n, q, sigma)?;
            defect = defect.max((1.0 / q - (e.theta / e.q_tilde_star + (1.0 - e.theta))).abs());
        }
        checks.push(check(
            "interpolation_identity",
            theta_exact && defect <= 1e-12,
            1e-12 - defect,
            format!(
                "theta(2, 2, 1/2) = 2/3 and qt* = 4 exact; max defect of \
                 1/q = theta/qt* + (1 - theta) over 200 triples: {defect:.3e}"
            ),
        ));
    }

    // The interpolated energy bound produces a finite positive constant.
    {
        let spec = KernelSpec::fractional_tail(2, 0.5, 1.0, 1.0)?;
        let grid = Grid::new(2, 10.0, 64)?;
        let mut max_constant = 0.0f64;
        let mut all_good = true;
        for seed in 0..5 {
            let u = crate::grid::random_test_field(&grid, seed, profile_for(seed))?;
            let bound = energy_interpolation_bound(&spec, &u, 2.0)?;
            all_good &= bound.observed_constant.is_finite() && bound.observed_constant > 0.0;
            max_constant = max_constant.max(bound.observed_constant);
        }
        checks.push(check(
            "energy_interpolation_constant",
            all_good,
            max_constant,
            format!("max observed constant over 5 fields: {max_constant:.3}"),
        ));
    }

    Ok(SuiteReport::new("inequalities", checks))
}

/// Semigroup checks: conservation, contraction, positivity, dissipation.
pub fn dynamics_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let grid = Grid::new(2, 10.0, 48)?;
    let spec = KernelSpec::fractional_tail(2, 0.5, 1.0, 1.0)?.normalize_mass(1.0)?;
    let initial =
        crate::grid::sample_function(&grid, |p| (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp())?;

    // Mass conservation under the conservative boundary.
    {
        let op =
            OperatorApplier::assemble(&spec, &grid, BoundaryMode::Conservative, Strategy::Dense)?;
        let dt = crate::integrator::max_stable_dt(&op, Scheme::Euler, 0.9)?;
        let mut state = initial.clone();
        let mass0 = total_mass(&state);
        let mut drift = 0.0f64;
        for _ in 0..200 {
            state = crate::integrator::step(&op, &state, dt, Scheme::Euler)?;
            drift = drift.max(((total_mass(&state) - mass0) / mass0).abs());
        }
        checks.push(check(
            "mass_conservation",
            drift <= 1e-11,
            1e-11 - drift,
            format!("max relative drift over 200 euler steps: {drift:.3e}"),
        ));
    }

    // Norm contraction for both schemes and boundary modes.
    {
        let schedule = TimeSchedule::log_spaced(5.0, 12, None)?;
        let mut worst = 0.0f64;
        for mode in [BoundaryMode::Conservative, BoundaryMode::Absorbing] {
            let op = OperatorApplier::assemble(&spec, &grid, mode, Strategy::Dense)?;
            for scheme in [Scheme::Euler, Scheme::Rk4] {
                let trajectory = evolve(&op, &initial, &schedule, scheme, 0.9)?;
                for &q in &[1.0, 2.0, f64::INFINITY] {
                    let mut previous = lq_norm(&initial, q)?;
                    for (_, field) in trajectory.samples() {
                        let current = lq_norm(field, q)?;
                        worst = worst.max((current - previous) / previous);
                        previous = current;
                    }
                }
            }
        }
        checks.push(check(
            "norm_contraction",
            worst <= 1e-12,
            1e-12 - worst,
            format!(
                "max relative norm increase across snapshots, schemes and \
                 boundary modes (q in {{1, 2, inf}}): {worst:.3e}"
            ),
        ));
    }

    // Euler preserves nonnegativity under the stability bound.
    {
        let mut min_value = f64::INFINITY;
        for mode in [BoundaryMode::Conservative, BoundaryMode::Absorbing] {
            let op = OperatorApplier::assemble(&spec, &grid, mode, Strategy::Dense)?;
            let dt = crate::integrator::max_stable_dt(&op, Scheme::Euler, 0.9)?;
            let mut state = initial.clone();
            for _ in 0..100 {
                state = crate::integrator::step(&op, &state, dt, Scheme::Euler)?;
            }
            min_value = min_value.min(state.values().iter().cloned().fold(f64::MAX, f64::min));
        }
        checks.push(check(
            "positivity",
            min_value >= 0.0,
            min_value,
            format!("min value after 100 euler steps in both modes: {min_value:.3e}"),
        ));
    }

    // The norm derivative matches the energy: the centered residual of
    // d/dt sum |u|^q h^n = -(q/2) B_q(u) shrinks at second order.
    {
        let grid = Grid::new(2, 6.0, 32)?;
        let spec = KernelSpec::fractional_tail(2, 0.5, 1.0, 1.0)?;
        let op =
            OperatorApplier::assemble(&spec, &grid, BoundaryMode::Conservative, Strategy::Dense)?;
        let initial =
            crate::grid::sample_function(&grid, |p| (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp())?;
        let schedule = TimeSchedule::from_times(vec![0.8, 0.9, 1.0, 1.1, 1.2])?;
        let trajectory = evolve(&op, &initial, &schedule, Scheme::Rk4, 0.1)?;
        let s = trajectory.samples();
        let mut worst: f64 = 0.0;
        let mut detail = String::new();
        for &q in &[2.0, 3.0] {
            let coarse = dissipation_identity_residual(
                &op,
                (s[0].0, &s[0].1),
                &s[2].1,
                (s[4].0, &s[4].1),
                q,
            )?;
            let fine = dissipation_identity_residual(
                &op,
                (s[1].0, &s[1].1),
                &s[2].1,
                (s[3].0, &s[3].1),
                q,
            )?;
            let ratio = coarse / fine;
            worst = worst.max((ratio - 4.0).abs());
            detail.push_str(&format!("q = {q}: residual ratio {ratio:.3}; "));
        }
        checks.push(check(
            "dissipation_identity",
            worst <= 0.8,
            0.8 - worst,
            format!("{detail}target 4.0 within [3.2, 4.8] as spacing halves"),
        ));
    }

    Ok(SuiteReport::new("dynamics", checks))
}

/// Measurement chain checks: fits, symbol windows, observed decay.
pub fn decay_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();

    // A synthetic power law comes back exactly.
    {
        let schedule = TimeSchedule::log_spaced(20.0, 40, None)?;
        let times = schedule.times().to_vec();
        let norms: Vec<f64> = times.iter().map(|t| 3.0 * t.powf(-0.75)).collect();
        let fit = fit_decay(&times, &norms, 0.5)?;
        let defect = (fit.slope + 0.75).abs();
        checks.push(check(
            "power_law_fit",
            defect <= 1e-10 && fit.r_squared >= 1.0 - 1e-12,
            1e-10 - defect,
            format!("slope defect {defect:.3e} on synthetic t^(-3/4)"),
        ));
    }

    // Symbol windows for both families on a 1-D reference grid.
    {
        let grid = Grid::new(1, 40.0, 512)?;
        let fractional = KernelSpec::fractional_tail(1, 0.5, 1.0, 1.0)?.normalize_mass(1.0)?;
        let compact = KernelSpec::compact_smooth(1, 1.0, 1.0)?.normalize_mass(1.0)?;
        let frac_fit = symbol_exponent_fit(&fractional, &grid)?;
        let comp_fit = symbol_exponent_fit(&compact, &grid)?;
        let frac_margin = 0.05 - (frac_fit.sigma_estimate - 0.5).abs();
        let comp_margin = 0.1 - (comp_fit.sigma_estimate - 1.0).abs();
        checks.push(check(
            "symbol_sigma_windows",
            frac_margin >= 0.0 && comp_margin >= 0.0,
            frac_margin.min(comp_margin),
            format!(
                "sigma estimates {:.4} (target 0.5 +- 0.05) and {:.4} \
                 (target 1.0 +- 0.1)",
                frac_fit.sigma_estimate, comp_fit.sigma_estimate
            ),
        ));
    }

    // A short absorbing run decays monotonically with a negative fitted
    // slope.
    {
        let config = parse_config(
            "dimension = 1\nhalf_width = 10\npoints_per_axis = 64\n\
             t_end = 5\nsample_count = 12\n",
        )?;
        let outcome = execute(&config)?;
        let series = &outcome.series;
        let norms = series.norms_for_q(2.0).expect("q = 2 is recorded");
        let monotone = norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let slope = outcome.summary.fits[0].fit.slope;
        checks.push(check(
            "absorbing_decay",
            monotone && slope < 0.0,
            -slope,
            format!("fitted q = 2 slope {slope:.3} on a short absorbing run"),
        ));
    }

    // Recording is consistent: the q = 1 norm of a nonnegative state equals
    // its mass.
    {
        let grid = Grid::new(1, 10.0, 64)?;
        let spec = KernelSpec::fractional_tail(1, 0.5, 1.0, 1.0)?.normalize_mass(1.0)?;
        let op = OperatorApplier::assemble(
            &spec,
            &grid,
            BoundaryMode::Conservative,
            Strategy::FftConvolution,
        )?;
        let initial = crate::grid::sample_function(&grid, |p| (-p[0] * p[0]).exp())?;
        let schedule = TimeSchedule::log_spaced(2.0, 6, None)?;
        let trajectory = evolve(&op, &initial, &schedule, Scheme::Euler, 0.9)?;
        let series = record(&op, &trajectory, &[2.0])?;
        let mut defect = 0.0f64;
        for row in &series.rows {
            defect = defect.max(((row.mass - row.l1) / row.l1).abs());
        }
        checks.push(check(
            "mass_equals_l1_for_nonnegative_states",
            defect <= 1e-12,
            1e-12 - defect,
            format!("max relative gap between mass and the l1 norm: {defect:.3e}"),
        ));
    }

    Ok(SuiteReport::new("decay", checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_inequalities_suite_passes() {
        let report = inequalities_suite().unwrap();
        for check in &report.checks {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
        assert!(report.passed);
        assert_eq!(report.checks.len(), 6);
    }

    #[test]
    fn the_dynamics_suite_passes() {
        let report = dynamics_suite().unwrap();
        for check in &report.checks {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
        assert!(report.passed);
        assert_eq!(report.checks.len(), 4);
    }

    #[test]
    fn the_decay_suite_passes() {
        let report = decay_suite().unwrap();
        for check in &report.checks {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
        assert!(report.passed);
        assert_eq!(report.checks.len(), 4);
    }

    #[test]
    fn selectors_pick_their_suites() {
        let all = run_suites(SuiteSelector::All).unwrap();
        assert_eq!(all.len(), 3);
        let one = run_suites(SuiteSelector::Dynamics).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].suite, "dynamics");
        assert!("nonsense".parse::<SuiteSelector>().is_err());
    }
}
