//! Config-driven experiment runs: build, evolve, record, fit, write.
//!
//! A run turns an [`ExperimentConfig`](crate::config::ExperimentConfig) into
//! two files: a CSV time series of norms (one row per snapshot, full double
//! precision, stable column order) and a JSON summary holding the echoed
//! config, the kernel validation report, one decay fit per requested q with
//! its predicted exponent, and wall-clock timings. Runs are deterministic:
//! the same config produces a byte-identical CSV, and the summary differs
//! only in the timing block. On failure any partially written output is
//! removed.
//!
//! Sweeps repeat the run along one axis (sigma, q or kernel family) and
//! write a table of fitted against predicted slopes; failures of individual
//! runs are recorded in the table and do not stop the sweep. Runs execute
//! sequentially, each internally parallel over cells.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::config::{ExperimentConfig, InitialKind};
use crate::decay::{fit_decay, record, theoretical_exponent, DecayFit, DecaySeries};
use crate::error::{Error, Result};
use crate::grid::{sample_function, Field, Grid};
use crate::integrator::{evolve, TimeSchedule};
use crate::kernel::{unit_ball_volume, KernelReport};
use crate::operator::OperatorApplier;

/// Samples the configured initial datum on the grid.
///
/// The gaussian is the continuum density `mass (2 pi w^2)^(-n/2)
/// exp(-|x|^2 / (2 w^2))`; the indicator fills the ball `|x| <= width` at
/// the level that gives the requested continuum mass.
pub fn initial_datum(config: &ExperimentConfig, grid: &Grid) -> Result<Field> {
    let width = config.initial.width;
    let mass = config.initial.mass;
    let n = grid.dimension();
    match config.initial.kind {
        InitialKind::Gaussian => {
            let two_w2 = 2.0 * width * width;
            let peak = mass / (std::f64::consts::PI * two_w2).powf(0.5 * n as f64);
            sample_function(grid, |p| {
                let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
                peak * (-r2 / two_w2).exp()
            })
        }
        InitialKind::Indicator => {
            let level = mass / (unit_ball_volume(n) * width.powi(n as i32));
            let w2 = width * width;
            sample_function(grid, |p| {
                let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
                if r2 <= w2 {
                    level
                } else {
                    0.0
                }
            })
        }
    }
}

/// One decay fit with its theoretical target.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FitEntry {
    pub q: f64,
    #[serde(flatten)]
    pub fit: DecayFit,
    pub theoretical_exponent: f64,
    /// |slope + predicted| / predicted, or |slope| when the prediction is
    /// zero (q = 1 conserves mass).
    pub relative_error: f64,
}

/// Wall-clock milliseconds of the run phases.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TimingsMs {
    pub assemble: f64,
    pub evolve: f64,
    pub record: f64,
    pub total: f64,
}

/// Everything the JSON summary contains.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub config_echo: ExperimentConfig,
    pub kernel_report: KernelReport,
    pub fits: Vec<FitEntry>,
    pub timings_ms: TimingsMs,
    /// One-dimensional runs explore scaling outside the theory's n >= 2
    /// sweet spot and are flagged as such.
    pub exploratory: bool,
}

/// Result of a run: the summary that went to JSON and the recorded series.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub series: DecaySeries,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs the experiment in memory, without touching the filesystem.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let total_start = Instant::now();
    let grid = config.build_grid()?;
    let spec = config.build_kernel()?;
    let kernel_report = spec.validate(&grid, 1000)?;
    let strategy = config.resolved_strategy(&spec);

    let stage = Instant::now();
    let op = OperatorApplier::assemble(&spec, &grid, config.boundary_mode, strategy)?;
    let assemble = elapsed_ms(stage);

    let initial = initial_datum(config, &grid)?;
    let schedule = TimeSchedule::log_spaced(config.t_end, config.sample_count, None)?;

    let stage = Instant::now();
    let trajectory = evolve(&op, &initial, &schedule, config.scheme, config.dt_safety)?;
    let evolve_ms = elapsed_ms(stage);

    let stage = Instant::now();
    let series = record(&op, &trajectory, &config.q_list)?;
    let record_ms = elapsed_ms(stage);

    let times = series.times();
    let mut fits = Vec::with_capacity(config.q_list.len());
    for &q in &config.q_list {
        let norms = series
            .norms_for_q(q)
            .expect("recorded for every configured q");
        let fit = fit_decay(&times, &norms, config.fit_window)?;
        let predicted = theoretical_exponent(config.dimension, q, spec.sigma())?;
        let relative_error = if predicted > 0.0 {
            (fit.slope + predicted).abs() / predicted
        } else {
            fit.slope.abs()
        };
        fits.push(FitEntry {
            q,
            fit,
            theoretical_exponent: predicted,
            relative_error,
        });
    }

    let timings_ms = TimingsMs {
        assemble,
        evolve: evolve_ms,
        record: record_ms,
        total: elapsed_ms(total_start),
    };
    Ok(RunOutcome {
        summary: RunSummary {
            config_echo: config.clone(),
            kernel_report,
            fits,
            timings_ms,
            exploratory: config.dimension == 1,
        },
        series,
    })
}

/// Renders the norm series in the stable CSV schema.
///
/// Columns: `t,mass,l1,linf`, one `lq_<q>` column per configured q (q
/// printed at full precision), then `energy_q2`, which is empty for
/// absorbing runs. Line feeds only, 17 significant digits.
pub fn render_series_csv(series: &DecaySeries) -> String {
    let mut out = String::from("t,mass,l1,linf");
    for &q in &series.q_list {
        out.push_str(&format!(",lq_{q}"));
    }
    out.push_str(",energy_q2\n");
    for row in &series.rows {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            row.t, row.mass, row.l1, row.linf
        ));
        for value in &row.lq {
            out.push_str(&format!(",{value:.16e}"));
        }
        match row.energy_q2 {
            Some(e) => out.push_str(&format!(",{e:.16e}\n")),
            None => out.push_str(",\n"),
        }
    }
    out
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, contents)?;
    Ok(())
}

/// Runs the experiment and writes the CSV series and JSON summary.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    let outcome = execute(config)?;
    let csv = render_series_csv(&outcome.series);
    let json = serde_json::to_string_pretty(&outcome.summary)
        .map_err(|e| Error::invalid(format!("summary serialization failed: {e}")))?;
    write_output(&config.output.csv, &csv)?;
    if let Err(e) = write_output(&config.output.summary, &(json + "\n")) {
        let _ = fs::remove_file(&config.output.csv);
        return Err(e);
    }
    Ok(outcome)
}

/// A parsed series CSV, for re-fitting written output.
#[derive(Clone, Debug)]
pub struct SeriesTable {
    header: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl SeriesTable {
    pub fn header(&self) -> &[String] {
        &self.header
    }

    /// A column by header name. Empty fields read as NaN.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let at = self.header.iter().position(|h| h == name)?;
        Some(&self.columns[at])
    }

    pub fn times(&self) -> Result<&[f64]> {
        self.column("t")
            .ok_or_else(|| Error::invalid("the CSV has no t column"))
    }
}

/// Reads a CSV in the schema written by [`render_series_csv`].
pub fn read_series_csv(text: &str) -> Result<SeriesTable> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::invalid("empty CSV"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (index, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::invalid(format!(
                "row {} has {} fields but the header has {}",
                index + 2,
                fields.len(),
                header.len()
            )));
        }
        for (column, field) in columns.iter_mut().zip(&fields) {
            let field = field.trim();
            let value = if field.is_empty() {
                f64::NAN
            } else {
                field.parse::<f64>().map_err(|_| {
                    Error::invalid(format!("row {}: {field:?} is not a number", index + 2))
                })?
            };
            column.push(value);
        }
    }
    Ok(SeriesTable { header, columns })
}

/// Fits one column of a written series CSV against log time.
pub fn fit_csv_column(text: &str, q: f64, window_fraction: f64) -> Result<DecayFit> {
    let table = read_series_csv(text)?;
    let name = format!("lq_{q}");
    let norms = table.column(&name).ok_or_else(|| {
        Error::invalid(format!(
            "no column {name:?} in the CSV; available: {}",
            table.header().join(", ")
        ))
    })?;
    fit_decay(table.times()?, norms, window_fraction)
}

/// The parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Sigma,
    Q,
    KernelFamily,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Sigma => "sigma",
            SweepAxis::Q => "q",
            SweepAxis::KernelFamily => "kernel_family",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<SweepAxis> {
        match s {
            "sigma" => Ok(SweepAxis::Sigma),
            "q" => Ok(SweepAxis::Q),
            "kernel_family" => Ok(SweepAxis::KernelFamily),
            other => Err(Error::invalid(format!(
                "unknown sweep axis {other:?}; expected sigma, q or kernel_family"
            ))),
        }
    }
}

/// One line of the sweep table.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub slope: Option<f64>,
    pub theoretical_exponent: Option<f64>,
    pub relative_error: Option<f64>,
    pub error: Option<String>,
}

fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, raw: &str) -> Result<ExperimentConfig> {
    let mut config = base.clone();
    match axis {
        SweepAxis::Sigma => {
            config.kernel.sigma = raw
                .parse()
                .map_err(|_| Error::invalid(format!("sweep value {raw:?} is not a real number")))?;
        }
        SweepAxis::Q => {
            let q: f64 = raw
                .parse()
                .map_err(|_| Error::invalid(format!("sweep value {raw:?} is not a real number")))?;
            config.q_list = vec![q];
        }
        SweepAxis::KernelFamily => config.kernel.family = raw.parse()?,
    }
    config.validate()?;
    Ok(config)
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Runs one experiment per value along the axis and writes the table of
/// fitted against predicted slopes to the config's sweep output path.
///
/// Individual failures become rows with an error message; the sweep keeps
/// going. No per-run files are written.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("a sweep needs at least one value"));
    }
    base.validate()?;
    let mut rows = Vec::with_capacity(values.len());
    for raw in values {
        let value = raw.trim().to_string();
        let outcome = apply_axis(base, axis, &value).and_then(|config| execute(&config));
        match outcome {
            Ok(outcome) => {
                let entry = &outcome.summary.fits[0];
                rows.push(SweepRow {
                    value,
                    slope: Some(entry.fit.slope),
                    theoretical_exponent: Some(entry.theoretical_exponent),
                    relative_error: Some(entry.relative_error),
                    error: None,
                });
            }
            Err(e) => rows.push(SweepRow {
                value,
                slope: None,
                theoretical_exponent: None,
                relative_error: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let mut table = String::from("value,slope,theoretical_exponent,relative_error,error\n");
    for row in &rows {
        let float = |x: Option<f64>| match x {
            Some(v) => format!("{v:.16e}"),
            None => String::new(),
        };
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_escape(&row.value),
            float(row.slope),
            float(row.theoretical_exponent),
            float(row.relative_error),
            csv_escape(row.error.as_deref().unwrap_or("")),
        ));
    }
    write_output(&base.output.sweep, &table)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::functionals::total_mass;

    fn fast_config(extra: &str) -> ExperimentConfig {
        let base = "\
            dimension = 1\n\
            half_width = 10\n\
            points_per_axis = 64\n\
            t_end = 5\n\
            sample_count = 12\n";
        parse_config(&format!("{base}{extra}")).unwrap()
    }

    #[test]
    fn the_gaussian_datum_carries_its_mass() {
        let config = fast_config("");
        let grid = config.build_grid().unwrap();
        let field = initial_datum(&config, &grid).unwrap();
        assert!((total_mass(&field) - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn the_indicator_datum_is_flat_with_the_right_mass() {
        let config = fast_config("initial.kind = indicator\ninitial.width = 3\ninitial.mass = 2\n");
        let grid = config.build_grid().unwrap();
        let field = initial_datum(&config, &grid).unwrap();
        let level = 2.0 / 6.0;
        let max = field.values().iter().cloned().fold(0.0f64, f64::max);
        assert_eq!(max, level);
        assert!((total_mass(&field) - 2.0).abs() <= 0.1 * 2.0);
    }

    #[test]
    fn runs_write_the_documented_csv_schema() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = fast_config("");
        config.output.csv = dir.path().join("decay.csv");
        config.output.summary = dir.path().join("summary.json");
        let outcome = run_experiment(&config).unwrap();
        assert_eq!(outcome.series.rows.len(), 12);

        let csv = fs::read_to_string(&config.output.csv).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,mass,l1,linf,lq_2,energy_q2");
        assert_eq!(csv.lines().count(), 13);
        // Absorbing runs leave the energy field empty.
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
        assert!(!csv.contains('\r'));

        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&config.output.summary).unwrap()).unwrap();
        for key in [
            "config_echo",
            "kernel_report",
            "fits",
            "timings_ms",
            "exploratory",
        ] {
            assert!(summary.get(key).is_some(), "missing {key}");
        }
        assert_eq!(summary["exploratory"], serde_json::Value::Bool(true));
        assert_eq!(summary["fits"][0]["q"], serde_json::json!(2.0));
        assert!(summary["fits"][0]["slope"].as_f64().unwrap() < 0.0);
        assert_eq!(
            summary["config_echo"]["points_per_axis"],
            serde_json::json!(64)
        );
    }

    #[test]
    fn conservative_runs_fill_the_energy_column() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = fast_config("boundary_mode = conservative\n");
        config.output.csv = dir.path().join("decay.csv");
        config.output.summary = dir.path().join("summary.json");
        run_experiment(&config).unwrap();
        let csv = fs::read_to_string(&config.output.csv).unwrap();
        let table = read_series_csv(&csv).unwrap();
        let energy = table.column("energy_q2").unwrap();
        assert!(energy.iter().all(|e| e.is_finite() && *e >= 0.0));
        // Mass is conserved, so the q = 1 prediction of zero slope applies.
        let mass = table.column("mass").unwrap();
        assert!((mass[11] - mass[0]).abs() <= 1e-12 * mass[0]);
    }

    #[test]
    fn identical_configs_write_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = fast_config("");
        config.output.csv = dir.path().join("a.csv");
        config.output.summary = dir.path().join("a.json");
        run_experiment(&config).unwrap();
        let first = fs::read_to_string(&config.output.csv).unwrap();
        let first_summary = fs::read_to_string(&config.output.summary).unwrap();
        run_experiment(&config).unwrap();
        let second = fs::read_to_string(&config.output.csv).unwrap();
        let second_summary = fs::read_to_string(&config.output.summary).unwrap();
        assert_eq!(first, second);
        let strip = |text: &str| -> serde_json::Value {
            let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
            v.as_object_mut().unwrap().remove("timings_ms");
            v
        };
        assert_eq!(strip(&first_summary), strip(&second_summary));
    }

    #[test]
    fn written_series_refit_to_the_same_slope() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = fast_config("q_list = 1.5, 2\n");
        config.output.csv = dir.path().join("decay.csv");
        config.output.summary = dir.path().join("summary.json");
        let outcome = run_experiment(&config).unwrap();
        let csv = fs::read_to_string(&config.output.csv).unwrap();
        let refit = fit_csv_column(&csv, 1.5, config.fit_window).unwrap();
        let original = outcome.summary.fits[0].fit;
        // The CSV keeps 17 significant digits, so the refit agrees to
        // near-roundoff.
        assert!((refit.slope - original.slope).abs() <= 1e-12);
        let missing = fit_csv_column(&csv, 3.0, 0.5).unwrap_err();
        assert!(missing.to_string().contains("lq_3"));
    }

    #[test]
    fn failed_writes_leave_no_partial_files() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("blocker");
        fs::write(&blocker, "file, not a directory").unwrap();
        let mut config = fast_config("");
        config.output.csv = dir.path().join("decay.csv");
        config.output.summary = blocker.join("summary.json");
        let err = run_experiment(&config).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
        assert!(!config.output.csv.exists());
    }

    #[test]
    fn sweeps_record_failures_and_keep_going() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = fast_config("");
        config.output.sweep = dir.path().join("sweep.csv");
        let values = vec!["0.4".to_string(), "1.5".to_string(), "0.6".to_string()];
        let rows = sweep(&config, SweepAxis::Sigma, &values).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].error.is_none());
        assert!(rows[1].error.as_deref().unwrap().contains("sigma"));
        assert!(rows[2].error.is_none());
        assert!(rows[0].slope.unwrap() < 0.0);
        // Heavier tails (smaller sigma) decay faster.
        assert!(rows[0].theoretical_exponent.unwrap() > rows[2].theoretical_exponent.unwrap());
        let table = fs::read_to_string(&config.output.sweep).unwrap();
        assert!(table.starts_with("value,slope,theoretical_exponent,relative_error,error\n"));
        assert_eq!(table.lines().count(), 4);

        assert!(sweep(&config, SweepAxis::Sigma, &[]).is_err());
    }

    #[test]
    fn family_sweeps_put_both_regimes_in_one_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = fast_config("");
        config.output.sweep = dir.path().join("sweep.csv");
        let values = vec!["fractional_tail".to_string(), "compact_smooth".to_string()];
        let rows = sweep(&config, SweepAxis::KernelFamily, &values).unwrap();
        assert!(rows.iter().all(|r| r.error.is_none()));
        // n = 1, q = 2: predicted exponents 1/2 (heavy tail) and 1/4 (compact).
        assert!((rows[0].theoretical_exponent.unwrap() - 0.5).abs() <= 1e-15);
        assert!((rows[1].theoretical_exponent.unwrap() - 0.25).abs() <= 1e-15);
    }
}
