//! Flat `key = value` experiment configuration.
//!
//! The grammar is deliberately minimal: UTF-8 text, one `key = value` pair
//! per line, `#` starts a comment, keys are dotted lowercase words, booleans
//! are `true`/`false`, reals accept decimal or scientific notation, and
//! `q_list` takes a comma-separated list. Unknown keys are rejected, every
//! constraint violation names the offending key, and a parsed config
//! serializes back to a canonical document that reparses to an equal value.
//!
//! An empty document is already a complete experiment: the defaults describe
//! the flagship run (a unit-mass heavy-tail kernel with sigma = 1/2 on a
//! 128 x 128 grid over [-40, 40]^2, absorbing boundary, forward Euler to
//! t = 20 with 40 log-spaced samples).

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, MAX_DIMENSION};
use crate::integrator::Scheme;
use crate::kernel::{KernelFamily, KernelSpec};
use crate::operator::{BoundaryMode, Strategy, DEFAULT_DENSE_BUDGET_BYTES};

/// The kernel block of a config document.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    /// Tail order, used by the two fractional families.
    pub sigma: f64,
    /// Tail amplitude, used by the two fractional families.
    pub c1: f64,
    /// Uniform bound of the kernel.
    pub cap: f64,
    /// Modulation strength of the nonconvolution family.
    pub modulation: f64,
    /// Scale the kernel to unit total mass after construction. For the
    /// nonconvolution family the underlying radial factor is normalized.
    pub normalize: bool,
    /// Support radius of the compact family.
    pub radius: f64,
}

impl Default for KernelConfig {
    fn default() -> KernelConfig {
        KernelConfig {
            family: KernelFamily::FractionalTail,
            sigma: 0.5,
            c1: 1.0,
            cap: 1.0,
            modulation: 0.0,
            normalize: true,
            radius: 1.0,
        }
    }
}

/// Shape of the initial datum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// `mass * (2 pi width^2)^(-n/2) exp(-|x|^2 / (2 width^2))`.
    Gaussian,
    /// The indicator of the ball `|x| <= width`, scaled to the given mass.
    Indicator,
}

impl fmt::Display for InitialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitialKind::Gaussian => "gaussian",
            InitialKind::Indicator => "indicator",
        })
    }
}

impl FromStr for InitialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<InitialKind> {
        match s {
            "gaussian" => Ok(InitialKind::Gaussian),
            "indicator" => Ok(InitialKind::Indicator),
            other => Err(Error::invalid(format!(
                "unknown initial datum {other:?}; expected gaussian or indicator"
            ))),
        }
    }
}

/// Initial datum block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InitialConfig {
    pub kind: InitialKind,
    /// Gaussian standard deviation, or ball radius for the indicator.
    pub width: f64,
    /// Total integral of the datum.
    pub mass: f64,
}

impl Default for InitialConfig {
    fn default() -> InitialConfig {
        InitialConfig {
            kind: InitialKind::Gaussian,
            width: 2.0,
            mass: 1.0,
        }
    }
}

/// Either a fixed operator strategy or a request to pick one at run time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyChoice {
    /// FFT for convolution kernels, otherwise dense when the weights fit
    /// the memory budget, otherwise on the fly.
    Auto,
    Fixed(Strategy),
}

impl fmt::Display for StrategyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyChoice::Auto => f.write_str("auto"),
            StrategyChoice::Fixed(s) => s.fmt(f),
        }
    }
}

impl FromStr for StrategyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<StrategyChoice> {
        if s == "auto" {
            return Ok(StrategyChoice::Auto);
        }
        match Strategy::from_str(s) {
            Ok(fixed) => Ok(StrategyChoice::Fixed(fixed)),
            Err(_) => Err(Error::invalid(format!(
                "unknown strategy {s:?}; expected auto, dense, on_the_fly or \
                 fft_convolution"
            ))),
        }
    }
}

impl Serialize for StrategyChoice {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Output file locations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputConfig {
    /// Time series of norms, one row per sample.
    pub csv: PathBuf,
    /// JSON run summary with fits and the kernel report.
    pub summary: PathBuf,
    /// Table written by parameter sweeps.
    pub sweep: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> OutputConfig {
        OutputConfig {
            csv: PathBuf::from("decay.csv"),
            summary: PathBuf::from("summary.json"),
            sweep: PathBuf::from("sweep.csv"),
        }
    }
}

/// A fully validated experiment description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
    pub kernel: KernelConfig,
    pub boundary_mode: BoundaryMode,
    pub strategy: StrategyChoice,
    pub scheme: Scheme,
    pub dt_safety: f64,
    pub t_end: f64,
    pub sample_count: usize,
    pub q_list: Vec<f64>,
    pub initial: InitialConfig,
    /// Reserved for randomized initial data; the built-in data ignore it.
    pub seed: u64,
    /// Trailing fraction of log time used by the decay fit.
    pub fit_window: f64,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            dimension: 2,
            half_width: 40.0,
            points_per_axis: 128,
            kernel: KernelConfig::default(),
            boundary_mode: BoundaryMode::Absorbing,
            strategy: StrategyChoice::Auto,
            scheme: Scheme::Euler,
            dt_safety: 0.9,
            t_end: 20.0,
            sample_count: 40,
            q_list: vec![2.0],
            initial: InitialConfig::default(),
            seed: 0,
            fit_window: 0.5,
            output: OutputConfig::default(),
        }
    }
}

/// Parses a config document, applies defaults and validates the result.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    for (index, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::Config {
                key: line.to_string(),
                message: format!("line {} is not of the form key = value", index + 1),
            });
        };
        let key = line[..eq].trim();
        let value = line[eq + 1..].trim();
        assign(&mut config, key, value)?;
    }
    config.validate()?;
    Ok(config)
}

fn assign(config: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    // The headline parameter may be written without its block prefix.
    let canonical = if key == "sigma" { "kernel.sigma" } else { key };
    match canonical {
        "dimension" => config.dimension = parse_integer(key, value)?,
        "half_width" => config.half_width = parse_real(key, value)?,
        "points_per_axis" => config.points_per_axis = parse_integer(key, value)?,
        "kernel.family" => config.kernel.family = parse_keyed(key, value)?,
        "kernel.sigma" => config.kernel.sigma = parse_real(key, value)?,
        "kernel.c1" => config.kernel.c1 = parse_real(key, value)?,
        "kernel.cap" => config.kernel.cap = parse_real(key, value)?,
        "kernel.modulation" => config.kernel.modulation = parse_real(key, value)?,
        "kernel.normalize" => config.kernel.normalize = parse_bool(key, value)?,
        "kernel.radius" => config.kernel.radius = parse_real(key, value)?,
        "boundary_mode" => config.boundary_mode = parse_keyed(key, value)?,
        "strategy" => config.strategy = parse_keyed(key, value)?,
        "scheme" => config.scheme = parse_keyed(key, value)?,
        "dt_safety" => config.dt_safety = parse_real(key, value)?,
        "t_end" => config.t_end = parse_real(key, value)?,
        "sample_count" => config.sample_count = parse_integer(key, value)?,
        "q_list" => {
            let mut list = Vec::new();
            for piece in value.split(',') {
                let piece = piece.trim();
                if piece.is_empty() {
                    return Err(Error::Config {
                        key: key.to_string(),
                        message: format!("empty entry in list {value:?}"),
                    });
                }
                list.push(parse_real(key, piece)?);
            }
            config.q_list = list;
        }
        "initial.kind" => config.initial.kind = parse_keyed(key, value)?,
        "initial.width" => config.initial.width = parse_real(key, value)?,
        "initial.mass" => config.initial.mass = parse_real(key, value)?,
        "seed" => {
            config.seed = value.parse().map_err(|_| Error::Config {
                key: key.to_string(),
                message: format!("expected an unsigned integer, got {value:?}"),
            })?
        }
        "fit.window" => config.fit_window = parse_real(key, value)?,
        "output.csv" => config.output.csv = parse_path(key, value)?,
        "output.summary" => config.output.summary = parse_path(key, value)?,
        "output.sweep" => config.output.sweep = parse_path(key, value)?,
        other => {
            return Err(Error::Config {
                key: other.to_string(),
                message: "unknown key".to_string(),
            })
        }
    }
    Ok(())
}

fn parse_real(key: &str, value: &str) -> Result<f64> {
    match value.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(Error::Config {
            key: key.to_string(),
            message: format!("expected a finite real number, got {value:?}"),
        }),
    }
}

fn parse_integer(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| Error::Config {
        key: key.to_string(),
        message: format!("expected a positive integer, got {value:?}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config {
            key: key.to_string(),
            message: format!("expected true or false, got {value:?}"),
        }),
    }
}

fn parse_path(key: &str, value: &str) -> Result<PathBuf> {
    if value.is_empty() {
        return Err(Error::Config {
            key: key.to_string(),
            message: "expected a file path".to_string(),
        });
    }
    Ok(PathBuf::from(value))
}

fn parse_keyed<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr<Err = Error>,
{
    T::from_str(value).map_err(|e| Error::Config {
        key: key.to_string(),
        message: match e {
            Error::InvalidArgument(message) => message,
            other => other.to_string(),
        },
    })
}

fn constraint(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Checks every constraint, reporting the first violation by key.
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.dimension > MAX_DIMENSION {
            return Err(constraint(
                "dimension",
                format!("must be 1, 2 or 3, got {}", self.dimension),
            ));
        }
        if !(self.half_width > 0.0) {
            return Err(constraint(
                "half_width",
                format!("must be positive, got {}", self.half_width),
            ));
        }
        if self.points_per_axis < 2 || !self.points_per_axis.is_multiple_of(2) {
            return Err(constraint(
                "points_per_axis",
                format!("must be even and at least 2, got {}", self.points_per_axis),
            ));
        }
        let k = &self.kernel;
        match k.family {
            KernelFamily::Custom => {
                return Err(constraint(
                    "kernel.family",
                    "custom kernels can only be built through the library API",
                ));
            }
            KernelFamily::CompactSmooth => {
                if !(k.radius > 0.0) {
                    return Err(constraint(
                        "kernel.radius",
                        format!("must be positive, got {}", k.radius),
                    ));
                }
            }
            KernelFamily::FractionalTail | KernelFamily::NonconvolutionFractional => {
                if !(k.sigma > 0.0 && k.sigma < 1.0) {
                    return Err(constraint(
                        "kernel.sigma",
                        format!("sigma must lie in (0, 1), got {}", k.sigma),
                    ));
                }
                if !(k.c1 > 0.0) {
                    return Err(constraint(
                        "kernel.c1",
                        format!("must be positive, got {}", k.c1),
                    ));
                }
            }
        }
        if !(k.cap > 0.0) {
            return Err(constraint(
                "kernel.cap",
                format!("must be positive, got {}", k.cap),
            ));
        }
        if k.family == KernelFamily::NonconvolutionFractional && !(0.0..1.0).contains(&k.modulation)
        {
            return Err(constraint(
                "kernel.modulation",
                format!("must lie in [0, 1), got {}", k.modulation),
            ));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(constraint(
                "dt_safety",
                format!("must lie in (0, 1], got {}", self.dt_safety),
            ));
        }
        if !(self.t_end > 0.0) {
            return Err(constraint(
                "t_end",
                format!("must be positive, got {}", self.t_end),
            ));
        }
        if self.sample_count < 2 {
            return Err(constraint(
                "sample_count",
                format!("must be at least 2, got {}", self.sample_count),
            ));
        }
        if self.q_list.is_empty() {
            return Err(constraint("q_list", "must hold at least one exponent"));
        }
        for &q in &self.q_list {
            if !q.is_finite() || q < 1.0 {
                return Err(constraint(
                    "q_list",
                    format!("every exponent must be a finite real >= 1, got {q}"),
                ));
            }
        }
        if !(self.initial.width > 0.0) {
            return Err(constraint(
                "initial.width",
                format!("must be positive, got {}", self.initial.width),
            ));
        }
        if self.initial.kind == InitialKind::Indicator && self.initial.width >= self.half_width {
            return Err(constraint(
                "initial.width",
                format!(
                    "the indicator ball must fit inside the box: width {} vs \
                     half_width {}",
                    self.initial.width, self.half_width
                ),
            ));
        }
        if !(self.initial.mass > 0.0) {
            return Err(constraint(
                "initial.mass",
                format!("must be positive, got {}", self.initial.mass),
            ));
        }
        if !(self.fit_window > 0.0 && self.fit_window <= 1.0) {
            return Err(constraint(
                "fit.window",
                format!("must lie in (0, 1], got {}", self.fit_window),
            ));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.dimension, self.half_width, self.points_per_axis)
    }

    /// Builds the kernel described by the kernel block, applying the
    /// normalization flag.
    pub fn build_kernel(&self) -> Result<KernelSpec> {
        let k = &self.kernel;
        let spec = match k.family {
            KernelFamily::CompactSmooth => {
                let spec = KernelSpec::compact_smooth(self.dimension, k.cap, k.radius)?;
                if k.normalize {
                    spec.normalize_mass(1.0)?
                } else {
                    spec
                }
            }
            KernelFamily::FractionalTail => {
                let spec = KernelSpec::fractional_tail(self.dimension, k.sigma, k.c1, k.cap)?;
                if k.normalize {
                    spec.normalize_mass(1.0)?
                } else {
                    spec
                }
            }
            KernelFamily::NonconvolutionFractional => {
                let (c1, cap) = if k.normalize {
                    let base = KernelSpec::fractional_tail(self.dimension, k.sigma, k.c1, k.cap)?
                        .normalize_mass(1.0)?;
                    (base.c1(), base.cap())
                } else {
                    (k.c1, k.cap)
                };
                KernelSpec::nonconvolution_fractional(
                    self.dimension,
                    k.sigma,
                    c1,
                    cap,
                    k.modulation,
                )?
            }
            KernelFamily::Custom => {
                return Err(constraint(
                    "kernel.family",
                    "custom kernels can only be built through the library API",
                ));
            }
        };
        Ok(spec)
    }

    /// The strategy a run will actually use.
    pub fn resolved_strategy(&self, spec: &KernelSpec) -> Strategy {
        match self.strategy {
            StrategyChoice::Fixed(strategy) => strategy,
            StrategyChoice::Auto => {
                if spec.is_convolution() {
                    Strategy::FftConvolution
                } else {
                    let cells = (self.points_per_axis as u64).pow(self.dimension as u32);
                    if cells * cells * 8 <= DEFAULT_DENSE_BUDGET_BYTES {
                        Strategy::Dense
                    } else {
                        Strategy::OnTheFly
                    }
                }
            }
        }
    }

    /// Canonical document that reparses to an equal config.
    pub fn to_document(&self) -> String {
        let q_list = self
            .q_list
            .iter()
            .map(|q| q.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            "dimension = {}\n\
             half_width = {}\n\
             points_per_axis = {}\n\
             kernel.family = {}\n\
             kernel.sigma = {}\n\
             kernel.c1 = {}\n\
             kernel.cap = {}\n\
             kernel.modulation = {}\n\
             kernel.normalize = {}\n\
             kernel.radius = {}\n\
             boundary_mode = {}\n\
             strategy = {}\n\
             scheme = {}\n\
             dt_safety = {}\n\
             t_end = {}\n\
             sample_count = {}\n\
             q_list = {}\n\
             initial.kind = {}\n\
             initial.width = {}\n\
             initial.mass = {}\n\
             seed = {}\n\
             fit.window = {}\n\
             output.csv = {}\n\
             output.summary = {}\n\
             output.sweep = {}\n",
            self.dimension,
            self.half_width,
            self.points_per_axis,
            self.kernel.family,
            self.kernel.sigma,
            self.kernel.c1,
            self.kernel.cap,
            self.kernel.modulation,
            self.kernel.normalize,
            self.kernel.radius,
            self.boundary_mode,
            self.strategy,
            self.scheme,
            self.dt_safety,
            self.t_end,
            self.sample_count,
            q_list,
            self.initial.kind,
            self.initial.width,
            self.initial.mass,
            self.seed,
            self.fit_window,
            self.output.csv.display(),
            self.output.summary.display(),
            self.output.sweep.display(),
        )
    }
}
