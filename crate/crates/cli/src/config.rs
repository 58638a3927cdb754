//! Experiment configuration in TOML.
//!
//! Every key is optional. An empty file selects the eight reference
//! operating points.
//!
//! ```toml
//! seed = 7
//! monte_carlo = false
//! optimize = false
//! db_per_km = 0.204
//! block_size = 10000000
//!
//! [[points]]
//! protocol = "4D"
//! length_km = 65        # or loss_db = 14.0
//! mu1 = 0.2             # overrides of the nearest reference point
//!
//! [sweep]
//! protocols = ["2D", "4D"]
//! from_db = 0.0
//! to_db = 45.0
//! step_db = 0.5
//!
//! [output]
//! format = "csv"
//! path = "report.csv"
//! ```

use serde::Deserialize;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use thiserror::Error;
use timebin_qkd::channel::{NoiseParams, Protocol};
use timebin_qkd::finite_key::DecoyScheme;
use timebin_qkd::reference::{nearest_point, OPERATING_POINTS};
use timebin_qkd::session::{SessionConfig, SessionMode};
use toml::Spanned;

/// Fiber attenuation implied by 25 km at 5.1 dB.
pub const DEFAULT_DB_PER_KM: f64 = 0.204;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{field}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    monte_carlo: Option<bool>,
    optimize: Option<bool>,
    db_per_km: Option<Spanned<f64>>,
    block_size: Option<Spanned<u64>>,
    #[serde(default)]
    points: Vec<RawPoint>,
    sweep: Option<RawSweep>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    protocol: Spanned<String>,
    loss_db: Option<Spanned<f64>>,
    length_km: Option<Spanned<f64>>,
    mu1: Option<f64>,
    mu2: Option<f64>,
    p_z_alice: Option<f64>,
    p_z_bob: Option<f64>,
    f_ec: Option<f64>,
    dark_count_rate: Option<f64>,
    intrinsic_error_z: Option<f64>,
    intrinsic_error_x: Option<f64>,
}

impl RawPoint {
    fn overrides(&self) -> Overrides {
        Overrides {
            mu1: self.mu1,
            mu2: self.mu2,
            p_z_alice: self.p_z_alice,
            p_z_bob: self.p_z_bob,
            f_ec: self.f_ec,
            dark_count_rate: self.dark_count_rate,
            intrinsic_error_z: self.intrinsic_error_z,
            intrinsic_error_x: self.intrinsic_error_x,
        }
    }
}

/// Session settings that replace those of the nearest reference point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub p_z_alice: Option<f64>,
    pub p_z_bob: Option<f64>,
    pub f_ec: Option<f64>,
    pub dark_count_rate: Option<f64>,
    pub intrinsic_error_z: Option<f64>,
    pub intrinsic_error_x: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    protocols: Option<Vec<Spanned<String>>>,
    from_db: Spanned<f64>,
    to_db: Spanned<f64>,
    step_db: Spanned<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    format: Option<OutputFormat>,
    path: Option<PathBuf>,
}

/// One channel to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSpec {
    pub protocol: Protocol,
    pub loss_db: f64,
    pub overrides: Overrides,
}

impl PointSpec {
    pub fn new(protocol: Protocol, loss_db: f64) -> Self {
        Self {
            protocol,
            loss_db,
            overrides: Overrides::default(),
        }
    }

    /// Session settings: the nearest reference point, calibrated noise,
    /// then the overrides.
    pub fn session_config(&self, block_size: u64, mode: SessionMode) -> SessionConfig {
        let base = nearest_point(self.protocol, self.loss_db);
        let o = &self.overrides;
        let calibrated = NoiseParams::calibrated(self.protocol);
        let noise = NoiseParams {
            dark_count_rate: o.dark_count_rate.unwrap_or(calibrated.dark_count_rate),
            intrinsic_error_z: o.intrinsic_error_z.unwrap_or(calibrated.intrinsic_error_z),
            intrinsic_error_x: o.intrinsic_error_x.unwrap_or(calibrated.intrinsic_error_x),
        };
        let mut config = SessionConfig::new(
            self.protocol,
            self.loss_db,
            DecoyScheme::new(o.mu1.unwrap_or(base.mu1), o.mu2.unwrap_or(base.mu2)),
            o.p_z_alice.unwrap_or(base.p_z_alice),
            o.p_z_bob.unwrap_or(base.p_z_bob),
            noise,
        )
        .with_mode(mode);
        config.security.block_size_nz = block_size;
        if let Some(f) = o.f_ec {
            config.f_ec = f;
        }
        config
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub protocols: Vec<Protocol>,
    pub from_db: f64,
    pub to_db: f64,
    pub step_db: f64,
}

impl SweepSpec {
    /// Losses `from, from + step, ...` up to `to` inclusive.
    pub fn losses(&self) -> Vec<f64> {
        if self.to_db < self.from_db {
            return Vec::new();
        }
        let n = ((self.to_db - self.from_db) / self.step_db + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((self.from_db + i as f64 * self.step_db) * 1e9).round() / 1e9)
            .collect()
    }

    pub fn points(&self) -> Vec<PointSpec> {
        self.protocols
            .iter()
            .flat_map(|&p| self.losses().into_iter().map(move |l| PointSpec::new(p, l)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub monte_carlo: bool,
    /// Grid-optimize intensities and receiver basis probability per point.
    pub optimize: bool,
    pub db_per_km: f64,
    /// Key-basis detections per block.
    pub block_size: u64,
    pub points: Vec<PointSpec>,
    pub sweep: Option<SweepSpec>,
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            monte_carlo: false,
            optimize: false,
            db_per_km: DEFAULT_DB_PER_KM,
            block_size: 10_000_000,
            points: OPERATING_POINTS
                .iter()
                .map(|p| PointSpec::new(p.protocol, p.loss_db))
                .collect(),
            sweep: None,
            format: OutputFormat::Csv,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn mode(&self) -> SessionMode {
        if self.monte_carlo {
            SessionMode::MonteCarlo
        } else {
            SessionMode::Analytic
        }
    }

    /// Explicit points followed by the sweep points.
    pub fn all_points(&self) -> Vec<PointSpec> {
        let mut pts = self.points.clone();
        if let Some(s) = &self.sweep {
            pts.extend(s.points());
        }
        pts
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

fn invalid<T>(
    text: &str,
    field: String,
    span: Range<usize>,
    message: &str,
) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid {
        field,
        line: Some(line_of(text, span)),
        message: message.to_string(),
    })
}

fn protocol(text: &str, field: String, value: &Spanned<String>) -> Result<Protocol, ConfigError> {
    value
        .get_ref()
        .parse()
        .or_else(|_| invalid(text, field, value.span(), "expected \"2D\" or \"4D\""))
}

fn check_probability(
    text: &str,
    field: String,
    value: Option<f64>,
    span: Range<usize>,
    open: bool,
) -> Result<(), ConfigError> {
    match value {
        Some(v) if open && !(v > 0.0 && v < 1.0) => {
            invalid(text, field, span, "must lie in (0, 1)")
        }
        Some(v) if !open && !(0.0..=1.0).contains(&v) => {
            invalid(text, field, span, "must lie in [0, 1]")
        }
        _ => Ok(()),
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut config = ExperimentConfig {
        seed: raw.seed.unwrap_or(0),
        monte_carlo: raw.monte_carlo.unwrap_or(false),
        optimize: raw.optimize.unwrap_or(false),
        ..ExperimentConfig::default()
    };
    if let Some(v) = &raw.db_per_km {
        if !(*v.get_ref() > 0.0) {
            return invalid(text, "db_per_km".into(), v.span(), "must be positive");
        }
        config.db_per_km = *v.get_ref();
    }
    if let Some(v) = &raw.block_size {
        if *v.get_ref() == 0 {
            return invalid(text, "block_size".into(), v.span(), "must be positive");
        }
        config.block_size = *v.get_ref();
    }

    let mut points = Vec::with_capacity(raw.points.len());
    for (i, p) in raw.points.iter().enumerate() {
        let field = |name: &str| format!("points[{i}].{name}");
        let proto = protocol(text, field("protocol"), &p.protocol)?;
        let loss = match (&p.loss_db, &p.length_km) {
            (Some(_), Some(km)) => {
                return invalid(
                    text,
                    field("length_km"),
                    km.span(),
                    "give loss_db or length_km, not both",
                )
            }
            (Some(db), None) => {
                if !(*db.get_ref() >= 0.0) {
                    return invalid(
                        text,
                        field("loss_db"),
                        db.span(),
                        "loss must be non-negative",
                    );
                }
                *db.get_ref()
            }
            (None, Some(km)) => {
                if !(*km.get_ref() >= 0.0) {
                    return invalid(
                        text,
                        field("length_km"),
                        km.span(),
                        "length must be non-negative",
                    );
                }
                km.get_ref() * config.db_per_km
            }
            (None, None) => {
                return invalid(
                    text,
                    field("protocol"),
                    p.protocol.span(),
                    "missing loss_db or length_km",
                )
            }
        };
        let o = p.overrides();
        let span = p.protocol.span();
        for (name, v) in [
            ("mu1", o.mu1),
            ("mu2", o.mu2),
            ("dark_count_rate", o.dark_count_rate),
        ] {
            if matches!(v, Some(x) if !(x >= 0.0)) {
                return invalid(text, field(name), span.clone(), "must be non-negative");
            }
        }
        check_probability(text, field("p_z_alice"), o.p_z_alice, span.clone(), true)?;
        check_probability(text, field("p_z_bob"), o.p_z_bob, span.clone(), true)?;
        check_probability(
            text,
            field("intrinsic_error_z"),
            o.intrinsic_error_z,
            span.clone(),
            false,
        )?;
        check_probability(
            text,
            field("intrinsic_error_x"),
            o.intrinsic_error_x,
            span.clone(),
            false,
        )?;
        if matches!(o.f_ec, Some(f) if !(f >= 1.0)) {
            return invalid(text, field("f_ec"), span, "must be at least 1");
        }
        points.push(PointSpec {
            protocol: proto,
            loss_db: loss,
            overrides: o,
        });
    }

    if let Some(s) = &raw.sweep {
        let protocols = match &s.protocols {
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(i, p)| protocol(text, format!("sweep.protocols[{i}]"), p))
                .collect::<Result<Vec<_>, _>>()?,
            None => Protocol::ALL.to_vec(),
        };
        if !(*s.from_db.get_ref() >= 0.0) {
            return invalid(
                text,
                "sweep.from_db".into(),
                s.from_db.span(),
                "loss must be non-negative",
            );
        }
        if !(*s.step_db.get_ref() > 0.0) {
            return invalid(
                text,
                "sweep.step_db".into(),
                s.step_db.span(),
                "must be positive",
            );
        }
        config.sweep = Some(SweepSpec {
            protocols,
            from_db: *s.from_db.get_ref(),
            to_db: *s.to_db.get_ref(),
            step_db: *s.step_db.get_ref(),
        });
    }
    if !points.is_empty() || config.sweep.is_some() {
        config.points = points;
    }
    if let Some(out) = raw.output {
        config.format = out.format.unwrap_or_default();
        config.output = out.path;
    }
    Ok(config)
}
