//! Run configuration: line-oriented `key=value` text with `#` comments.
//! Later assignments override earlier ones, so CLI flags are applied after
//! the file through the same [`RunConfig::set`].

use std::path::PathBuf;

use crate::depressions::{FillMode, FillOptions};
use crate::erosion::SimParams;
use crate::error::ConfigError;
use crate::grid::Connectivity;
use crate::scheduler::{Strategy, StrategyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    D8,
    Mfd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunConfig {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub timesteps: usize,
    pub strategy: Strategy,
    pub params: SimParams,
    pub fill: FillOptions,
    pub connectivity: Connectivity,
    pub routing: RoutingMode,
    pub mfd_exponent: f64,
    pub precision: Precision,
    pub output: PathBuf,
    /// Write a snapshot every this many steps; 0 disables snapshots.
    pub snapshot_interval: usize,
    /// Record per-cell erosion completion order and fail on violations.
    pub check_order: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            width: 500,
            height: 500,
            seed: 42,
            timesteps: 120,
            strategy: Strategy::new(StrategyKind::RbSerial, 1),
            params: SimParams::default(),
            fill: FillOptions::OFF,
            connectivity: Connectivity::Eight,
            routing: RoutingMode::D8,
            mfd_exponent: 1.0,
            precision: Precision::F64,
            output: PathBuf::from("out.lem"),
            snapshot_interval: 0,
            check_order: false,
        }
    }
}

/// Every accepted key, in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "width",
    "height",
    "seed",
    "timesteps",
    "strategy",
    "workers",
    "k",
    "m_exp",
    "n_exp",
    "uplift",
    "dt",
    "epsilon",
    "dx",
    "dy",
    "max_newton_iters",
    "fill",
    "fill_epsilon",
    "connectivity",
    "routing",
    "mfd_exponent",
    "precision",
    "output",
    "snapshot_interval",
    "check_order",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Type {
        key: key.to_owned(),
        value: value.to_owned(),
        expected,
    })
}

fn range(key: &str, reason: &str) -> ConfigError {
    ConfigError::Range {
        key: key.to_owned(),
        reason: reason.to_owned(),
    }
}

fn float(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse(key, value, "a number")?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(range(key, "must be finite"))
    }
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v = float(key, value)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(range(key, "must be > 0"))
    }
}

fn dim(key: &str, value: &str) -> Result<usize, ConfigError> {
    let v: usize = parse(key, value, "a cell count")?;
    if v >= 3 {
        Ok(v)
    } else {
        Err(range(key, "must be >= 3"))
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.params;
        match key {
            "width" => self.width = dim(key, value)?,
            "height" => self.height = dim(key, value)?,
            "seed" => self.seed = parse(key, value, "an unsigned 64-bit integer")?,
            "timesteps" => self.timesteps = parse(key, value, "a non-negative integer")?,
            "strategy" => {
                self.strategy.kind = value.parse().map_err(|_| ConfigError::Type {
                    key: key.to_owned(),
                    value: value.to_owned(),
                    expected: "a strategy name",
                })?
            }
            "workers" => {
                let w: usize = parse(key, value, "a positive integer")?;
                if w == 0 {
                    return Err(range(key, "must be >= 1"));
                }
                self.strategy.workers = w;
            }
            "k" => {
                p.k = float(key, value)?;
                if p.k < 0.0 {
                    return Err(range(key, "must be >= 0"));
                }
            }
            "m_exp" => p.m_exp = float(key, value)?,
            "n_exp" => p.n_exp = positive(key, value)?,
            "uplift" => p.uplift = float(key, value)?,
            "dt" => p.dt = positive(key, value)?,
            "epsilon" => p.epsilon = positive(key, value)?,
            "dx" => p.dx = positive(key, value)?,
            "dy" => p.dy = positive(key, value)?,
            "max_newton_iters" => {
                p.max_newton_iters = parse(key, value, "a positive integer")?;
                if p.max_newton_iters == 0 {
                    return Err(range(key, "must be >= 1"));
                }
            }
            "fill" => {
                self.fill.mode = match value {
                    "off" => FillMode::Off,
                    "exact" => FillMode::Exact,
                    "epsilon" | "epsilon_ascending" => FillMode::EpsilonAscending,
                    _ => {
                        return Err(ConfigError::Type {
                            key: key.to_owned(),
                            value: value.to_owned(),
                            expected: "off, exact or epsilon",
                        })
                    }
                }
            }
            "fill_epsilon" => self.fill.epsilon_increment = Some(positive(key, value)?),
            "connectivity" => {
                self.connectivity = match parse::<u32>(key, value, "4 or 8")? {
                    4 => Connectivity::Four,
                    8 => Connectivity::Eight,
                    6 => return Err(range(key, "hexagonal grids are not supported")),
                    _ => return Err(range(key, "must be 4 or 8")),
                }
            }
            "routing" => {
                self.routing = match value {
                    "d8" => RoutingMode::D8,
                    "mfd" => RoutingMode::Mfd,
                    _ => {
                        return Err(ConfigError::Type {
                            key: key.to_owned(),
                            value: value.to_owned(),
                            expected: "d8 or mfd",
                        })
                    }
                }
            }
            "mfd_exponent" => self.mfd_exponent = positive(key, value)?,
            "precision" => {
                self.precision = match value {
                    "f32" | "single" => Precision::F32,
                    "f64" | "double" => Precision::F64,
                    _ => {
                        return Err(ConfigError::Type {
                            key: key.to_owned(),
                            value: value.to_owned(),
                            expected: "f32 or f64",
                        })
                    }
                }
            }
            "output" => self.output = PathBuf::from(value),
            "snapshot_interval" => self.snapshot_interval = parse(key, value, "a non-negative integer")?,
            "check_order" => self.check_order = parse(key, value, "true or false")?,
            other => return Err(ConfigError::UnknownKey(other.to_owned())),
        }
        Ok(())
    }

    /// Applies every `key=value` token of `text` in order.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            for token in line.split_whitespace() {
                let (key, value) = token.split_once('=').ok_or_else(|| ConfigError::Syntax {
                    line: i + 1,
                    text: token.to_owned(),
                })?;
                self.set(key.trim(), value.trim())?;
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }
}

/// Defaults overridden by `text`.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(text)?;
    Ok(cfg)
}
