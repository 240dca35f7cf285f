//! Run configuration, loaded from JSON and overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::ClockParams;
use crate::ticks::CountingObservable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    SweepThreshold,
    SweepLambda,
    SweepSpin,
    FtCheck,
    Turkur,
    Noise,
    Spectrum,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Simulate,
        Mode::SweepThreshold,
        Mode::SweepLambda,
        Mode::SweepSpin,
        Mode::FtCheck,
        Mode::Turkur,
        Mode::Noise,
        Mode::Spectrum,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::SweepThreshold => "sweep-threshold",
            Mode::SweepLambda => "sweep-lambda",
            Mode::SweepSpin => "sweep-spin",
            Mode::FtCheck => "ft-check",
            Mode::Turkur => "turkur",
            Mode::Noise => "noise",
            Mode::Spectrum => "spectrum",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::Config(format!("unknown mode '{s}'")))
    }
}

fn default_trajectories() -> u64 {
    200
}
fn default_min_ticks() -> usize {
    20
}
fn default_seed() -> u64 {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_observable() -> String {
    "emissions".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: ClockParams,
    /// Preset name or `a_minus,a_plus`.
    #[serde(default = "default_observable")]
    pub observable: String,
    /// Fixed threshold; modes that sweep use it as the only grid point.
    #[serde(default)]
    pub threshold: Option<u64>,
    #[serde(default)]
    pub m_grid: Option<Vec<u64>>,
    #[serde(default = "default_trajectories")]
    pub trajectories: u64,
    #[serde(default = "default_min_ticks")]
    pub horizon_min_ticks: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Relative drive noise levels for `noise`.
    #[serde(default)]
    pub noise_sigma_rel: Option<Vec<f64>>,
    #[serde(default)]
    pub noise_dt: Option<f64>,
    /// Drive values for `sweep-lambda`.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    /// Values of `2S` for `sweep-spin`.
    #[serde(default)]
    pub spins2: Option<Vec<u32>>,
    /// Record length for `simulate` and `spectrum`.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn new(mode: Mode, params: ClockParams) -> Self {
        RunConfig {
            mode,
            params,
            observable: default_observable(),
            threshold: None,
            m_grid: None,
            trajectories: default_trajectories(),
            horizon_min_ticks: default_min_ticks(),
            seed: default_seed(),
            out: default_out(),
            noise_sigma_rel: None,
            noise_dt: None,
            lambdas: None,
            spins2: None,
            horizon: None,
            workers: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn observable(&self) -> Result<CountingObservable> {
        self.observable.parse().map_err(|e: Error| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.observable()?;
        if self.trajectories < 1 {
            return Err(Error::Config("trajectories must be >= 1".into()));
        }
        if self.horizon_min_ticks < 1 {
            return Err(Error::Config("horizon_min_ticks must be >= 1".into()));
        }
        if self.threshold == Some(0) || self.m_grid.as_ref().is_some_and(|g| g.is_empty() || g.contains(&0)) {
            return Err(Error::Config("thresholds must be >= 1".into()));
        }
        if let Some(s) = &self.noise_sigma_rel {
            if s.is_empty() || s.iter().any(|x| !(*x >= 0.0)) || s.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config("noise_sigma_rel must be non-negative and strictly ascending".into()));
            }
        }
        if self.noise_dt.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::Config("noise_dt must be > 0".into()));
        }
        if self.horizon.is_some_and(|h| !(h > 0.0)) {
            return Err(Error::Config("horizon must be > 0".into()));
        }
        if self.lambdas.as_ref().is_some_and(|l| l.iter().any(|x| !(*x >= 0.0))) {
            return Err(Error::Config("lambdas must be >= 0".into()));
        }
        if self.spins2.as_ref().is_some_and(|s| s.contains(&0)) {
            return Err(Error::Config("spins2 entries must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
