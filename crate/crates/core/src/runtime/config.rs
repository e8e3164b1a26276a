use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::fuser::DEFAULT_MAX_BLEND_CONDITION;
use crate::smoother::{DEFAULT_DEGREE, DEFAULT_MAX_CONDITION, MAX_DEGREE};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid linker config: {0}")]
pub struct ConfigError(pub String);

/// How incoming chunks are turned into executed motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Strategy {
    /// Raw waypoints, linearly interpolated, replaced on arrival.
    Raw,
    /// Per-chunk polynomial fit, aligned hard switch.
    Naive,
    /// Fit, align and dual-quintic blend.
    #[default]
    Rail,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Raw, Strategy::Naive, Strategy::Rail];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Raw => "raw",
            Strategy::Naive => "naive",
            Strategy::Rail => "rail",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Strategy::Raw),
            "naive" | "naive-switch" => Ok(Strategy::Naive),
            "rail" | "vla-rail" => Ok(Strategy::Rail),
            other => Err(ConfigError(format!("unknown strategy {other:?} (raw|naive|rail)"))),
        }
    }
}

/// Frequencies, windows and thresholds of the client executive.
///
/// All windows (`t_w`, `t_q`, `grid_step`) are in trajectory time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkerConfig {
    /// Control dispatch rate, Hz.
    pub f_ctrl: f64,
    /// Interpolation basis rate, Hz. `f_ctrl / f_interp` is the execution
    /// acceleration ratio.
    pub f_interp: f64,
    /// State acquisition rate, Hz.
    pub f_obs: f64,
    /// Cap on the inference request rate, Hz.
    pub f_infer: f64,
    pub degree: usize,
    /// Alignment search window; `None` means half a chunk, `H / (2 f_act)`.
    pub t_w: Option<f64>,
    /// Blend window.
    pub t_q: f64,
    /// Alignment grid step; `None` means one interpolation period.
    pub grid_step: Option<f64>,
    /// Channels executed as zero-order holds instead of being fitted.
    pub discrete_channels: BTreeSet<usize>,
    pub max_fit_condition: f64,
    pub max_blend_condition: f64,
    /// Per-request timeout, seconds.
    pub request_timeout: f64,
    /// Consecutive failed requests tolerated before inference is abandoned.
    pub max_retries: u32,
    pub strategy: Strategy,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        Self {
            f_ctrl: 100.0,
            f_interp: 100.0,
            f_obs: 30.0,
            f_infer: 5.0,
            degree: DEFAULT_DEGREE,
            t_w: None,
            t_q: 0.2,
            grid_step: None,
            discrete_channels: BTreeSet::new(),
            max_fit_condition: DEFAULT_MAX_CONDITION,
            max_blend_condition: DEFAULT_MAX_BLEND_CONDITION,
            request_timeout: 1.0,
            max_retries: 3,
            strategy: Strategy::Rail,
        }
    }
}

impl LinkerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError(format!("{name} = {v} must be positive")))
            }
        };
        positive("f_ctrl", self.f_ctrl)?;
        positive("f_interp", self.f_interp)?;
        positive("f_obs", self.f_obs)?;
        positive("f_infer", self.f_infer)?;
        positive("t_q", self.t_q)?;
        positive("request_timeout", self.request_timeout)?;
        positive("max_fit_condition", self.max_fit_condition)?;
        positive("max_blend_condition", self.max_blend_condition)?;
        if let Some(t_w) = self.t_w {
            positive("t_w", t_w)?;
        }
        if let Some(g) = self.grid_step {
            positive("grid_step", g)?;
        }
        if self.f_ctrl < self.f_interp {
            return Err(ConfigError(format!("f_ctrl ({}) must be at least f_interp ({})", self.f_ctrl, self.f_interp)));
        }
        if !(1..=MAX_DEGREE).contains(&self.degree) {
            return Err(ConfigError(format!("degree {} outside 1..={MAX_DEGREE}", self.degree)));
        }
        Ok(())
    }

    /// Execution acceleration ratio `α = f_ctrl / f_interp`.
    pub fn alpha(&self) -> f64 {
        self.f_ctrl / self.f_interp
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step.unwrap_or(1.0 / self.f_interp)
    }

    pub fn alignment_window(&self, horizon: usize, f_act: f64) -> f64 {
        self.t_w.unwrap_or(horizon as f64 / (2.0 * f_act))
    }

    /// Per-channel fit mask: false for discrete channels.
    pub fn fit_mask(&self, dims: usize) -> Vec<bool> {
        (0..dims).map(|i| !self.discrete_channels.contains(&i)).collect()
    }
}
