use std::collections::BTreeSet;
use std::path::Path;

use rail_core::runtime::{ConfigError, LinkerConfig, Strategy};
use thiserror::Error;

use crate::latency::{Delay, LatencyModel};
use crate::policy::{PolicyConfig, Wave};
use crate::robot::RobotModel;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("bad value {value:?} for {key}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error(transparent)]
    Linker(#[from] ConfigError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Everything needed to reproduce one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Wall (virtual) seconds to simulate.
    pub duration: f64,
    pub seed: u64,
    pub linker: LinkerConfig,
    pub policy: PolicyConfig,
    pub latency: LatencyModel,
    pub robot: RobotModel,
    /// Robot pose at start; defaults to the reference at time zero.
    pub initial: Option<Vec<f64>>,
    pub instruction: String,
}

impl Default for Scenario {
    /// One channel following `0.5 sin(0.4πt)` with 0.01 noise, 30-row chunks
    /// at 30 Hz, inference latency uniform in [0.1, 0.3] s, 100 Hz control.
    fn default() -> Self {
        Self {
            duration: 20.0,
            seed: 0,
            linker: LinkerConfig::default(),
            policy: PolicyConfig::default(),
            latency: LatencyModel { inference: Delay::Uniform { low: 0.1, high: 0.3 }, ..Default::default() },
            robot: RobotModel::Ideal,
            initial: None,
            instruction: "follow the reference".into(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "duration",
    "seed",
    "strategy",
    "dims",
    "horizon",
    "f_act",
    "f_ctrl",
    "f_interp",
    "f_obs",
    "f_infer",
    "degree",
    "t_w",
    "t_q",
    "grid_step",
    "discrete_channels",
    "max_fit_condition",
    "max_blend_condition",
    "request_timeout",
    "max_retries",
    "amplitude",
    "frequency",
    "phase",
    "offset",
    "noise",
    "motion_duration",
    "latency.inference",
    "latency.post",
    "latency.sensor",
    "latency.transport",
    "robot",
    "robot.tau",
    "initial",
    "instruction",
];

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines on top of [`Scenario::default`].
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut pairs = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ScenarioError::Syntax {
                line,
                reason: format!("expected `key = value`, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ScenarioError::UnknownKey { line, key: key.into() });
            }
            if !seen.insert(key.to_owned()) {
                return Err(ScenarioError::Duplicate { line, key: key.into() });
            }
            pairs.push((key.to_owned(), value.to_owned()));
        }
        let mut s = Scenario::default();
        // dims first so per-channel lists can be broadcast against it
        if let Some((_, v)) = pairs.iter().find(|(k, _)| k == "dims") {
            s.policy.set_dims(num("dims", v)?);
        }
        for (key, value) in &pairs {
            s.set(key, value)?;
        }
        s.validate()?;
        Ok(s)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), ScenarioError> {
        let dims = self.policy.dims;
        let cfg = &mut self.linker;
        match key {
            "duration" => self.duration = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "strategy" => cfg.strategy = v.parse::<Strategy>()?,
            "dims" => {}
            "horizon" => self.policy.horizon = num(key, v)?,
            "f_act" => self.policy.f_act = num(key, v)?,
            "f_ctrl" => cfg.f_ctrl = num(key, v)?,
            "f_interp" => cfg.f_interp = num(key, v)?,
            "f_obs" => cfg.f_obs = num(key, v)?,
            "f_infer" => cfg.f_infer = num(key, v)?,
            "degree" => cfg.degree = num(key, v)?,
            "t_w" => cfg.t_w = optional(key, v)?,
            "t_q" => cfg.t_q = num(key, v)?,
            "grid_step" => cfg.grid_step = optional(key, v)?,
            "discrete_channels" => {
                cfg.discrete_channels = if v.is_empty() || v == "none" {
                    BTreeSet::new()
                } else {
                    list::<usize>(key, v)?.into_iter().collect()
                }
            }
            "max_fit_condition" => cfg.max_fit_condition = num(key, v)?,
            "max_blend_condition" => cfg.max_blend_condition = num(key, v)?,
            "request_timeout" => cfg.request_timeout = num(key, v)?,
            "max_retries" => cfg.max_retries = num(key, v)?,
            "amplitude" | "frequency" | "phase" | "offset" => {
                let values = broadcast(key, list::<f64>(key, v)?, dims)?;
                for (wave, x) in self.policy.waves.iter_mut().zip(values) {
                    match key {
                        "amplitude" => wave.amplitude = x,
                        "frequency" => wave.frequency = x,
                        "phase" => wave.phase = x,
                        _ => wave.offset = x,
                    }
                }
            }
            "noise" => self.policy.noise = broadcast(key, list(key, v)?, dims)?,
            "motion_duration" => self.policy.motion_duration = optional(key, v)?,
            "latency.inference" => self.latency.inference = delay(key, v)?,
            "latency.post" => self.latency.post = delay(key, v)?,
            "latency.sensor" => self.latency.sensor = delay(key, v)?,
            "latency.transport" => self.latency.transport = delay(key, v)?,
            "robot" => {
                self.robot = match v {
                    "ideal" => RobotModel::Ideal,
                    "lag" => RobotModel::Lag { tau: self.robot.tau().unwrap_or(0.05) },
                    _ => return Err(value_err(key, v, "expected ideal or lag")),
                }
            }
            "robot.tau" => {
                let tau: f64 = num(key, v)?;
                if let RobotModel::Lag { tau: t } = &mut self.robot {
                    *t = tau;
                } else {
                    self.robot = RobotModel::Lag { tau };
                }
            }
            "initial" => self.initial = Some(broadcast(key, list(key, v)?, dims)?),
            "instruction" => self.instruction = v.trim_matches('"').to_owned(),
            _ => unreachable!("key list checked by the caller"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.linker.validate()?;
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return invalid(format!("duration {} must be positive", self.duration));
        }
        let p = &self.policy;
        if p.dims == 0 || p.dims > u16::MAX as usize {
            return invalid(format!("dims {} outside 1..=65535", p.dims));
        }
        if p.horizon < 2 || p.horizon > u16::MAX as usize {
            return invalid(format!("horizon {} outside 2..=65535", p.horizon));
        }
        if !(p.f_act.is_finite() && p.f_act > 0.0) {
            return invalid(format!("f_act {} must be positive", p.f_act));
        }
        if p.waves.len() != p.dims || p.noise.len() != p.dims {
            return invalid("generator and noise must have one entry per channel".into());
        }
        if p.noise.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return invalid("noise amplitudes must be finite and non-negative".into());
        }
        if p.waves.iter().any(|w| !w.is_finite()) {
            return invalid("generator parameters must be finite".into());
        }
        if let Some(m) = p.motion_duration {
            if !(m.is_finite() && m > 0.0) {
                return invalid(format!("motion_duration {m} must be positive"));
            }
        }
        if let Some(&c) = self.linker.discrete_channels.iter().find(|&&c| c >= p.dims) {
            return invalid(format!("discrete channel {c} out of range for {} dims", p.dims));
        }
        if let Some(init) = &self.initial {
            if init.len() != p.dims || init.iter().any(|x| !x.is_finite()) {
                return invalid("initial must hold one finite value per channel".into());
            }
        }
        if let RobotModel::Lag { tau } = self.robot {
            if !(tau.is_finite() && tau > 0.0) {
                return invalid(format!("robot.tau {tau} must be positive"));
            }
        }
        for (name, f) in [
            ("f_ctrl", self.linker.f_ctrl),
            ("f_interp", self.linker.f_interp),
            ("f_obs", self.linker.f_obs),
            ("f_infer", self.linker.f_infer),
        ] {
            if f.fract() != 0.0 || f > 1e6 {
                return invalid(format!("{name} = {f} must be a whole number of Hz for the virtual clock"));
            }
        }
        Ok(())
    }

    /// Scenario with a different strategy; everything else, seed included, unchanged.
    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.linker.strategy = strategy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn initial_position(&self) -> Vec<f64> {
        self.initial.clone().unwrap_or_else(|| self.policy.reference(0.0))
    }
}

fn value_err(key: &str, value: &str, reason: &str) -> ScenarioError {
    ScenarioError::Value { key: key.into(), value: value.into(), reason: reason.into() }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ScenarioError> {
    v.parse().map_err(|_| value_err(key, v, "not a valid number"))
}

fn optional(key: &str, v: &str) -> Result<Option<f64>, ScenarioError> {
    if v == "auto" || v == "none" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ScenarioError> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn broadcast(key: &str, values: Vec<f64>, dims: usize) -> Result<Vec<f64>, ScenarioError> {
    match values.len() {
        1 => Ok(vec![values[0]; dims]),
        n if n == dims => Ok(values),
        n => Err(value_err(key, &format!("{n} values"), &format!("expected 1 or {dims} values"))),
    }
}

fn delay(key: &str, v: &str) -> Result<Delay, ScenarioError> {
    v.parse().map_err(|_| value_err(key, v, "expected a number, uniform(a,b) or lognormal(mu,sigma)"))
}

impl Wave {
    fn is_finite(&self) -> bool {
        [self.amplitude, self.frequency, self.phase, self.offset].iter().all(|x| x.is_finite())
    }
}
