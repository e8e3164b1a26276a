use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::sync::Mutex;

use rail_core::protocol::Policy;
use rail_core::runtime::ObservationFrame;
use rail_core::{ActionChunk, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::latency::Delay;

/// `offset + amplitude · sin(2π · frequency · t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub amplitude: f64,
    /// Hz.
    pub frequency: f64,
    /// Radians.
    pub phase: f64,
    pub offset: f64,
}

impl Wave {
    pub fn value(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (TAU * self.frequency * t + self.phase).sin()
    }

    /// Square wave between `offset` and `offset + amplitude`, for discrete
    /// channels such as a gripper.
    pub fn step(&self, t: f64) -> f64 {
        let s = (TAU * self.frequency * t + self.phase).sin();
        self.offset + if s >= 0.0 { self.amplitude } else { 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub dims: usize,
    /// Rows per chunk.
    pub horizon: usize,
    /// Row rate, Hz.
    pub f_act: f64,
    pub waves: Vec<Wave>,
    /// Per-channel noise amplitude; each value is perturbed by a uniform
    /// draw from `[-noise, noise]`.
    pub noise: Vec<f64>,
    /// The reference ends here (trajectory time); chunks are cut off at it.
    pub motion_duration: Option<f64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            dims: 1,
            horizon: 30,
            f_act: 30.0,
            waves: vec![Wave { amplitude: 0.5, frequency: 0.2, phase: 0.0, offset: 0.0 }],
            noise: vec![0.01],
            motion_duration: None,
        }
    }
}

impl PolicyConfig {
    /// Resizes the per-channel lists, repeating the first entry.
    pub fn set_dims(&mut self, dims: usize) {
        self.dims = dims;
        let wave = self.waves[0];
        let noise = self.noise[0];
        self.waves.resize(dims, wave);
        self.noise.resize(dims, noise);
    }

    /// Noise-free continuous reference at trajectory time `t`.
    pub fn reference(&self, t: f64) -> Vec<f64> {
        self.waves.iter().map(|w| w.value(t)).collect()
    }
}

/// Stand-in for a learned policy: chunks sampled from the reference at the
/// observation time, plus noise, so consecutive chunks disagree slightly.
#[derive(Debug, Clone)]
pub struct SyntheticPolicy {
    config: PolicyConfig,
    discrete: BTreeSet<usize>,
    /// Maps observation timestamps onto reference time.
    time_scale: f64,
    sensor: Delay,
    noise_rng: ChaCha8Rng,
    sensor_rng: ChaCha8Rng,
}

impl SyntheticPolicy {
    pub fn new(config: PolicyConfig, discrete: BTreeSet<usize>, time_scale: f64, sensor: Delay, seed: u64) -> Self {
        Self { config, discrete, time_scale, sensor, noise_rng: stream(seed, 1), sensor_rng: stream(seed, 2) }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    /// Clean value of channel `i` at reference time `t`.
    pub fn target(&self, i: usize, t: f64) -> f64 {
        let w = &self.config.waves[i];
        if self.discrete.contains(&i) {
            w.step(t)
        } else {
            w.value(t)
        }
    }

    /// Produces the chunk for `obs`. The observation is treated as if it
    /// were taken a hidden sensor delay before its timestamp.
    pub fn infer(&mut self, obs: &ObservationFrame) -> Result<ActionChunk, String> {
        let sensor_delay = self.sensor.sample(&mut self.sensor_rng);
        let (horizon, f_act, dims) = (self.config.horizon, self.config.f_act, self.config.dims);
        let phase = self.time_scale * (obs.timestamp.secs() - sensor_delay);
        let end = self.config.motion_duration.unwrap_or(f64::INFINITY);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(horizon);
        for t in (0..horizon).map(|k| phase + k as f64 / f_act).take_while(|&t| t <= end + 1e-9) {
            let mut row = Vec::with_capacity(dims);
            for i in 0..dims {
                let clean = self.target(i, t);
                let a = self.config.noise[i];
                row.push(if a > 0.0 && !self.discrete.contains(&i) {
                    clean + self.noise_rng.random_range(-a..=a)
                } else {
                    clean
                });
            }
            rows.push(row);
        }
        if rows.len() < 2 {
            return Err("reference motion complete".into());
        }
        ActionChunk::new(Timestamp::from_secs(obs.timestamp.secs()), f_act, rows).map_err(|e| e.to_string())
    }
}

/// Independent, reproducible random stream `index` of `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Thread-safe wrapper for serving a [`SyntheticPolicy`] over the network.
#[derive(Debug)]
pub struct SharedPolicy(pub Mutex<SyntheticPolicy>);

impl Policy for SharedPolicy {
    fn infer(&self, obs: &ObservationFrame) -> Result<ActionChunk, String> {
        self.0.lock().unwrap_or_else(|p| p.into_inner()).infer(obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: f64) -> ObservationFrame {
        ObservationFrame::new(Timestamp::from_secs(t), vec![0.0])
    }

    #[test]
    fn noise_free_chunk_samples_reference() {
        let cfg = PolicyConfig { noise: vec![0.0], ..Default::default() };
        let mut p = SyntheticPolicy::new(cfg.clone(), BTreeSet::new(), 1.0, Delay::Constant(0.0), 0);
        let c = p.infer(&frame(1.0)).unwrap();
        assert_eq!((c.len(), c.dims()), (30, 1));
        for k in 0..30 {
            let t = 1.0 + k as f64 / 30.0;
            assert_eq!(c.row(k)[0], 0.5 * (0.4 * std::f64::consts::PI * t).sin());
        }
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        let cfg = PolicyConfig::default();
        let mut a = SyntheticPolicy::new(cfg.clone(), BTreeSet::new(), 1.0, Delay::Constant(0.0), 3);
        let mut b = SyntheticPolicy::new(cfg.clone(), BTreeSet::new(), 1.0, Delay::Constant(0.0), 3);
        let (ca, cb) = (a.infer(&frame(0.5)).unwrap(), b.infer(&frame(0.5)).unwrap());
        assert_eq!(ca, cb);
        for k in 0..ca.len() {
            let clean = cfg.reference(0.5 + k as f64 / 30.0)[0];
            assert!((ca.row(k)[0] - clean).abs() <= 0.01);
        }
    }

    #[test]
    fn sensor_delay_and_time_scale_shift_phase() {
        let cfg = PolicyConfig { noise: vec![0.0], ..Default::default() };
        let mut p = SyntheticPolicy::new(cfg.clone(), BTreeSet::new(), 2.0, Delay::Constant(0.1), 0);
        let c = p.infer(&frame(1.0)).unwrap();
        assert_eq!(c.row(0)[0], cfg.reference(1.8)[0]);
        assert_eq!(c.obs_time().secs(), 1.0);
    }

    #[test]
    fn motion_end_truncates() {
        let cfg = PolicyConfig { noise: vec![0.0], motion_duration: Some(2.0), ..Default::default() };
        let mut p = SyntheticPolicy::new(cfg, BTreeSet::new(), 1.0, Delay::Constant(0.0), 0);
        assert_eq!(p.infer(&frame(1.5)).unwrap().len(), 16);
        assert!(p.infer(&frame(1.99)).is_err());
    }

    #[test]
    fn discrete_channels_step_without_noise() {
        let cfg = PolicyConfig {
            dims: 2,
            waves: vec![Wave { amplitude: 0.5, frequency: 0.2, phase: 0.0, offset: 0.0 }; 2],
            noise: vec![0.05, 0.05],
            ..Default::default()
        };
        let mut p = SyntheticPolicy::new(cfg, BTreeSet::from([1]), 1.0, Delay::Constant(0.0), 0);
        let c = p.infer(&frame(2.0)).unwrap();
        assert!(c.channel(1).all(|v| v == 0.0 || v == 0.5));
        assert_eq!(c.row(0)[1], 0.5);
        assert_eq!(c.row(29)[1], 0.0);
    }
}
