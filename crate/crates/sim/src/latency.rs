use std::fmt;
use std::str::FromStr;

use rail_core::protocol::DelayModel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, LogNormal};

use crate::scenario::ScenarioError;

/// A non-negative delay distribution, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    Constant(f64),
    Uniform {
        low: f64,
        high: f64,
    },
    /// `exp(N(mu, sigma²))`.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
}

impl Default for Delay {
    fn default() -> Self {
        Delay::Constant(0.0)
    }
}

impl Delay {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let x = match *self {
            Delay::Constant(c) => c,
            Delay::Uniform { low, high } if low == high => low,
            Delay::Uniform { low, high } => rng.random_range(low..high),
            Delay::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).map(|d| d.sample(rng)).unwrap_or(0.0),
        };
        x.max(0.0)
    }

    /// Largest value the distribution can produce, if bounded.
    pub fn upper_bound(&self) -> Option<f64> {
        match *self {
            Delay::Constant(c) => Some(c),
            Delay::Uniform { high, .. } => Some(high),
            Delay::LogNormal { .. } => None,
        }
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delay::Constant(c) => write!(f, "{c}"),
            Delay::Uniform { low, high } => write!(f, "uniform({low},{high})"),
            Delay::LogNormal { mu, sigma } => write!(f, "lognormal({mu},{sigma})"),
        }
    }
}

impl FromStr for Delay {
    type Err = ScenarioError;

    /// `0.2`, `constant(0.2)`, `uniform(0.1,0.3)` or `lognormal(-1.6,0.3)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| ScenarioError::Value { key: "delay".into(), value: s.into(), reason: why.into() };
        let s = s.trim();
        let (name, args) = match s.split_once('(') {
            Some((name, rest)) => {
                let inner = rest.strip_suffix(')').ok_or_else(|| bad("missing ')'"))?;
                let args = inner
                    .split(',')
                    .map(|a| a.trim().parse::<f64>().map_err(|_| bad("argument is not a number")))
                    .collect::<Result<Vec<_>, _>>()?;
                (name.trim(), args)
            }
            None => ("constant", vec![s.parse::<f64>().map_err(|_| bad("not a number or distribution"))?]),
        };
        if args.iter().any(|a| !a.is_finite()) {
            return Err(bad("arguments must be finite"));
        }
        let delay = match (name, args.as_slice()) {
            ("constant", &[c]) if c >= 0.0 => Delay::Constant(c),
            ("uniform", &[low, high]) if 0.0 <= low && low <= high => Delay::Uniform { low, high },
            ("lognormal", &[mu, sigma]) if sigma >= 0.0 => Delay::LogNormal { mu, sigma },
            ("constant" | "uniform" | "lognormal", _) => return Err(bad("wrong arguments")),
            _ => return Err(bad("unknown distribution")),
        };
        Ok(delay)
    }
}

/// The four delay sources of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatencyModel {
    /// Policy inference time on the server.
    pub inference: Delay,
    /// Client-side trajectory post-processing budget.
    pub post: Delay,
    /// Sensor delay baked into each observation; the client never sees it.
    pub sensor: Delay,
    /// One-way network delay.
    pub transport: Delay,
}

/// A seeded [`Delay`] as a server-side inference delay.
#[derive(Debug, Clone)]
pub struct SampledDelay {
    delay: Delay,
    rng: ChaCha8Rng,
}

impl SampledDelay {
    pub fn new(delay: Delay, rng: ChaCha8Rng) -> Self {
        Self { delay, rng }
    }
}

impl DelayModel for SampledDelay {
    fn sample_seconds(&mut self) -> f64 {
        self.delay.sample(&mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn parses_forms() {
        assert_eq!("0.2".parse::<Delay>().unwrap(), Delay::Constant(0.2));
        assert_eq!("constant(0)".parse::<Delay>().unwrap(), Delay::Constant(0.0));
        assert_eq!("uniform(0.1, 0.3)".parse::<Delay>().unwrap(), Delay::Uniform { low: 0.1, high: 0.3 });
        assert_eq!("lognormal(-2,0.5)".parse::<Delay>().unwrap(), Delay::LogNormal { mu: -2.0, sigma: 0.5 });
        for bad in ["-1", "uniform(0.3,0.1)", "gauss(1)", "uniform(1)", "uniform(0,1", "nan"] {
            assert!(bad.parse::<Delay>().is_err(), "{bad}");
        }
    }

    #[test]
    fn samples_in_range_and_seeded() {
        let d = Delay::Uniform { low: 0.1, high: 0.3 };
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x = d.sample(&mut a);
            assert!((0.1..0.3).contains(&x));
            assert_eq!(x, d.sample(&mut b));
        }
        let ln = Delay::LogNormal { mu: -2.0, sigma: 1.0 };
        assert!((0..1000).all(|_| ln.sample(&mut a) >= 0.0));
    }
}
