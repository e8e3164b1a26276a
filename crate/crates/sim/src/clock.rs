use crate::scenario::ScenarioError;

/// Integer-tick virtual time. The base rate is a common multiple of every
/// scheduled frequency and of 1 kHz, so all cadences land on exact ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VirtualClock {
    rate: u64,
}

const MIN_RATE: u64 = 1000;
const MAX_RATE: u64 = 1 << 40;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl VirtualClock {
    /// Clock whose base rate is divisible by each of `rates` (whole Hz).
    pub fn for_rates(rates: &[f64]) -> Result<Self, ScenarioError> {
        let mut rate = MIN_RATE;
        for &f in rates {
            if !(f >= 1.0 && f.fract() == 0.0) {
                return Err(ScenarioError::Invalid(format!("rate {f} Hz is not a positive whole number")));
            }
            let f = f as u64;
            rate = rate / gcd(rate, f) * f;
            if rate > MAX_RATE {
                return Err(ScenarioError::Invalid("rates have no practical common multiple".into()));
            }
        }
        Ok(Self { rate })
    }

    /// Base ticks per second.
    pub fn rate(&self) -> u64 {
        self.rate
    }

    /// Ticks between events at `f` Hz; `f` must divide the base rate.
    pub fn period(&self, f: f64) -> u64 {
        self.rate / f as u64
    }

    pub fn seconds(&self, tick: u64) -> f64 {
        tick as f64 / self.rate as f64
    }

    /// Tick nearest to `seconds`.
    pub fn tick_at(&self, seconds: f64) -> u64 {
        (seconds * self.rate as f64).round() as u64
    }

    /// A delay in whole ticks, rounded up; anything that takes time takes
    /// at least one tick.
    pub fn delay_ticks(&self, seconds: f64) -> u64 {
        ((seconds * self.rate as f64 - 1e-6).ceil() as u64).max(1)
    }
}
