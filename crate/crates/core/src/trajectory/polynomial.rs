use super::{check_interval, poly_eval, Evaluate, Order, TrajectoryError};

/// One action dimension of a [`PolynomialTrajectory`].
#[derive(Debug, Clone, PartialEq)]
pub enum Channel {
    /// Coefficients `c[0..=d]` in normalized local time `u`.
    Poly(Vec<f64>),
    /// Zero-order hold over samples spaced uniformly across
    /// `[origin, origin + scale]`; derivatives are zero.
    Hold(Vec<f64>),
}

impl Channel {
    pub fn is_hold(&self) -> bool {
        matches!(self, Channel::Hold(_))
    }
}

/// Per-dimension polynomial `Σ c_i u^i` with `u = (t - origin) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialTrajectory {
    channels: Vec<Channel>,
    degree: usize,
    origin: f64,
    scale: f64,
    start: f64,
    end: f64,
}

impl PolynomialTrajectory {
    /// Coefficients normalized over the domain itself (`origin = start`,
    /// `scale = end - start`).
    pub fn new(coeffs: Vec<Vec<f64>>, start: f64, end: f64) -> Result<Self, TrajectoryError> {
        Self::with_channels(coeffs.into_iter().map(Channel::Poly).collect(), start, end - start, start, end)
    }

    /// Coefficients in `u = (t - origin) / scale`, valid on `[start, end]`.
    pub fn with_scale(
        coeffs: Vec<Vec<f64>>,
        origin: f64,
        scale: f64,
        start: f64,
        end: f64,
    ) -> Result<Self, TrajectoryError> {
        Self::with_channels(coeffs.into_iter().map(Channel::Poly).collect(), origin, scale, start, end)
    }

    pub fn with_channels(
        channels: Vec<Channel>,
        origin: f64,
        scale: f64,
        start: f64,
        end: f64,
    ) -> Result<Self, TrajectoryError> {
        check_interval(start, end)?;
        if !(scale.is_finite() && scale > 0.0) || !origin.is_finite() {
            return Err(TrajectoryError::Argument(format!(
                "time normalization origin {origin}, scale {scale} is invalid"
            )));
        }
        if channels.is_empty() {
            return Err(TrajectoryError::Argument("trajectory needs at least one channel".into()));
        }
        let mut degree = None;
        for (i, ch) in channels.iter().enumerate() {
            let values = match ch {
                Channel::Poly(c) => {
                    match degree {
                        None => degree = Some(c.len().saturating_sub(1)),
                        Some(d) if d + 1 != c.len() => {
                            return Err(TrajectoryError::Argument(format!(
                                "channel {i} has {} coefficients, expected {}",
                                c.len(),
                                d + 1
                            )))
                        }
                        Some(_) => {}
                    }
                    c
                }
                Channel::Hold(v) => v,
            };
            if values.is_empty() {
                return Err(TrajectoryError::Argument(format!("channel {i} is empty")));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(TrajectoryError::Argument(format!("channel {i} has non-finite values")));
            }
        }
        Ok(Self { channels, degree: degree.unwrap_or(0), origin, scale, start, end })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Which channels are zero-order holds.
    pub fn hold_mask(&self) -> Vec<bool> {
        self.channels.iter().map(Channel::is_hold).collect()
    }

    /// Restricts the domain; coefficients and normalization are untouched, so
    /// evaluation inside the sub-interval is bit-identical.
    pub fn clip_domain(&self, start: f64, end: f64) -> Result<Self, TrajectoryError> {
        check_interval(start, end)?;
        if start < self.start || end > self.end {
            return Err(TrajectoryError::Argument(format!(
                "[{start}, {end}] is not inside [{}, {}]",
                self.start, self.end
            )));
        }
        Ok(Self { start, end, ..self.clone() })
    }

    fn hold_value(&self, values: &[f64], t: f64) -> f64 {
        let last = values.len() - 1;
        if last == 0 {
            return values[0];
        }
        let pos = (t - self.origin) / self.scale * last as f64;
        // tolerate round-off at exact sample instants
        let idx = (pos + 1e-9).floor();
        if idx <= 0.0 {
            values[0]
        } else {
            values[(idx as usize).min(last)]
        }
    }
}

impl Evaluate for PolynomialTrajectory {
    fn dims(&self) -> usize {
        self.channels.len()
    }

    fn domain(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    fn evaluate_unchecked(&self, t: f64, order: Order, out: &mut [f64]) {
        let u = (t - self.origin) / self.scale;
        let rescale = match order {
            Order::Position => 1.0,
            Order::Velocity => 1.0 / self.scale,
            Order::Acceleration => 1.0 / (self.scale * self.scale),
        };
        for (o, ch) in out.iter_mut().zip(&self.channels) {
            *o = match ch {
                Channel::Poly(c) => poly_eval(c, u, order) * rescale,
                Channel::Hold(v) => match order {
                    Order::Position => self.hold_value(v, t),
                    _ => 0.0,
                },
            };
        }
    }
}
