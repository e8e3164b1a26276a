use super::{check_interval, poly_eval, Evaluate, Order, TrajectoryError};

/// Which half of a dual-quintic blend a segment is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Fifth-order polynomial per dimension in `σ = (t - origin) / duration`,
/// `σ ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuinticSegment {
    coeffs: Vec<[f64; 6]>,
    origin: f64,
    duration: f64,
    start: f64,
    end: f64,
    side: Side,
}

impl QuinticSegment {
    pub fn new(coeffs: Vec<[f64; 6]>, origin: f64, duration: f64, side: Side) -> Result<Self, TrajectoryError> {
        let end = origin + duration;
        check_interval(origin, end)?;
        if coeffs.is_empty() {
            return Err(TrajectoryError::Argument("quintic needs at least one channel".into()));
        }
        if coeffs.iter().flatten().any(|c| !c.is_finite()) {
            return Err(TrajectoryError::Argument("non-finite quintic coefficient".into()));
        }
        Ok(Self { coeffs, origin, duration, start: origin, end, side })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn coeffs(&self) -> &[[f64; 6]] {
        &self.coeffs
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

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
}

impl Evaluate for QuinticSegment {
    fn dims(&self) -> usize {
        self.coeffs.len()
    }

    fn domain(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    fn evaluate_unchecked(&self, t: f64, order: Order, out: &mut [f64]) {
        let s = (t - self.origin) / self.duration;
        let rescale = match order {
            Order::Position => 1.0,
            Order::Velocity => 1.0 / self.duration,
            Order::Acceleration => 1.0 / (self.duration * self.duration),
        };
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o = poly_eval(c, s, order) * rescale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_rescaling() {
        // σ⁵ over a 0.5 s window: at σ = 1, x' = 5/0.5, x'' = 20/0.25
        let q = QuinticSegment::new(vec![[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]], 1.0, 0.5, Side::Left).unwrap();
        assert_eq!(q.evaluate(1.5, Order::Position).unwrap(), vec![1.0]);
        assert_eq!(q.evaluate(1.5, Order::Velocity).unwrap(), vec![10.0]);
        assert_eq!(q.evaluate(1.5, Order::Acceleration).unwrap(), vec![80.0]);
        assert!(q.evaluate(1.6, Order::Position).is_err());
    }

    #[test]
    fn rejects_bad_window() {
        assert!(QuinticSegment::new(vec![[0.0; 6]], 0.0, 0.0, Side::Right).is_err());
        assert!(QuinticSegment::new(vec![], 0.0, 1.0, Side::Right).is_err());
    }
}
