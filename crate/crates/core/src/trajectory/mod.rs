//! Time-parameterized trajectories shared by the smoother, the fuser and the
//! runtime.
//!
//! All pieces store their coefficients in a normalized local time and rescale
//! derivatives at evaluation, so callers always see physical units (rad,
//! rad/s, rad/s²). Knot times belong to the right-hand segment.

mod chunk;
mod composite;
mod polynomial;
mod quintic;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use chunk::ActionChunk;
pub use composite::{CompositeTrajectory, KnotMismatch, Piece, Segment, SegmentKind};
pub use polynomial::{Channel, PolynomialTrajectory};
pub use quintic::{QuinticSegment, Side};

/// Seconds on a single monotonic clock.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Timestamp(f64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0.0);

    pub fn from_secs(secs: f64) -> Self {
        Timestamp(secs)
    }

    pub fn secs(self) -> f64 {
        self.0
    }
}

impl std::ops::Sub for Timestamp {
    type Output = f64;
    fn sub(self, rhs: Timestamp) -> f64 {
        self.0 - rhs.0
    }
}

impl std::ops::Add<f64> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: f64) -> Timestamp {
        Timestamp(self.0 + rhs)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

/// Derivative order requested from [`Evaluate::evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Position = 0,
    Velocity = 1,
    Acceleration = 2,
}

impl Order {
    pub const ALL: [Order; 3] = [Order::Position, Order::Velocity, Order::Acceleration];
}

impl TryFrom<u8> for Order {
    type Error = TrajectoryError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Order::Position),
            1 => Ok(Order::Velocity),
            2 => Ok(Order::Acceleration),
            other => Err(TrajectoryError::Argument(format!("derivative order {other} not in 0..=2"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("time {t} outside trajectory domain [{start}, {end}]")]
    Domain { t: f64, start: f64, end: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Anything that can be sampled for position, velocity and acceleration.
pub trait Evaluate {
    /// Number of channels (action dimensions).
    fn dims(&self) -> usize;

    /// Inclusive time domain `(start, end)`.
    fn domain(&self) -> (f64, f64);

    /// Evaluates without a domain check. Pieces inside a composite are
    /// queried through this so that round-off in time offsets never trips
    /// the domain guard.
    fn evaluate_unchecked(&self, t: f64, order: Order, out: &mut [f64]);

    fn evaluate(&self, t: f64, order: Order) -> Result<Vec<f64>, TrajectoryError> {
        self.check_domain(t)?;
        let mut out = vec![0.0; self.dims()];
        self.evaluate_unchecked(t, order, &mut out);
        Ok(out)
    }

    fn check_domain(&self, t: f64) -> Result<(), TrajectoryError> {
        let (start, end) = self.domain();
        if t.is_finite() && t >= start && t <= end {
            Ok(())
        } else {
            Err(TrajectoryError::Domain { t, start, end })
        }
    }
}

/// Any trajectory the runtime can hold as "current".
#[derive(Debug, Clone)]
pub enum Trajectory {
    Polynomial(Arc<PolynomialTrajectory>),
    Quintic(Arc<QuinticSegment>),
    Composite(CompositeTrajectory),
}

impl Trajectory {
    /// Restricts to `[start, end]`; evaluation inside is bit-identical.
    pub fn clip_domain(&self, start: f64, end: f64) -> Result<Trajectory, TrajectoryError> {
        Ok(match self {
            Trajectory::Polynomial(p) => Trajectory::Polynomial(Arc::new(p.clip_domain(start, end)?)),
            Trajectory::Quintic(q) => Trajectory::Quintic(Arc::new(q.clip_domain(start, end)?)),
            Trajectory::Composite(c) => Trajectory::Composite(c.clip_domain(start, end)?),
        })
    }

    /// Flattens into composite segments (a single segment for plain pieces).
    pub fn to_segments(&self) -> Vec<Segment> {
        match self {
            Trajectory::Polynomial(p) => {
                let (s, e) = p.domain();
                vec![Segment::new(s, e, Piece::Polynomial(p.clone()), 0.0, SegmentKind::Fitted)]
            }
            Trajectory::Quintic(q) => {
                let (s, e) = q.domain();
                let kind = match q.side() {
                    Side::Left => SegmentKind::BlendLeft,
                    Side::Right => SegmentKind::BlendRight,
                };
                vec![Segment::new(s, e, Piece::Quintic(q.clone()), 0.0, kind)]
            }
            Trajectory::Composite(c) => c.segments().to_vec(),
        }
    }

    /// Kind of the piece active at `t` (right-hand at knots).
    pub fn kind_at(&self, t: f64) -> SegmentKind {
        match self {
            Trajectory::Polynomial(_) => SegmentKind::Fitted,
            Trajectory::Quintic(q) => match q.side() {
                Side::Left => SegmentKind::BlendLeft,
                Side::Right => SegmentKind::BlendRight,
            },
            Trajectory::Composite(c) => c.kind_at(t),
        }
    }
}

impl From<PolynomialTrajectory> for Trajectory {
    fn from(p: PolynomialTrajectory) -> Self {
        Trajectory::Polynomial(Arc::new(p))
    }
}

impl From<CompositeTrajectory> for Trajectory {
    fn from(c: CompositeTrajectory) -> Self {
        Trajectory::Composite(c)
    }
}

impl Evaluate for Trajectory {
    fn dims(&self) -> usize {
        match self {
            Trajectory::Polynomial(p) => p.dims(),
            Trajectory::Quintic(q) => q.dims(),
            Trajectory::Composite(c) => c.dims(),
        }
    }

    fn domain(&self) -> (f64, f64) {
        match self {
            Trajectory::Polynomial(p) => p.domain(),
            Trajectory::Quintic(q) => q.domain(),
            Trajectory::Composite(c) => c.domain(),
        }
    }

    fn evaluate_unchecked(&self, t: f64, order: Order, out: &mut [f64]) {
        match self {
            Trajectory::Polynomial(p) => p.evaluate_unchecked(t, order, out),
            Trajectory::Quintic(q) => q.evaluate_unchecked(t, order, out),
            Trajectory::Composite(c) => c.evaluate_unchecked(t, order, out),
        }
    }
}

pub(crate) fn check_interval(start: f64, end: f64) -> Result<(), TrajectoryError> {
    if !(start.is_finite() && end.is_finite()) {
        return Err(TrajectoryError::Argument(format!("non-finite interval [{start}, {end}]")));
    }
    if end <= start {
        return Err(TrajectoryError::Argument(format!("empty or inverted interval [{start}, {end}]")));
    }
    Ok(())
}

/// Horner evaluation of `Σ c_i u^i` and its first two derivatives in `u`.
pub(crate) fn poly_eval(coeffs: &[f64], u: f64, order: Order) -> f64 {
    match order {
        Order::Position => coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c),
        Order::Velocity => coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, &c)| acc * u + i as f64 * c),
        Order::Acceleration => {
            coeffs.iter().enumerate().skip(2).rev().fold(0.0, |acc, (i, &c)| acc * u + (i * (i - 1)) as f64 * c)
        }
    }
}
