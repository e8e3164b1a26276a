//! Inter-chunk fusion: latency-compensated indexing, temporal alignment of
//! an incoming trajectory, the dual-quintic blend and composite assembly.
//!
//! Time conventions: `t_s` is a time on the current trajectory's clock.
//! Offsets into the incoming trajectory (`t_a`, `t_a + t_q`, the alignment
//! window) are measured from the incoming trajectory's domain start.

use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::linalg::{condition_number, Lu, Matrix};
use crate::trajectory::{
    CompositeTrajectory, Evaluate, Order, Piece, PolynomialTrajectory, QuinticSegment, Segment, SegmentKind, Side,
    Timestamp, Trajectory, TrajectoryError,
};

/// Default ceiling on the equilibrated condition number of a blend system.
pub const DEFAULT_MAX_BLEND_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuseError {
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("clock skew: now {now} precedes observation {obs}")]
    ClockSkew { now: f64, obs: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("incoming trajectory too short: needs {needed:.6}s past its start, has {available:.6}s")]
    ChunkTooShort { needed: f64, available: f64 },
    #[error("blend system ill-conditioned (condition {condition:.3e} > {threshold:.1e})")]
    IllConditioned { condition: f64, threshold: f64 },
}

/// Number of control periods elapsed since the observation:
/// `⌊(t_now - t_obs) · f_ctrl⌋`.
pub fn stale_index(t_now: Timestamp, t_obs: Timestamp, f_ctrl: f64) -> Result<usize, FuseError> {
    let elapsed = t_now - t_obs;
    if elapsed < 0.0 {
        return Err(FuseError::ClockSkew { now: t_now.secs(), obs: t_obs.secs() });
    }
    if !(f_ctrl.is_finite() && f_ctrl > 0.0) {
        return Err(FuseError::Argument(format!("control rate {f_ctrl} must be > 0")));
    }
    // absorb representation error of tick-aligned times (0.29 * 100 = 28.999...)
    Ok((elapsed * f_ctrl + 1e-9).floor() as usize)
}

/// Position, velocity and acceleration of every channel at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
}

impl BoundaryState {
    pub fn at_rest(position: Vec<f64>) -> Self {
        let n = position.len();
        Self { position, velocity: vec![0.0; n], acceleration: vec![0.0; n] }
    }

    pub fn dims(&self) -> usize {
        self.position.len()
    }

    fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.velocity).chain(&self.acceleration).all(|v| v.is_finite())
    }
}

/// Analytic order-0/1/2 evaluation bundled. Zero-order-hold channels report
/// zero velocity and acceleration.
pub fn boundary_state<T: Evaluate + ?Sized>(traj: &T, t: f64) -> Result<BoundaryState, FuseError> {
    Ok(BoundaryState {
        position: traj.evaluate(t, Order::Position)?,
        velocity: traj.evaluate(t, Order::Velocity)?,
        acceleration: traj.evaluate(t, Order::Acceleration)?,
    })
}

/// Blend timing: switch at `t_s`, resume the incoming trajectory `t_a`
/// into its domain, blend over `t_q`, alignment searched inside `(0, t_w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendSpec {
    pub t_s: f64,
    pub t_a: f64,
    pub t_q: f64,
    pub t_w: f64,
}

impl BlendSpec {
    pub fn validate(&self) -> Result<(), FuseError> {
        let BlendSpec { t_s, t_a, t_q, t_w } = *self;
        if ![t_s, t_a, t_q, t_w].iter().all(|v| v.is_finite()) {
            return Err(FuseError::Argument("non-finite blend parameter".into()));
        }
        if !(t_a > 0.0 && t_a < t_w) {
            return Err(FuseError::Argument(format!("alignment offset {t_a} outside (0, {t_w})")));
        }
        if t_q <= 0.0 {
            return Err(FuseError::Argument(format!("blend window {t_q} must be > 0")));
        }
        Ok(())
    }
}

fn sign(x: f64) -> i64 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// Motion-consistency score of resuming the incoming trajectory at local
/// offset `t_a`: `Σ_i sign((incoming(t_a) - current(t_s)) · current'(t_s))`.
pub fn alignment_objective<C, I>(current: &C, incoming: &I, t_s: f64, t_a: f64) -> Result<i64, FuseError>
where
    C: Evaluate + ?Sized,
    I: Evaluate + ?Sized,
{
    let pos = current.evaluate(t_s, Order::Position)?;
    let vel = current.evaluate(t_s, Order::Velocity)?;
    let inc = incoming.evaluate(incoming.domain().0 + t_a, Order::Position)?;
    Ok(score(&pos, &vel, &inc))
}

fn score(pos: &[f64], vel: &[f64], inc: &[f64]) -> i64 {
    inc.iter().zip(pos).zip(vel).map(|((a, p), v)| sign((a - p) * v)).sum()
}

/// Grid search for the offset maximizing [`alignment_objective`] over
/// `{grid_step, 2·grid_step, …} ∩ (0, t_w)`. Ties go to the smallest offset.
pub fn align_offset<C, I>(current: &C, incoming: &I, t_s: f64, t_w: f64, grid_step: f64) -> Result<f64, FuseError>
where
    C: Evaluate + ?Sized,
    I: Evaluate + ?Sized,
{
    if !(grid_step.is_finite() && grid_step > 0.0 && t_w.is_finite()) {
        return Err(FuseError::Argument(format!("grid step {grid_step} / window {t_w} invalid")));
    }
    if t_w <= 2.0 * grid_step {
        return Err(FuseError::Argument(format!("alignment window {t_w} leaves no grid points at step {grid_step}")));
    }
    let points = (t_w / grid_step - 1e-9).ceil() as usize - 1;
    let pos = current.evaluate(t_s, Order::Position)?;
    let vel = current.evaluate(t_s, Order::Velocity)?;
    let origin = incoming.domain().0;
    incoming.check_domain(origin + points as f64 * grid_step)?;

    let mut inc = vec![0.0; incoming.dims()];
    let mut best = (i64::MIN, grid_step);
    for n in 1..=points {
        let t_a = n as f64 * grid_step;
        incoming.evaluate_unchecked(origin + t_a, Order::Position, &mut inc);
        let s = score(&pos, &vel, &inc);
        if s > best.0 {
            best = (s, t_a);
        }
    }
    Ok(best.1)
}

/// The constant 6×6 system of a quintic in normalized time: rows pin
/// position, velocity and acceleration at σ = 0 and σ = 1.
fn quintic_system() -> &'static (Lu, f64) {
    static SYSTEM: OnceLock<(Lu, f64)> = OnceLock::new();
    SYSTEM.get_or_init(|| {
        let m = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 2.0, 0.0, 0.0, 0.0],
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.0, 0.0, 2.0, 6.0, 12.0, 20.0],
        ])
        .expect("rectangular");
        let cond = condition_number(&m);
        (Lu::factor(&m).expect("quintic basis is nonsingular"), cond)
    })
}

/// Condition estimate of the blend system in physical units: the normalized
/// matrix's condition times the spread of the derivative rescale factors
/// `{1, h, h²}`.
pub fn blend_condition(half_window: f64) -> f64 {
    let factors = [1.0, half_window, half_window * half_window];
    let hi = factors.iter().cloned().fold(f64::MIN, f64::max);
    let lo = factors.iter().cloned().fold(f64::MAX, f64::min);
    quintic_system().1 * hi / lo
}

fn solve_half(p0: f64, v0: f64, a0: f64, p1: f64, v1: f64, a1: f64, h: f64) -> [f64; 6] {
    let rhs = [p0, v0 * h, a0 * h * h, p1, v1 * h, a1 * h * h];
    let c = quintic_system().0.solve(&rhs).expect("6-vector");
    [c[0], c[1], c[2], c[3], c[4], c[5]]
}

/// Two quintics over `[0, t_q/2]` each: Left runs from `start` to the
/// midpoint state (mean position, mean velocity, zero acceleration), Right
/// from the midpoint state to `end`.
pub fn solve_quintic_pair(
    start: &BoundaryState,
    end: &BoundaryState,
    t_q: f64,
) -> Result<(QuinticSegment, QuinticSegment), FuseError> {
    solve_quintic_pair_with(start, end, t_q, DEFAULT_MAX_BLEND_CONDITION)
}

pub fn solve_quintic_pair_with(
    start: &BoundaryState,
    end: &BoundaryState,
    t_q: f64,
    max_condition: f64,
) -> Result<(QuinticSegment, QuinticSegment), FuseError> {
    if !(t_q.is_finite() && t_q > 0.0) {
        return Err(FuseError::Argument(format!("blend window {t_q} must be > 0")));
    }
    if start.dims() != end.dims() || start.dims() == 0 {
        return Err(FuseError::Argument(format!("boundary states have {} and {} channels", start.dims(), end.dims())));
    }
    for (name, s) in [("start", start), ("end", end)] {
        if !s.is_finite() || s.velocity.len() != s.dims() || s.acceleration.len() != s.dims() {
            return Err(FuseError::Argument(format!("{name} boundary state is malformed or non-finite")));
        }
    }
    let h = t_q / 2.0;
    let condition = blend_condition(h);
    if condition.is_nan() || condition > max_condition {
        return Err(FuseError::IllConditioned { condition, threshold: max_condition });
    }
    let mut left = Vec::with_capacity(start.dims());
    let mut right = Vec::with_capacity(start.dims());
    for i in 0..start.dims() {
        let mid_p = (start.position[i] + end.position[i]) / 2.0;
        let mid_v = (start.velocity[i] + end.velocity[i]) / 2.0;
        left.push(solve_half(start.position[i], start.velocity[i], start.acceleration[i], mid_p, mid_v, 0.0, h));
        right.push(solve_half(mid_p, mid_v, 0.0, end.position[i], end.velocity[i], end.acceleration[i], h));
    }
    Ok((QuinticSegment::new(left, 0.0, h, Side::Left)?, QuinticSegment::new(right, 0.0, h, Side::Right)?))
}

fn prefix_segments(current: &Trajectory, t_s: f64) -> Result<Vec<Segment>, FuseError> {
    let (c_start, _) = current.domain();
    current.check_domain(t_s)?;
    if t_s > c_start {
        Ok(current.clip_domain(c_start, t_s)?.to_segments())
    } else {
        Ok(Vec::new())
    }
}

/// Composite: `current` before `t_s`, the dual-quintic blend on
/// `[t_s, t_s + t_q)`, then `incoming` shifted so that its local offset
/// `t_a + t_q` lands on `t_s + t_q`.
///
/// Zero-order-hold channels of `incoming` skip the blend: they hold the
/// current value and switch at `t_s + t_q`.
pub fn fuse(
    current: &Trajectory,
    incoming: &Arc<PolynomialTrajectory>,
    spec: &BlendSpec,
) -> Result<CompositeTrajectory, FuseError> {
    fuse_with(current, incoming, spec, DEFAULT_MAX_BLEND_CONDITION)
}

pub fn fuse_with(
    current: &Trajectory,
    incoming: &Arc<PolynomialTrajectory>,
    spec: &BlendSpec,
    max_condition: f64,
) -> Result<CompositeTrajectory, FuseError> {
    spec.validate()?;
    if current.dims() != incoming.dims() {
        return Err(FuseError::Argument(format!(
            "current has {} channels, incoming {}",
            current.dims(),
            incoming.dims()
        )));
    }
    let BlendSpec { t_s, t_a, t_q, .. } = *spec;
    let (d0, d1) = incoming.domain();
    let needed = t_a + t_q;
    if d0 + needed >= d1 {
        return Err(FuseError::ChunkTooShort { needed, available: d1 - d0 });
    }

    let start = boundary_state(current, t_s)?;
    let end = boundary_state(incoming.as_ref(), d0 + needed)?;
    let (left, right) = solve_quintic_pair_with(&start, &end, t_q, max_condition)?;
    let (left, right) = hold_discrete(left, right, &start, &incoming.hold_mask())?;

    let mid = t_s + t_q / 2.0;
    let blend_end = t_s + t_q;
    let offset = d0 + t_a - t_s;
    let mut segments = prefix_segments(current, t_s)?;
    segments.push(Segment::new(t_s, mid, Piece::Quintic(Arc::new(left)), -t_s, SegmentKind::BlendLeft));
    segments.push(Segment::new(mid, blend_end, Piece::Quintic(Arc::new(right)), -mid, SegmentKind::BlendRight));
    segments.push(Segment::new(
        blend_end,
        d1 - offset,
        Piece::Polynomial(incoming.clone()),
        offset,
        SegmentKind::Fitted,
    ));
    Ok(CompositeTrajectory::new(segments)?)
}

fn hold_discrete(
    left: QuinticSegment,
    right: QuinticSegment,
    start: &BoundaryState,
    holds: &[bool],
) -> Result<(QuinticSegment, QuinticSegment), FuseError> {
    if !holds.iter().any(|&h| h) {
        return Ok((left, right));
    }
    let patch = |q: &QuinticSegment| {
        let coeffs = q
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| if holds[i] { [start.position[i], 0.0, 0.0, 0.0, 0.0, 0.0] } else { *c })
            .collect();
        QuinticSegment::new(coeffs, 0.0, q.duration(), q.side())
    };
    Ok((patch(&left)?, patch(&right)?))
}

/// Hard switch without a blend: `current` before `t_s`, `incoming`
/// evaluated at `t + offset` from `t_s` on.
pub fn hard_switch(
    current: &Trajectory,
    incoming: &Trajectory,
    t_s: f64,
    offset: f64,
) -> Result<CompositeTrajectory, FuseError> {
    if current.dims() != incoming.dims() {
        return Err(FuseError::Argument(format!(
            "current has {} channels, incoming {}",
            current.dims(),
            incoming.dims()
        )));
    }
    let (d0, d1) = incoming.domain();
    if t_s + offset < d0 || t_s + offset >= d1 {
        return Err(FuseError::ChunkTooShort { needed: t_s + offset - d0, available: d1 - d0 });
    }
    let mut segments = prefix_segments(current, t_s)?;
    let tail = incoming.clip_domain(t_s + offset, d1)?;
    for seg in tail.to_segments() {
        let start = if seg.start == t_s + offset { t_s } else { seg.start - offset };
        let end = seg.end - offset;
        segments.push(Segment { start, end, offset: seg.offset + offset, ..seg });
    }
    // re-pin shared boundaries so adjacent segments meet exactly
    for i in 1..segments.len() {
        let prev_end = segments[i - 1].end;
        segments[i].start = prev_end;
    }
    Ok(CompositeTrajectory::new(segments)?)
}

/// Signed position jump of a naive switch: `current(t_s) - incoming(t_a)`.
pub fn discontinuity<C, I>(current: &C, incoming: &I, t_s: f64, t_a: f64) -> Result<Vec<f64>, FuseError>
where
    C: Evaluate + ?Sized,
    I: Evaluate + ?Sized,
{
    let a = current.evaluate(t_s, Order::Position)?;
    let b = incoming.evaluate(incoming.domain().0 + t_a, Order::Position)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
}
