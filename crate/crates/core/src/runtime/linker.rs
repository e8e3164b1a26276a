use std::sync::Arc;

use log::{debug, info, warn};

use super::cell::ActiveTrajectoryCell;
use super::config::{LinkerConfig, Strategy};
use crate::fuser::{self, BlendSpec, FuseError};
use crate::smoother::smooth_chunk_with;
use crate::trajectory::{
    ActionChunk, Channel, CompositeTrajectory, Evaluate, KnotMismatch, Order, Piece, PolynomialTrajectory, Segment,
    SegmentKind, Timestamp, Trajectory,
};

/// Wall time to trajectory time: `anchor + α (t_wall - anchor)`.
pub fn accelerate_time(t_wall: Timestamp, t_anchor: Timestamp, cfg: &LinkerConfig) -> f64 {
    t_anchor.secs() + cfg.alpha() * (t_wall - t_anchor)
}

/// Why a chunk was dropped without touching the active trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscardReason {
    /// Every row (or all but one) is already in the past.
    Stale,
    /// Too little of the chunk remains to align and blend into.
    TooShort,
    /// The observation is stamped in the future.
    ClockSkew,
    /// Fitting or fusing failed.
    Fault(String),
}

impl DiscardReason {
    pub fn as_str(&self) -> &str {
        match self {
            DiscardReason::Stale => "stale",
            DiscardReason::TooShort => "short",
            DiscardReason::ClockSkew => "skew",
            DiscardReason::Fault(_) => "fault",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChunkOutcome {
    /// Installed into an empty cell.
    Installed,
    /// Blended into the active trajectory. `knots` is the worst continuity
    /// mismatch over the new knots; `jump` the largest signed position step
    /// per channel there (zero for discrete channels, which switch by design).
    Fused {
        knots: KnotMismatch,
        jump: Vec<f64>,
    },
    /// Hard switch (raw and naive strategies); signed jump per channel.
    Switched {
        jump: Vec<f64>,
    },
    Discarded(DiscardReason),
}

/// What happened to one received chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkReport {
    pub stale_index: Option<usize>,
    pub t_a: Option<f64>,
    pub outcome: ChunkOutcome,
}

impl ChunkReport {
    fn discarded(stale_index: Option<usize>, reason: DiscardReason) -> Self {
        Self { stale_index, t_a: None, outcome: ChunkOutcome::Discarded(reason) }
    }
}

/// Result of evaluating the active trajectory for one control period.
#[derive(Debug, Clone, PartialEq)]
pub enum Tick {
    Command(Command),
    /// Nothing to evaluate: keep sending the last command.
    Hold,
}

/// Derivatives are in wall-time units (already multiplied by `α`, `α²`).
#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub kind: SegmentKind,
    pub generation: u64,
}

/// Evaluates the active trajectory at the time-scaled instant for `t_now`.
/// Never fails: an empty cell, an exhausted trajectory or an evaluation
/// fault all yield [`Tick::Hold`].
pub fn control_tick(t_now: Timestamp, cell: &ActiveTrajectoryCell, cfg: &LinkerConfig) -> Tick {
    let Some(active) = cell.load() else {
        return Tick::Hold;
    };
    let s = accelerate_time(t_now, cell.anchor(), cfg);
    let traj = &active.trajectory;
    let (start, end) = traj.domain();
    if s < start || s > end {
        return Tick::Hold;
    }
    let alpha = cfg.alpha();
    let eval = |order| traj.evaluate(s, order);
    match (eval(Order::Position), eval(Order::Velocity), eval(Order::Acceleration)) {
        (Ok(position), Ok(mut velocity), Ok(mut acceleration)) => {
            velocity.iter_mut().for_each(|v| *v *= alpha);
            acceleration.iter_mut().for_each(|a| *a *= alpha * alpha);
            if position.iter().chain(&velocity).chain(&acceleration).any(|v| !v.is_finite()) {
                warn!("fault: non-finite command at t={}", t_now.secs());
                return Tick::Hold;
            }
            Tick::Command(Command {
                position,
                velocity,
                acceleration,
                kind: traj.kind_at(s),
                generation: active.generation,
            })
        }
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
            warn!("fault: evaluation failed at t={}: {e}", t_now.secs());
            Tick::Hold
        }
    }
}

/// Integrates a freshly received chunk into the cell.
///
/// Drops rows made stale by the measured latency, fits the rest (except for
/// the raw strategy), then installs, switches or blends according to
/// `cfg.strategy`. The cell is only written on success.
pub fn integrate_chunk(
    chunk: &ActionChunk,
    t_now: Timestamp,
    cell: &ActiveTrajectoryCell,
    cfg: &LinkerConfig,
) -> ChunkReport {
    let report = integrate(chunk, t_now, cell, cfg);
    match &report.outcome {
        ChunkOutcome::Discarded(reason) => {
            info!(
                "chunk-discarded-{}: obs={} k*={:?} {reason:?}",
                reason.as_str(),
                chunk.obs_time(),
                report.stale_index
            )
        }
        other => debug!(
            "chunk-received: obs={} k*={:?} t_a={:?} {other:?}",
            chunk.obs_time(),
            report.stale_index,
            report.t_a
        ),
    }
    report
}

fn integrate(chunk: &ActionChunk, t_now: Timestamp, cell: &ActiveTrajectoryCell, cfg: &LinkerConfig) -> ChunkReport {
    let k_star = match fuser::stale_index(t_now, chunk.obs_time(), cfg.f_ctrl) {
        Ok(k) => k,
        Err(FuseError::ClockSkew { .. }) => return ChunkReport::discarded(None, DiscardReason::ClockSkew),
        Err(e) => return ChunkReport::discarded(None, DiscardReason::Fault(e.to_string())),
    };
    let f_act = chunk.sample_rate();
    // k* counts control periods, each worth 1/f_interp of trajectory time
    let stale_rows = (k_star as f64 * f_act / cfg.f_interp + 1e-9).floor() as usize;
    let Some(fresh) = restamp(chunk, cell, cfg).and_then(|c| c.drop_leading(stale_rows)) else {
        return ChunkReport::discarded(Some(k_star), DiscardReason::Stale);
    };

    let incoming = match build_incoming(&fresh, cfg) {
        Ok(t) => t,
        Err(e) => return ChunkReport::discarded(Some(k_star), DiscardReason::Fault(e)),
    };
    let s_now = accelerate_time(t_now, cell.anchor(), cfg);
    let Some(active) = cell.load() else {
        cell.store(incoming.into_trajectory());
        return ChunkReport { stale_index: Some(k_star), t_a: None, outcome: ChunkOutcome::Installed };
    };
    let current = match continue_from(&active.trajectory, s_now) {
        Ok(c) => c,
        Err(e) => return ChunkReport::discarded(Some(k_star), DiscardReason::Fault(e.to_string())),
    };

    let result = match (&incoming, cfg.strategy) {
        (Incoming::Linear(raw), _) => switch_raw(&current, raw, s_now),
        (Incoming::Fitted(fit), Strategy::Naive) => switch_naive(&current, fit, s_now, chunk.len(), f_act, cfg),
        (Incoming::Fitted(fit), _) => blend(&current, fit, s_now, chunk.len(), f_act, cfg),
    };
    match result {
        Ok((composite, t_a, outcome)) => {
            let (start, end) = composite.domain();
            let keep_from = (s_now - cfg.t_q).max(start);
            let pruned = if keep_from > start && keep_from < end {
                composite.clip_domain(keep_from, end).unwrap_or(composite)
            } else {
                composite
            };
            cell.store(pruned.into());
            ChunkReport { stale_index: Some(k_star), t_a, outcome }
        }
        Err(FuseError::ChunkTooShort { .. }) => ChunkReport::discarded(Some(k_star), DiscardReason::TooShort),
        Err(e) => ChunkReport::discarded(Some(k_star), DiscardReason::Fault(e.to_string())),
    }
}

/// Moves the chunk onto the trajectory-time axis.
fn restamp(chunk: &ActionChunk, cell: &ActiveTrajectoryCell, cfg: &LinkerConfig) -> Option<ActionChunk> {
    let s_obs = accelerate_time(chunk.obs_time(), cell.anchor(), cfg);
    ActionChunk::from_flat(Timestamp::from_secs(s_obs), chunk.sample_rate(), chunk.dims(), chunk.as_flat().to_vec())
        .ok()
}

enum Incoming {
    Fitted(Arc<PolynomialTrajectory>),
    Linear(CompositeTrajectory),
}

impl Incoming {
    fn into_trajectory(self) -> Trajectory {
        match self {
            Incoming::Fitted(p) => Trajectory::Polynomial(p),
            Incoming::Linear(c) => Trajectory::Composite(c),
        }
    }
}

fn build_incoming(chunk: &ActionChunk, cfg: &LinkerConfig) -> Result<Incoming, String> {
    let mask = cfg.fit_mask(chunk.dims());
    match cfg.strategy {
        Strategy::Raw => linear_waypoints(chunk, &mask).map(Incoming::Linear),
        Strategy::Naive | Strategy::Rail => smooth_chunk_with(chunk, cfg.degree, &mask, cfg.max_fit_condition)
            .map(|p| Incoming::Fitted(Arc::new(p)))
            .map_err(|e| e.to_string()),
    }
}

/// Piecewise-linear interpolation of raw waypoints; unmasked channels hold.
pub fn linear_waypoints(chunk: &ActionChunk, mask: &[bool]) -> Result<CompositeTrajectory, String> {
    let mut segments = Vec::with_capacity(chunk.len() - 1);
    for k in 0..chunk.len() - 1 {
        let (a, b) = (chunk.row(k), chunk.row(k + 1));
        let channels = (0..chunk.dims())
            .map(|i| {
                let slope = if mask.get(i).copied().unwrap_or(true) { b[i] - a[i] } else { 0.0 };
                Channel::Poly(vec![a[i], slope])
            })
            .collect();
        let (t0, t1) = (chunk.row_time(k), chunk.row_time(k + 1));
        let piece = PolynomialTrajectory::with_channels(channels, t0, t1 - t0, t0, t1).map_err(|e| e.to_string())?;
        segments.push(Segment::new(t0, t1, Piece::Polynomial(Arc::new(piece)), 0.0, SegmentKind::Linear));
    }
    CompositeTrajectory::new(segments).map_err(|e| e.to_string())
}

/// The trajectory to blend away from at `s_now`. Once the active trajectory
/// is exhausted the robot is holding its final position at rest.
fn continue_from(active: &Trajectory, s_now: f64) -> Result<Trajectory, FuseError> {
    let (start, end) = active.domain();
    if s_now <= end {
        active.check_domain(s_now)?;
        return Ok(active.clone());
    }
    let last = active.evaluate(end, Order::Position)?;
    let hold = PolynomialTrajectory::new(last.into_iter().map(|p| vec![p]).collect(), end, s_now)?;
    let mut segments = if end > start { active.to_segments() } else { Vec::new() };
    segments.push(Segment::new(end, s_now, Piece::Polynomial(Arc::new(hold)), 0.0, SegmentKind::Fitted));
    Ok(CompositeTrajectory::new(segments)?.into())
}

type Integrated = (CompositeTrajectory, Option<f64>, ChunkOutcome);

fn switch_raw(current: &Trajectory, raw: &CompositeTrajectory, s_now: f64) -> Result<Integrated, FuseError> {
    let incoming: Trajectory = raw.clone().into();
    let composite = fuser::hard_switch(current, &incoming, s_now, 0.0)?;
    let jump = fuser::discontinuity(current, &incoming, s_now, s_now - incoming.domain().0)?;
    Ok((composite, None, ChunkOutcome::Switched { jump }))
}

fn switch_naive(
    current: &Trajectory,
    fit: &Arc<PolynomialTrajectory>,
    s_now: f64,
    horizon: usize,
    f_act: f64,
    cfg: &LinkerConfig,
) -> Result<Integrated, FuseError> {
    let (d0, d1) = fit.domain();
    let t_w = cfg.alignment_window(horizon, f_act).min(d1 - d0);
    let t_a = aligned_offset(current, fit, s_now, t_w, cfg)?;
    let incoming: Trajectory = Trajectory::Polynomial(fit.clone());
    let composite = fuser::hard_switch(current, &incoming, s_now, d0 + t_a - s_now)?;
    let jump = fuser::discontinuity(current, fit.as_ref(), s_now, t_a)?;
    Ok((composite, Some(t_a), ChunkOutcome::Switched { jump }))
}

fn blend(
    current: &Trajectory,
    fit: &Arc<PolynomialTrajectory>,
    s_now: f64,
    horizon: usize,
    f_act: f64,
    cfg: &LinkerConfig,
) -> Result<Integrated, FuseError> {
    let (d0, d1) = fit.domain();
    // leave room for the blend window inside the incoming trajectory
    let t_w = cfg.alignment_window(horizon, f_act).min(d1 - d0 - cfg.t_q);
    let t_a = aligned_offset(current, fit, s_now, t_w, cfg)?;
    let spec = BlendSpec { t_s: s_now, t_a, t_q: cfg.t_q, t_w };
    let composite = fuser::fuse_with(current, fit, &spec, cfg.max_blend_condition)?;
    let mask = cfg.fit_mask(fit.dims());
    let mut knots = KnotMismatch { time: s_now, ..Default::default() };
    let mut jump: Vec<f64> = vec![0.0; fit.dims()];
    for (index, t) in composite.knots().enumerate() {
        if t < s_now {
            continue;
        }
        if let (Some(k), Some(j)) = (composite.knot_mismatch(index, &mask), composite.knot_jump(index)) {
            knots = knots.max(k);
            for ((worst, d), &fitted) in jump.iter_mut().zip(j).zip(&mask) {
                if fitted && d.abs() > worst.abs() {
                    *worst = d;
                }
            }
        }
    }
    Ok((composite, Some(t_a), ChunkOutcome::Fused { knots, jump }))
}

fn aligned_offset(
    current: &Trajectory,
    fit: &PolynomialTrajectory,
    s_now: f64,
    t_w: f64,
    cfg: &LinkerConfig,
) -> Result<f64, FuseError> {
    let grid = cfg.grid_step();
    if t_w <= 2.0 * grid {
        let (d0, d1) = fit.domain();
        return Err(FuseError::ChunkTooShort { needed: 2.0 * grid + cfg.t_q, available: d1 - d0 });
    }
    fuser::align_offset(current, fit, s_now, t_w, grid)
}

/// What the control task does between ticks: remembers the last command so
/// holds repeat it, and reports idle ticks before the first command.
#[derive(Debug, Clone)]
pub struct HandState {
    initial: Vec<f64>,
    last: Option<Vec<f64>>,
}

/// How a tick's command was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickState {
    /// No command has ever been sent.
    Idle,
    /// Repeating the last command.
    Hold,
    Active(SegmentKind),
}

/// One control period as recorded in a run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub time: f64,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub state: TickState,
    pub events: Vec<ChunkReport>,
}

impl TickRecord {
    /// True when the hand dispatched a command this tick.
    pub fn is_command(&self) -> bool {
        self.state != TickState::Idle
    }
}

impl HandState {
    /// `initial` is reported for idle ticks (the robot's starting pose).
    pub fn new(initial: Vec<f64>) -> Self {
        Self { initial, last: None }
    }

    pub fn last_command(&self) -> Option<&[f64]> {
        self.last.as_deref()
    }

    pub fn tick(&mut self, t_now: Timestamp, cell: &ActiveTrajectoryCell, cfg: &LinkerConfig) -> TickRecord {
        let zeros = vec![0.0; self.initial.len()];
        let (position, velocity, acceleration, state) = match control_tick(t_now, cell, cfg) {
            Tick::Command(c) => {
                self.last = Some(c.position.clone());
                (c.position, c.velocity, c.acceleration, TickState::Active(c.kind))
            }
            Tick::Hold => match &self.last {
                Some(p) => (p.clone(), zeros.clone(), zeros, TickState::Hold),
                None => (self.initial.clone(), zeros.clone(), zeros, TickState::Idle),
            },
        };
        TickRecord { time: t_now.secs(), position, velocity, acceleration, state, events: Vec::new() }
    }
}
