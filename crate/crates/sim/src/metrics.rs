//! Smoothness and continuity statistics over run traces.

use rail_core::runtime::{ChunkOutcome, Strategy, TickRecord};
use thiserror::Error;

use crate::trace::RunTrace;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("trace spans {span:.3} s of commands; at least {min} s are needed")]
    TooShort { span: f64, min: f64 },
}

/// Where velocity and acceleration samples come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeSource {
    /// The trace's own velocity/acceleration columns.
    Analytic,
    /// Central differences of commanded positions.
    FiniteDifference,
}

impl DerivativeSource {
    /// Raw waypoint execution has no meaningful analytic derivatives.
    pub fn for_strategy(strategy: Option<Strategy>) -> Self {
        match strategy {
            Some(Strategy::Raw) => DerivativeSource::FiniteDifference,
            _ => DerivativeSource::Analytic,
        }
    }
}

/// Per-channel standard deviations over one 1-second window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub start: f64,
    pub samples: usize,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessReport {
    pub strategy: Option<Strategy>,
    pub source: DerivativeSource,
    pub windows: Vec<WindowStats>,
    /// Largest |position step| per channel at any chunk switch or blend.
    pub max_switch_jump: Vec<f64>,
    /// Means over windows and channels.
    pub mean_position_std: f64,
    pub mean_velocity_std: f64,
    pub mean_acceleration_std: f64,
}

pub const MIN_SPAN: f64 = 2.0;

/// Windowed standard deviations of the commanded trajectory, using the
/// derivative source appropriate for the trace's strategy.
pub fn smoothness_report(trace: &RunTrace) -> Result<SmoothnessReport, MetricsError> {
    smoothness_report_with(trace, DerivativeSource::for_strategy(trace.strategy))
}

/// Windows are consecutive, non-overlapping 1-second spans starting at the
/// first command; there are `floor(span)` of them.
pub fn smoothness_report_with(trace: &RunTrace, source: DerivativeSource) -> Result<SmoothnessReport, MetricsError> {
    let rows: Vec<&TickRecord> = trace.rows.iter().collect();
    let first = rows.iter().position(|r| r.is_command());
    let last = rows.iter().rposition(|r| r.is_command());
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(MetricsError::TooShort { span: 0.0, min: MIN_SPAN }),
    };
    let t0 = rows[first].time;
    let span = rows[last].time - t0;
    if span + 1e-9 < MIN_SPAN {
        return Err(MetricsError::TooShort { span, min: MIN_SPAN });
    }
    let count = (span + 1e-9).floor() as usize;
    let dims = trace.dims;
    let mut buckets: Vec<[Vec<Vec<f64>>; 3]> =
        (0..count).map(|_| std::array::from_fn(|_| vec![Vec::new(); dims])).collect();

    for i in first..=last {
        let r = rows[i];
        if !r.is_command() {
            continue;
        }
        let w = ((r.time - t0) + 1e-9).floor() as usize;
        let Some(bucket) = buckets.get_mut(w) else {
            continue;
        };
        let derivs = match source {
            DerivativeSource::Analytic => Some((r.velocity.clone(), r.acceleration.clone())),
            DerivativeSource::FiniteDifference => central_difference(&rows, i),
        };
        for c in 0..dims {
            bucket[0][c].push(r.position[c]);
            if let Some((v, a)) = &derivs {
                bucket[1][c].push(v[c]);
                bucket[2][c].push(a[c]);
            }
        }
    }

    let windows: Vec<WindowStats> = buckets
        .iter()
        .enumerate()
        .map(|(w, b)| WindowStats {
            start: t0 + w as f64,
            samples: b[0].first().map_or(0, Vec::len),
            position: b[0].iter().map(|x| std_dev(x)).collect(),
            velocity: b[1].iter().map(|x| std_dev(x)).collect(),
            acceleration: b[2].iter().map(|x| std_dev(x)).collect(),
        })
        .collect();
    let mean = |pick: fn(&WindowStats) -> &Vec<f64>| {
        let all: Vec<f64> = windows.iter().filter(|w| w.samples > 0).flat_map(|w| pick(w).iter().copied()).collect();
        if all.is_empty() {
            0.0
        } else {
            all.iter().sum::<f64>() / all.len() as f64
        }
    };
    let mut max_switch_jump = vec![0.0; dims];
    for s in discontinuity_report(trace) {
        for (m, j) in max_switch_jump.iter_mut().zip(&s.jump) {
            *m = f64::max(*m, j.abs());
        }
    }
    Ok(SmoothnessReport {
        strategy: trace.strategy,
        source,
        mean_position_std: mean(|w| &w.position),
        mean_velocity_std: mean(|w| &w.velocity),
        mean_acceleration_std: mean(|w| &w.acceleration),
        windows,
        max_switch_jump,
    })
}

/// Velocity and acceleration at row `i` from its neighbours, if both are
/// commands.
fn central_difference(rows: &[&TickRecord], i: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let (prev, cur, next) = (rows.get(i.checked_sub(1)?)?, rows[i], rows.get(i + 1)?);
    if !prev.is_command() || !next.is_command() {
        return None;
    }
    let h = (next.time - prev.time) / 2.0;
    let vel = (0..cur.position.len()).map(|c| (next.position[c] - prev.position[c]) / (2.0 * h)).collect();
    let acc = (0..cur.position.len())
        .map(|c| (next.position[c] - 2.0 * cur.position[c] + prev.position[c]) / (h * h))
        .collect();
    Some((vel, acc))
}

/// Population standard deviation; 0 for fewer than two samples. Deviations
/// are taken from the first sample, so a constant series gives exactly 0.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let n = x.len() as f64;
    let shift = x[0];
    let mean = x.iter().map(|v| v - shift).sum::<f64>() / n;
    (x.iter().map(|v| (v - shift - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Position step at one trajectory change.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchJump {
    pub time: f64,
    /// Per channel; for blends, the largest step over the new knots.
    pub jump: Vec<f64>,
    pub strategy: Option<Strategy>,
    pub blended: bool,
}

/// Every switch and blend recorded in the trace, in time order.
pub fn discontinuity_report(trace: &RunTrace) -> Vec<SwitchJump> {
    trace
        .reports()
        .filter_map(|(time, r)| {
            let (jump, blended) = match &r.outcome {
                ChunkOutcome::Switched { jump } => (jump.clone(), false),
                ChunkOutcome::Fused { jump, .. } => (jump.clone(), true),
                _ => return None,
            };
            Some(SwitchJump { time, jump, strategy: trace.strategy, blended })
        })
        .collect()
}

/// Intervals between consecutive dispatched commands longer than
/// `1.5 / f_ctrl`, as `(start, length)`.
pub fn control_gaps(trace: &RunTrace, f_ctrl: f64) -> Vec<(f64, f64)> {
    let limit = 1.5 / f_ctrl;
    let times: Vec<f64> = trace.commands().map(|r| r.time).collect();
    times.windows(2).filter(|w| w[1] - w[0] > limit).map(|w| (w[0], w[1] - w[0])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rail_core::runtime::TickState;
    use rail_core::trajectory::SegmentKind;

    fn trace(f: impl Fn(f64) -> (f64, f64, f64), seconds: f64) -> RunTrace {
        let mut t = RunTrace::new(1, Some(Strategy::Rail));
        let n = (seconds * 100.0).round() as usize;
        for k in 0..=n {
            let time = k as f64 / 100.0;
            let (p, v, a) = f(time);
            t.rows.push(TickRecord {
                time,
                position: vec![p],
                velocity: vec![v],
                acceleration: vec![a],
                state: TickState::Active(SegmentKind::Fitted),
                events: vec![],
            });
        }
        t
    }

    #[test]
    fn constant_trace_is_flat() {
        let r = smoothness_report(&trace(|_| (0.3, 0.0, 0.0), 5.0)).unwrap();
        assert_eq!(r.windows.len(), 5);
        assert!(r.windows.iter().all(|w| w.position[0] == 0.0 && w.velocity[0] == 0.0 && w.acceleration[0] == 0.0));
    }

    #[test]
    fn ramp_has_constant_derivatives() {
        let mut t = trace(|x| (2.0 * x, 2.0, 0.0), 3.5);
        let r = smoothness_report(&t).unwrap();
        assert_eq!(r.windows.len(), 3);
        for w in &r.windows {
            assert!(w.position[0] > 0.0);
            assert_eq!((w.velocity[0], w.acceleration[0]), (0.0, 0.0));
        }
        t.strategy = Some(Strategy::Raw);
        let r = smoothness_report(&t).unwrap();
        assert_eq!(r.source, DerivativeSource::FiniteDifference);
        for w in &r.windows {
            assert!(w.velocity[0] < 1e-9 && w.acceleration[0] < 1e-6, "{w:?}");
        }
    }

    #[test]
    fn finite_differences_match_sine() {
        let mut t = trace(|x| (x.sin(), x.cos(), -x.sin()), 3.0);
        t.strategy = Some(Strategy::Raw);
        let fd = smoothness_report(&t).unwrap();
        t.strategy = Some(Strategy::Rail);
        let an = smoothness_report(&t).unwrap();
        // the differenced series lacks the first sample of window 0
        assert!((fd.mean_acceleration_std / an.mean_acceleration_std - 1.0).abs() < 0.02);
    }

    #[test]
    fn too_short() {
        assert!(matches!(smoothness_report(&trace(|_| (0.0, 0.0, 0.0), 1.5)), Err(MetricsError::TooShort { .. })));
    }

    #[test]
    fn std_dev_population() {
        assert_eq!(std_dev(&[1.0, 3.0]), 1.0);
        assert_eq!(std_dev(&[5.0]), 0.0);
    }
}
