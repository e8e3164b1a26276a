use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::{check_interval, Evaluate, Order, PolynomialTrajectory, QuinticSegment, TrajectoryError};

/// A piece that can appear inside a composite.
#[derive(Debug, Clone)]
pub enum Piece {
    Polynomial(Arc<PolynomialTrajectory>),
    Quintic(Arc<QuinticSegment>),
}

impl Piece {
    fn dims(&self) -> usize {
        match self {
            Piece::Polynomial(p) => p.dims(),
            Piece::Quintic(q) => q.dims(),
        }
    }

    fn eval(&self, t: f64, order: Order, out: &mut [f64]) {
        match self {
            Piece::Polynomial(p) => p.evaluate_unchecked(t, order, out),
            Piece::Quintic(q) => q.evaluate_unchecked(t, order, out),
        }
    }
}

/// What produced a segment; surfaced in run traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    /// Least-squares fitted chunk.
    Fitted,
    /// Piecewise-linear raw waypoints.
    Linear,
    BlendLeft,
    BlendRight,
}

impl SegmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::Fitted => "fit",
            SegmentKind::Linear => "raw",
            SegmentKind::BlendLeft => "blend-l",
            SegmentKind::BlendRight => "blend-r",
        }
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegmentKind {
    type Err = TrajectoryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fit" => Ok(SegmentKind::Fitted),
            "raw" => Ok(SegmentKind::Linear),
            "blend-l" => Ok(SegmentKind::BlendLeft),
            "blend-r" => Ok(SegmentKind::BlendRight),
            other => Err(TrajectoryError::Argument(format!("unknown segment kind {other:?}"))),
        }
    }
}

/// `[start, end)` of global time served by `piece` evaluated at
/// `t + offset` (the last segment also owns its end point).
#[derive(Debug, Clone)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub piece: Piece,
    pub offset: f64,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn new(start: f64, end: f64, piece: Piece, offset: f64, kind: SegmentKind) -> Self {
        Self { start, end, piece, offset, kind }
    }
}

/// Left/right limit differences at one internal knot, max over channels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KnotMismatch {
    pub time: f64,
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

impl KnotMismatch {
    pub fn max(self, other: KnotMismatch) -> KnotMismatch {
        KnotMismatch {
            time: if other.position > self.position { other.time } else { self.time },
            position: self.position.max(other.position),
            velocity: self.velocity.max(other.velocity),
            acceleration: self.acceleration.max(other.acceleration),
        }
    }
}

/// Ordered, contiguous piecewise trajectory.
#[derive(Debug, Clone)]
pub struct CompositeTrajectory {
    segments: Vec<Segment>,
    dims: usize,
}

impl CompositeTrajectory {
    pub fn new(segments: Vec<Segment>) -> Result<Self, TrajectoryError> {
        let first =
            segments.first().ok_or_else(|| TrajectoryError::Argument("composite needs at least one segment".into()))?;
        let dims = first.piece.dims();
        for (i, s) in segments.iter().enumerate() {
            check_interval(s.start, s.end)?;
            if s.piece.dims() != dims {
                return Err(TrajectoryError::Argument(format!(
                    "segment {i} has {} channels, expected {dims}",
                    s.piece.dims()
                )));
            }
            if !s.offset.is_finite() {
                return Err(TrajectoryError::Argument(format!("segment {i} has non-finite offset")));
            }
        }
        for (i, w) in segments.windows(2).enumerate() {
            if w[0].end != w[1].start {
                return Err(TrajectoryError::Argument(format!(
                    "segments {i} and {} are not contiguous ({} != {})",
                    i + 1,
                    w[0].end,
                    w[1].start
                )));
            }
        }
        Ok(Self { segments, dims })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Internal knot times.
    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().skip(1).map(|s| s.start)
    }

    fn segment_index(&self, t: f64) -> usize {
        self.segments.partition_point(|s| s.start <= t).saturating_sub(1)
    }

    pub fn kind_at(&self, t: f64) -> SegmentKind {
        self.segments[self.segment_index(t)].kind
    }

    pub fn clip_domain(&self, start: f64, end: f64) -> Result<Self, TrajectoryError> {
        check_interval(start, end)?;
        let (s0, e0) = self.domain();
        if start < s0 || end > e0 {
            return Err(TrajectoryError::Argument(format!("[{start}, {end}] is not inside [{s0}, {e0}]")));
        }
        let segments = self
            .segments
            .iter()
            .filter(|s| s.end > start && s.start < end)
            .map(|s| Segment { start: s.start.max(start), end: s.end.min(end), ..s.clone() })
            .collect();
        Self::new(segments)
    }

    /// Left and right limits at knot `index` (0-based over internal knots),
    /// compared on the channels where `mask` is true.
    pub fn knot_mismatch(&self, index: usize, mask: &[bool]) -> Option<KnotMismatch> {
        let left = self.segments.get(index)?;
        let right = self.segments.get(index + 1)?;
        let t = right.start;
        let mut a = vec![0.0; self.dims];
        let mut b = vec![0.0; self.dims];
        let mut diffs = [0.0; 3];
        for (k, order) in Order::ALL.into_iter().enumerate() {
            left.piece.eval(t + left.offset, order, &mut a);
            right.piece.eval(t + right.offset, order, &mut b);
            diffs[k] = a
                .iter()
                .zip(&b)
                .zip(mask.iter().chain(std::iter::repeat(&true)))
                .filter(|(_, &m)| m)
                .map(|((x, y), _)| (x - y).abs())
                .fold(0.0, f64::max);
        }
        Some(KnotMismatch { time: t, position: diffs[0], velocity: diffs[1], acceleration: diffs[2] })
    }

    /// Mismatches at every internal knot.
    pub fn knot_mismatches(&self, mask: &[bool]) -> Vec<KnotMismatch> {
        (0..self.segments.len().saturating_sub(1)).filter_map(|i| self.knot_mismatch(i, mask)).collect()
    }

    /// Position jump at knot `index` per channel: left limit minus right limit.
    pub fn knot_jump(&self, index: usize) -> Option<Vec<f64>> {
        let left = self.segments.get(index)?;
        let right = self.segments.get(index + 1)?;
        let t = right.start;
        let mut a = vec![0.0; self.dims];
        let mut b = vec![0.0; self.dims];
        left.piece.eval(t + left.offset, Order::Position, &mut a);
        right.piece.eval(t + right.offset, Order::Position, &mut b);
        Some(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    }
}

impl Evaluate for CompositeTrajectory {
    fn dims(&self) -> usize {
        self.dims
    }

    fn domain(&self) -> (f64, f64) {
        (self.segments[0].start, self.segments[self.segments.len() - 1].end)
    }

    fn evaluate_unchecked(&self, t: f64, order: Order, out: &mut [f64]) {
        let seg = &self.segments[self.segment_index(t)];
        seg.piece.eval(t + seg.offset, order, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(c0: f64, c1: f64, start: f64, end: f64) -> Piece {
        Piece::Polynomial(Arc::new(PolynomialTrajectory::new(vec![vec![c0, c1]], start, end).unwrap()))
    }

    #[test]
    fn knot_belongs_to_right_segment() {
        let c = CompositeTrajectory::new(vec![
            Segment::new(0.0, 1.0, line(0.0, 1.0, 0.0, 1.0), 0.0, SegmentKind::Fitted),
            Segment::new(1.0, 2.0, line(5.0, 0.0, 1.0, 2.0), 0.0, SegmentKind::Linear),
        ])
        .unwrap();
        assert_eq!(c.evaluate(1.0, Order::Position).unwrap(), vec![5.0]);
        assert_eq!(c.evaluate(0.999, Order::Position).unwrap()[0], 0.999);
        assert_eq!(c.kind_at(1.0), SegmentKind::Linear);
        assert_eq!(c.evaluate(2.0, Order::Position).unwrap(), vec![5.0]);
        assert!(c.evaluate(2.0001, Order::Position).is_err());
        let m = c.knot_mismatch(0, &[true]).unwrap();
        assert_eq!(m.position, 4.0);
        assert_eq!(c.knot_jump(0).unwrap(), vec![-4.0]);
    }

    #[test]
    fn offsets_shift_piece_time() {
        let c = CompositeTrajectory::new(vec![Segment::new(
            0.0,
            1.0,
            line(0.0, 1.0, 10.0, 11.0),
            10.0,
            SegmentKind::Fitted,
        )])
        .unwrap();
        assert!((c.evaluate(0.5, Order::Position).unwrap()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_contiguous_rejected() {
        let r = CompositeTrajectory::new(vec![
            Segment::new(0.0, 1.0, line(0.0, 1.0, 0.0, 1.0), 0.0, SegmentKind::Fitted),
            Segment::new(1.5, 2.0, line(0.0, 1.0, 0.0, 1.0), 0.0, SegmentKind::Fitted),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn clip_drops_outside_segments() {
        let c = CompositeTrajectory::new(vec![
            Segment::new(0.0, 1.0, line(0.0, 1.0, 0.0, 1.0), 0.0, SegmentKind::Fitted),
            Segment::new(1.0, 2.0, line(1.0, 0.0, 1.0, 2.0), 0.0, SegmentKind::Fitted),
            Segment::new(2.0, 3.0, line(1.0, 1.0, 2.0, 3.0), 0.0, SegmentKind::Fitted),
        ])
        .unwrap();
        let k = c.clip_domain(1.5, 2.5).unwrap();
        assert_eq!(k.segments().len(), 2);
        assert_eq!(k.domain(), (1.5, 2.5));
        for t in [1.5, 1.9, 2.0, 2.4, 2.5] {
            assert_eq!(
                k.evaluate(t, Order::Position).unwrap()[0].to_bits(),
                c.evaluate(t, Order::Position).unwrap()[0].to_bits()
            );
        }
        assert!(c.clip_domain(2.5, 1.5).is_err());
    }

    #[test]
    fn segment_kind_round_trips_through_text() {
        for k in [SegmentKind::Fitted, SegmentKind::Linear, SegmentKind::BlendLeft, SegmentKind::BlendRight] {
            assert_eq!(k.as_str().parse::<SegmentKind>().unwrap(), k);
        }
    }
}
