//! Intra-chunk smoothing by closed-form polynomial least squares.
//!
//! Each channel of a chunk is fitted independently with a degree-`d`
//! polynomial over normalized waypoint times `k / (H - 1)`. The normal
//! equations `(VᵀV) c = Vᵀy` are formed explicitly and solved by LU with
//! partial pivoting; `VᵀV` is shared by every channel, so it is factored
//! once per chunk.

use thiserror::Error;

use crate::linalg::{condition_number, LinalgError, Lu, Matrix};
use crate::trajectory::{ActionChunk, Channel, PolynomialTrajectory, TrajectoryError};

/// Default polynomial degree (cubic).
pub const DEFAULT_DEGREE: usize = 3;
/// Largest degree accepted by [`smooth_chunk`].
pub const MAX_DEGREE: usize = 7;
/// Normal matrices with a larger 1-norm condition number are rejected.
pub const DEFAULT_MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmoothError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("normal matrix is ill-conditioned (condition estimate {condition:.3e} > {threshold:.1e})")]
    IllConditioned { condition: f64, threshold: f64 },
    #[error("channel {index}: {source}")]
    Channel {
        index: usize,
        #[source]
        source: Box<SmoothError>,
    },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

impl From<LinalgError> for SmoothError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Singular { .. } => {
                SmoothError::IllConditioned { condition: f64::INFINITY, threshold: DEFAULT_MAX_CONDITION }
            }
            LinalgError::Shape(s) => SmoothError::Argument(s),
        }
    }
}

/// `H × (d+1)` matrix with entries `times[k]^i`.
pub fn build_vandermonde(times: &[f64], degree: usize) -> Result<Matrix, SmoothError> {
    if times.is_empty() {
        return Err(SmoothError::Argument("no sample times".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(SmoothError::Argument("non-finite sample time".into()));
    }
    if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(SmoothError::Argument(format!(
            "sample times must be strictly increasing (times[{}] = {} after {})",
            k + 1,
            times[k + 1],
            times[k]
        )));
    }
    let mut v = Matrix::zeros(times.len(), degree + 1);
    for (k, &t) in times.iter().enumerate() {
        let mut p = 1.0;
        for i in 0..=degree {
            v[(k, i)] = p;
            p *= t;
        }
    }
    Ok(v)
}

/// One channel's least-squares problem `min ‖V c - y‖₂`.
#[derive(Debug, Clone)]
pub struct VandermondeSystem {
    matrix: Matrix,
    y: Vec<f64>,
}

impl VandermondeSystem {
    pub fn new(times: &[f64], degree: usize, y: Vec<f64>) -> Result<Self, SmoothError> {
        let matrix = build_vandermonde(times, degree)?;
        if y.len() != times.len() {
            return Err(SmoothError::Argument(format!("{} waypoints for {} times", y.len(), times.len())));
        }
        if times.len() < degree + 1 {
            return Err(SmoothError::Argument(format!(
                "{} waypoints cannot determine a degree-{degree} fit",
                times.len()
            )));
        }
        Ok(Self { matrix, y })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn waypoints(&self) -> &[f64] {
        &self.y
    }

    pub fn degree(&self) -> usize {
        self.matrix.cols() - 1
    }
}

/// Factored normal equations for a fixed set of sample times.
#[derive(Debug, Clone)]
struct NormalEquations {
    vandermonde: Matrix,
    lu: Lu,
}

impl NormalEquations {
    fn factor(vandermonde: Matrix, max_condition: f64) -> Result<Self, SmoothError> {
        let gram = vandermonde.gram();
        let condition = condition_number(&gram);
        if condition.is_nan() || condition > max_condition {
            return Err(SmoothError::IllConditioned { condition, threshold: max_condition });
        }
        let lu = Lu::factor(&gram)?;
        Ok(Self { vandermonde, lu })
    }

    fn solve(&self, y: &[f64]) -> Result<Vec<f64>, SmoothError> {
        let rhs = self.vandermonde.transpose_mul_vec(y)?;
        Ok(self.lu.solve(&rhs)?)
    }
}

/// `c* = (VᵀV)⁻¹ Vᵀ y`.
pub fn solve_least_squares(sys: &VandermondeSystem) -> Result<Vec<f64>, SmoothError> {
    solve_least_squares_with(sys, DEFAULT_MAX_CONDITION)
}

pub fn solve_least_squares_with(sys: &VandermondeSystem, max_condition: f64) -> Result<Vec<f64>, SmoothError> {
    NormalEquations::factor(sys.matrix.clone(), max_condition)?.solve(&sys.y)
}

/// Fits every channel whose `mask` entry is true; the others become
/// zero-order holds of the raw waypoints. An empty mask fits everything.
///
/// Chunks with fewer than `degree + 1` rows fall back to degree `H - 1`.
pub fn smooth_chunk(chunk: &ActionChunk, degree: usize, mask: &[bool]) -> Result<PolynomialTrajectory, SmoothError> {
    smooth_chunk_with(chunk, degree, mask, DEFAULT_MAX_CONDITION)
}

pub fn smooth_chunk_with(
    chunk: &ActionChunk,
    degree: usize,
    mask: &[bool],
    max_condition: f64,
) -> Result<PolynomialTrajectory, SmoothError> {
    if !(1..=MAX_DEGREE).contains(&degree) {
        return Err(SmoothError::Argument(format!("degree {degree} outside 1..={MAX_DEGREE}")));
    }
    if !mask.is_empty() && mask.len() != chunk.dims() {
        return Err(SmoothError::Argument(format!("mask has {} entries for {} channels", mask.len(), chunk.dims())));
    }
    let h = chunk.len();
    let degree = degree.min(h - 1);
    let last = (h - 1) as f64;
    let times: Vec<f64> = (0..h).map(|k| k as f64 / last).collect();
    let fit = |i: usize| mask.get(i).copied().unwrap_or(true);

    let normal = if (0..chunk.dims()).any(fit) {
        Some(NormalEquations::factor(build_vandermonde(&times, degree)?, max_condition)?)
    } else {
        None
    };

    let mut channels = Vec::with_capacity(chunk.dims());
    for i in 0..chunk.dims() {
        let y: Vec<f64> = chunk.channel(i).collect();
        let ch = match &normal {
            Some(ne) if fit(i) => {
                Channel::Poly(ne.solve(&y).map_err(|e| SmoothError::Channel { index: i, source: Box::new(e) })?)
            }
            _ => Channel::Hold(y),
        };
        channels.push(ch);
    }
    let start = chunk.obs_time().secs();
    let scale = last / chunk.sample_rate();
    Ok(PolynomialTrajectory::with_channels(channels, start, scale, start, chunk.end_time())?)
}
