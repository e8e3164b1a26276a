use super::{Timestamp, TrajectoryError};

/// `H × m` matrix of target actions predicted from one observation.
///
/// Row `k` is the target for `obs_time + k / sample_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    obs_time: Timestamp,
    sample_rate: f64,
    dims: usize,
    actions: Vec<f64>,
}

impl ActionChunk {
    pub fn new(obs_time: Timestamp, sample_rate: f64, rows: Vec<Vec<f64>>) -> Result<Self, TrajectoryError> {
        let dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(TrajectoryError::Argument("ragged action rows".into()));
        }
        Self::from_flat(obs_time, sample_rate, dims, rows.concat())
    }

    /// Builds from row-major data.
    pub fn from_flat(
        obs_time: Timestamp,
        sample_rate: f64,
        dims: usize,
        actions: Vec<f64>,
    ) -> Result<Self, TrajectoryError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(TrajectoryError::Argument(format!("sample rate {sample_rate} must be > 0")));
        }
        if !obs_time.secs().is_finite() {
            return Err(TrajectoryError::Argument("non-finite observation time".into()));
        }
        if dims == 0 {
            return Err(TrajectoryError::Argument("chunk needs at least one channel".into()));
        }
        if !actions.len().is_multiple_of(dims) {
            return Err(TrajectoryError::Argument(format!(
                "{} values do not form rows of width {dims}",
                actions.len()
            )));
        }
        if actions.len() / dims < 2 {
            return Err(TrajectoryError::Argument("chunk needs at least two rows".into()));
        }
        if let Some(i) = actions.iter().position(|v| !v.is_finite()) {
            return Err(TrajectoryError::Argument(format!(
                "non-finite action at row {} channel {}",
                i / dims,
                i % dims
            )));
        }
        Ok(Self { obs_time, sample_rate, dims, actions })
    }

    pub fn obs_time(&self) -> Timestamp {
        self.obs_time
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Horizon `H`.
    pub fn len(&self) -> usize {
        self.actions.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Channel count `m`.
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.actions[k * self.dims..(k + 1) * self.dims]
    }

    pub fn channel(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.actions.iter().skip(i).step_by(self.dims).copied()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.actions
    }

    /// Time of row `k` on the chunk's own clock.
    pub fn row_time(&self, k: usize) -> f64 {
        self.obs_time.secs() + k as f64 / self.sample_rate
    }

    /// Last row time.
    pub fn end_time(&self) -> f64 {
        self.row_time(self.len() - 1)
    }

    /// Drops the first `k` rows and re-stamps the remainder so row 0 keeps
    /// its original time. Returns `None` if fewer than two rows survive.
    pub fn drop_leading(&self, k: usize) -> Option<ActionChunk> {
        if k + 2 > self.len() {
            return None;
        }
        Some(ActionChunk {
            obs_time: Timestamp::from_secs(self.row_time(k)),
            sample_rate: self.sample_rate,
            dims: self.dims,
            actions: self.actions[k * self.dims..].to_vec(),
        })
    }
}
