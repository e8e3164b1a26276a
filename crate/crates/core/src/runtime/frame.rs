use crate::trajectory::Timestamp;

/// One state acquisition: proprioception plus the opaque task context a
/// policy conditions on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationFrame {
    pub timestamp: Timestamp,
    /// Joint state, one value per action channel.
    pub joint_positions: Vec<f64>,
    /// Language instruction, carried but never interpreted here.
    pub instruction: String,
    /// Visual payload, carried as opaque bytes (may be empty).
    pub visual: Vec<u8>,
}

impl ObservationFrame {
    pub fn new(timestamp: Timestamp, joint_positions: Vec<f64>) -> Self {
        Self { timestamp, joint_positions, ..Default::default() }
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.instruction = instruction.into();
        self
    }
}
