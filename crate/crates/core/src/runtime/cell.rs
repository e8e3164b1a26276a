use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, RwLock};

use crate::trajectory::{Timestamp, Trajectory};

/// A trajectory together with the swap that installed it.
#[derive(Debug)]
pub struct Installed {
    pub generation: u64,
    pub trajectory: Trajectory,
}

/// The active trajectory shared between the control task (reader) and the
/// chunk integrator (writer).
///
/// Readers take an `Arc` snapshot, so a control tick always evaluates exactly
/// one installed trajectory no matter when a swap lands. The lock is held
/// only long enough to clone or replace the pointer.
#[derive(Debug)]
pub struct ActiveTrajectoryCell {
    slot: RwLock<Option<Arc<Installed>>>,
    anchor: Timestamp,
    generations: AtomicU64,
}

impl ActiveTrajectoryCell {
    /// Empty cell; `anchor` is the wall time at which trajectory time and
    /// wall time coincide.
    pub fn new(anchor: Timestamp) -> Self {
        Self { slot: RwLock::new(None), anchor, generations: AtomicU64::new(0) }
    }

    pub fn anchor(&self) -> Timestamp {
        self.anchor
    }

    pub fn load(&self) -> Option<Arc<Installed>> {
        self.slot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Installs `trajectory` and returns its generation (1, 2, ...).
    pub fn store(&self, trajectory: Trajectory) -> u64 {
        let generation = self.generations.fetch_add(1, AtomicOrdering::Relaxed) + 1;
        let next = Arc::new(Installed { generation, trajectory });
        *self.slot.write().unwrap_or_else(|p| p.into_inner()) = Some(next);
        generation
    }

    pub fn is_empty(&self) -> bool {
        self.load().is_none()
    }
}
