//! Client executive: control ticks, chunk integration and time scaling.

mod cell;
mod config;
mod frame;
mod linker;
pub mod live;

pub use cell::{ActiveTrajectoryCell, Installed};
pub use config::{ConfigError, LinkerConfig, Strategy};
pub use frame::ObservationFrame;
pub use linker::{
    accelerate_time, control_tick, integrate_chunk, linear_waypoints, ChunkOutcome, ChunkReport, Command,
    DiscardReason, HandState, Tick, TickRecord, TickState,
};
