//! Asynchronous linker between chunk-emitting action policies and real-time
//! motion control.
//!
//! - [`smoother`] fits each incoming action chunk with a low-order polynomial.
//! - [`fuser`] aligns a new trajectory against the one being executed and
//!   bridges them with a C²-continuous dual-quintic blend.
//! - [`runtime`] is the client executive: control ticks, chunk integration
//!   and execution time scaling, plus a threaded live runner.
//! - [`protocol`] is the request/response wire format and its endpoints.

pub mod fuser;
pub mod linalg;
pub mod protocol;
pub mod runtime;
pub mod smoother;
pub mod trajectory;

pub use trajectory::{ActionChunk, Evaluate, Order, Timestamp, Trajectory};
