//! Neural-network primitives over flat parameter storage.
//!
//! All trainable state lives in one `Vec<f64>` described by a [`Layout`] of
//! named blocks. Layers hold block ids and borrow views on demand, which keeps
//! the optimizer, gradient checker and checkpoint io generic over any model.

pub mod activation;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod lstm;
pub mod optim;
pub mod params;

pub use dense::Dense;
pub use lstm::{Lstm, LstmState};
pub use optim::{LrSchedule, NesterovSgd};
pub use params::{BlockId, Layout, ParamStore};
