//! Haptic attention: an analytic tactile-glance simulator and a recurrent
//! attention network that learns where to touch next.
//!
//! The library is organized in layers:
//!
//! * [`nn`] — dense/LSTM layers over flat parameter storage, Nesterov SGD,
//!   finite-difference gradient checking, checkpoint io.
//! * [`sim`] — height-field objects, the rigid-sensor glance model, pressure
//!   image rendering, and the precomputed glance dataset.
//! * [`model`] — the attention network: tactile fusion, recurrent core,
//!   location policy, classifier and baseline heads, with full backprop.
//! * [`trainer`] — episode rollouts and the hybrid supervised/policy-gradient
//!   training loop.
//! * [`eval`] — accuracy measurement, model variants, ablations, attention
//!   heat maps, and report output.

pub mod cli;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod sim;
pub mod trainer;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
