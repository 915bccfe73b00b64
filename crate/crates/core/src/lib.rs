//! One-dimensional CNN intrusion detection for IIoT network traffic.
//!
//! The crate covers the whole path from a raw flow CSV to evaluation
//! artifacts:
//!
//! - [`pipeline`]: load, clean (column drops, missing rows, duplicates),
//!   one-hot/label encoding, normalisation, stratified split, class counts.
//! - [`nn`]: a hand-written kernel for the Conv→Pool ×3, Dense, Dropout,
//!   Dense stack with analytic gradients and Adam.
//! - [`trainer`]: deterministic mini-batch training with per-epoch losses.
//! - [`metrics`]: confusion matrix, macro precision/recall/F1, timing.
//! - [`model_io`]: the `IDS1` model file.

pub mod error;
pub mod metrics;
pub mod model_io;
pub mod nn;
pub mod pipeline;
pub mod real;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, FormatError, Result};
pub use real::Real;
pub use tensor::Tensor;
