//! LSTM sequence classification with exact per-word decompositions of the output,
//! phrase-pattern distillation and a first-match rules classifier built from the patterns.
//!
//! All numerics are `f64`. Multiplicative word contributions are kept as logs throughout.

pub mod corpus;
pub mod importance;
pub mod error;
pub mod heatmap;
pub mod linalg;
pub mod lstm;
pub mod model_io;
pub mod phrases;
pub mod qa;
pub mod rules;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
