//! Multi-view urban region embeddings.
//!
//! The pipeline builds four region dependency graphs (origin and
//! destination mobility, POI function, check-in semantics), cleanses them
//! with a trainable soft threshold, aggregates each view with global
//! multi-head cosine attention, fuses the views through a shared
//! key/value memory and a gated blend, and trains everything end to end
//! on three reconstruction objectives. [`evaluation`] holds the downstream
//! regression and clustering harness.

pub mod adam;
pub mod aggregation;
pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod gradcheck;
pub mod graph;
pub mod math;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{DataError, EvalError, MathError, TrainError};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
