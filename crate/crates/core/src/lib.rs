//! Multi-task learning with learned loss weighting and auxiliary tasks.
//!
//! The crate contains a small reverse-mode autodiff engine over `f64`
//! tensors, the task losses and their learned combination, a shared-encoder
//! network with per-task decoder heads, a procedural road-scene generator
//! with a spatially buffered train/test split, evaluation metrics, and an
//! Adam-based trainer that runs task-set comparison experiments.

pub mod autodiff;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod scenegen;
pub mod task;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use task::{TaskId, TaskSet};
pub use tensor::Tensor;
