//! Model-structured neural steering controllers, their benchmarks, a
//! synthetic telemetry simulator and the training and evaluation pipeline.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod grad;
pub mod models;
pub mod simulator;
pub mod telemetry;
pub mod training;

pub use error::{Error, Result};
