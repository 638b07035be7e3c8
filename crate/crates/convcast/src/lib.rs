//! Next-day direction forecasting for stock indices with a small,
//! self-contained neural-network engine.
//!
//! Placeholder module docs; expanded as modules land.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod ingest;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
