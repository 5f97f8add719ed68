//! Dual invariance self-training for clip classification.

pub mod augment;
pub mod clipset;
pub mod config;
pub mod error;
pub mod eval;
pub mod frames;
pub mod invariance;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod reliability;
pub mod report;
pub mod sampling;
pub mod seed;
pub mod timeline;
pub mod trainer;

pub use error::{DistError, Result};
