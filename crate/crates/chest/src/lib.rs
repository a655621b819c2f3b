//! Combined hyperbolic and Euclidean soft-triple metric learning.

pub mod checks;
pub mod cli;
pub mod data;
pub mod defaults;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod grad;
pub mod losses;
pub mod model;
pub mod scalar;
pub mod tape;
pub mod train;

pub use error::{ChestError, Result};
