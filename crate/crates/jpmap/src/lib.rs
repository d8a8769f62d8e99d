//! File formats, data loading and the `jpmap` command-line tool built on
//! [`jpmap_core`].

pub mod benchmark;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod idx;
pub mod manifest;
pub mod methods;
pub mod metrics;
pub mod pgm;
pub mod problems;

pub use error::{FormatError, Result};
