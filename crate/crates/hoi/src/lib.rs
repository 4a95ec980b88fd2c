//! File formats, run directories and command implementations for the
//! `hoi` command-line tool. The algorithms live in `hoi-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod plot;
pub mod run;

pub use error::{HoiError, Result};
