//! File formats and the command-line front end for `clusternet-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod idx;
pub mod log;
pub mod table;

mod error;

pub use error::{Error, Result};
