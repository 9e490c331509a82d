//! File formats, checkpoints, multi-threaded paths and the command-line
//! interface around [`ccfc_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod ids;
pub mod io;
pub mod parallel;

pub use error::{Error, Result};
