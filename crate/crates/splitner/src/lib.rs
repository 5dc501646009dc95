//! Files, configuration, benchmarking and the command line around
//! [`splitner_core`].

pub mod bench;
pub mod cli;
pub mod config;
mod error;
pub mod infer;
pub mod io;

pub use error::{Error, Result};
