//! File formats, trace replay, reports and the command-line front end for
//! [`vidtel_core`].

pub mod cli;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod model_io;
pub mod replay;
pub mod report;
pub mod trace;

pub use error::{Error, Result};
