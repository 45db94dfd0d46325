//! File formats, experiment configuration, and command pipelines around
//! the core library. The `xclr` binary is a thin argument-parsing layer
//! over [`pipeline`].

#![forbid(unsafe_code)]

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod labels;
pub mod pipeline;
pub mod report;
pub mod xmat;

pub use error::{CliError, Result};
