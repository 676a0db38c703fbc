//! File formats, dataset loaders, the staged pipeline and the command-line
//! interface around [`neuropath_core`].

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod error;
pub mod model_io;
pub mod parallel;
pub mod pipeline;

pub use error::{Error, Result};
pub use neuropath_core as core;
