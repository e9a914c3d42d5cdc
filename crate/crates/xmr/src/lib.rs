//! File formats, configuration and pipeline commands around `xmr-core`.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
