//! File formats, the corpus pipeline, the command line and the HTTP
//! recommendation service built on `conceptlm-core`.

pub mod canonical;
mod error;
pub mod eval;
pub mod files;
pub mod pipeline;
pub mod service;
pub mod synth;
pub mod xmi;

pub use conceptlm_core as core;
pub use error::{Error, Result};
