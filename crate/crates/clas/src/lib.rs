//! Files, configuration and experiment drivers for `clas-core`: checkpoint
//! and feature formats, utterance manifests, compiled-context files, the run
//! configuration, corpus generation, training, and the experiment battery
//! behind the command line.

pub mod battery;
pub mod checkpoint;
pub mod config;
pub mod context_file;
pub mod data;
pub mod error;
pub mod manifest;
pub mod recipe;
pub mod sweep;

pub use error::{Error, Result};
