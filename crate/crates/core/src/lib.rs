//! Contextual listen-attend-spell (CLAS) and finite-state contextual biasing.
//!
//! The crate is `no_std` with `alloc`. File formats, command-line tooling and
//! anything touching the filesystem live in the `clas` companion crate.

#![no_std]

extern crate alloc;

pub mod conditioning;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod fst;
pub mod model;
pub mod optim;
pub mod sampler;
pub mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
