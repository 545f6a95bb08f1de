//! Files, command line and service client around [`uvfuse_core`].

pub mod config;
pub mod error;
pub mod obj;
pub mod pipeline;
pub mod png;
pub mod remote;
pub mod schedule;
pub mod wire;

pub use error::{Error, Result};
pub use uvfuse_core as core;
