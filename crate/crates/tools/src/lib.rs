//! File formats and the command-line front end for `lieccm`.

pub mod certificate;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod sdpa;

pub use error::{ToolError, EXIT_FAILURE, EXIT_INPUT, EXIT_OK};
