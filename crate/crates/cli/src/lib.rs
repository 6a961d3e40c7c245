//! File formats, image IO and the `ringcli` commands on top of `ring_core`.

pub mod commands;
pub mod error;
pub mod formats;
pub mod image;

pub use error::{CliError, Result};
