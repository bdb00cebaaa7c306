//! Configuration, drivers and file output behind the `sbdf` command.

pub mod config;
pub mod error;
pub mod output;
pub mod runs;

pub use config::Settings;
pub use error::{HarnessError, Result};
