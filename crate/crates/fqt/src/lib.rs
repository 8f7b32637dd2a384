//! Sweeps, CRAB optimization runs and the validation suite for the Floquet
//! thermal transistor, with CSV, SVG and JSON output.

pub mod config;
pub mod error;
pub mod optimize;
pub mod oracle;
pub mod presets;
pub mod record;
pub mod svg;
pub mod sweep;
pub mod validate;

pub use config::{Mode, Overrides, Protocol, RunConfig};
pub use error::CliError;
