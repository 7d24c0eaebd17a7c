//! Stage functions behind the `sigver` command-line tool.
//!
//! ```text
//! datagen -> preprocess -> train-wi -> extract -> [gridsearch] -> train-wd -> evaluate
//! ```
//!
//! Every stage reads its inputs from the work directory named in the run
//! configuration and writes versioned artifacts next to a `provenance.txt`
//! holding the configuration digest.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use stages::Context;
