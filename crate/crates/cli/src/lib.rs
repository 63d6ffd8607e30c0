//! Config parsing, study runners and SVG output behind the `ntsim` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod run;
pub mod svg;

pub use config::{parse_config, RunConfig, Study};
pub use error::CliError;
pub use run::{plot_csv, run, RunManifest};
