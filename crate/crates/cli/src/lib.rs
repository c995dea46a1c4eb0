//! Batch runner for flat-layer inverse scattering experiments: TOML
//! configuration, the `phantom → synthesize → invert → evaluate` stages,
//! timing benchmarks, and JSON provenance manifests.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod manifest;
pub mod run;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;
