//! Scenario runner for `gpx-core`: JSON scenario files in, CSV tables and a
//! JSON pass/fail report out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod run;

use thiserror::Error;

pub use config::{Overrides, Scenario};
pub use report::{emit_report, Check, Report};
pub use run::{run_filtered, run_scenario};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("task {task} failed: {source}")]
    Task {
        task: String,
        #[source]
        source: gpx_core::GpxError,
    },

    #[error(transparent)]
    Core(#[from] gpx_core::GpxError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scenario files shipped with the binary and replayed by `gpx verify`.
pub const GOLDEN: &[(&str, &str)] = &[
    ("example1d", include_str!("../configs/example1d.json")),
    ("example3d", include_str!("../configs/example3d.json")),
    ("example3d-separable", include_str!("../configs/example3d-separable.json")),
];
