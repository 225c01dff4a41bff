//! Experiment driver for the two-phase MHD solver: configuration, the bundled
//! experiments and their file outputs.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{parse_config, preset_with_overrides, ExperimentKind, RunConfig};
pub use experiments::{run, Summary};

/// Coarse failure category for the machine-readable error line.
pub fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return "io";
        }
        if cause.is::<chmhd_core::SchemeError>() || cause.is::<chmhd_core::SparseError>() {
            return "solver";
        }
        if cause.is::<chmhd_core::diagnostics::DiagnosticsError>() {
            return "diagnostics";
        }
        if cause.is::<chmhd_core::MeshError>() {
            return "config";
        }
    }
    "config"
}
