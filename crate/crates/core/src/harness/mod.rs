//! Config-driven experiment runs, report persistence, and the regression
//! suite.

mod config;
mod runner;
mod suite;

pub use config::{
    set_path, D1FlowParams, EntropyTransportParams, ExperimentConfig, ExperimentKind, Fixture, GaugeParams,
    InterpolationParams, JacobianParams, KindParams, LadderParams, PolarParams, SubmartingaleParams, TalagrandParams,
};
pub use runner::{execute, output_root, persist, run, Check, Outcome, RunRecord, ARTIFACT_VERSION, DEFAULT_OUT, OUT_ENV};
pub use suite::{suite, Manifest, RunStatus, SuiteRow, SuiteSummary};

use crate::error::Error;

/// Environment variable fixing the worker thread count.
pub const THREADS_ENV: &str = "WTRANSPORT_THREADS";

/// Exit status of a run whose checks did not all pass.
pub const EXIT_FAILED: i32 = 1;

/// Process exit status for an error, one per error family.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidPreset { .. } => 2,
        Error::DimensionOverflow { .. } | Error::DimensionMismatch { .. } => 3,
        Error::Solver(_)
        | Error::Sampling(_)
        | Error::NotNormalized { .. }
        | Error::NotPositiveDefinite(_)
        | Error::NotInvertible(_)
        | Error::NotOneConvex { .. }
        | Error::InvalidDensityValue { .. } => 4,
        Error::InvalidArgument(_)
        | Error::Unsupported(_)
        | Error::Config(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 5,
    }
}
