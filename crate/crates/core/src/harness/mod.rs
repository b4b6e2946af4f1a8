//! Experiment orchestration behind the command-line tool: versioned configs,
//! theoretical parameter selection, seeded parallel runs, CSV traces with
//! seed-aggregated bands, sweeps, sampling verification and constant
//! reports.

mod chart;
mod commands;
mod config;
mod plan;
mod run;

pub use chart::{render_svg, write_svg};
pub use commands::{
    cmd_constants, cmd_generate, cmd_run, cmd_sweep, cmd_verify, constants_for, random_spec,
    CheckMode, ConstantsReport, GenerateParams, GenerateReport, MethodRow, RateRow, SweepRow,
    VerifyLine, VerifyParams, VerifyReport, EXACT_TOL, MC_SE, VERIFY_KINDS,
};
pub use config::{
    default_seeds, DatasetSource, ExampleSource, ExperimentConfig, GeneratorSource, Grid, Method,
    MethodConfig, OutputChoice, ProblemSource, Schedule, SweepConfig, TaskSource,
    CONFIG_FORMAT_VERSION,
};
pub use plan::{load_problem, method_constants, plan, sampling_for, LoadedProblem, Plan, PlanSummary};
pub use run::{
    aggregate, median, quantile, read_aggregate_csv, read_trace_csv, run_experiment, run_loaded,
    write_aggregate_csv, write_outcome, write_trace_csv, AggregateRow, CsvRecord, RunOutcome,
    AGGREGATE_POINTS,
};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Process exit code for an error: divergence is 3, everything else is a
/// configuration or input problem (1). Verification failures are reported
/// through [`VerifyReport::passed`] and map to 2.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}
