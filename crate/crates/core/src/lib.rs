//! PAGE with arbitrary unbiased samplings.
//!
//! The crate is organized bottom-up: [`objective`] defines finite-sum
//! problems and their smoothness constants, [`sampling`] the estimators and
//! their variance constants, [`page`] the optimizer and its theoretical
//! parameters, [`taskgen`] and [`data`] concrete problems, and [`harness`]
//! experiment orchestration shared with the command-line tool.

pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objective;
pub mod page;
pub mod sampling;
pub mod taskgen;

pub use error::{Error, Result};
pub use objective::{
    GroupedProblem, Point, Problem, ProblemKind, SmoothnessMethod, SmoothnessReport,
    WeightedConstants,
};
pub use page::{OutputRule, PageConfig, Trace, TraceRecord};
pub use sampling::{Draw, SamplingKind, SamplingSpec};
