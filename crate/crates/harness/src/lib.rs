//! Scenario runner and verification harness for the nigelpark stack.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod mapping_run;
pub mod nav;
pub mod planner;
pub mod plot;
pub mod repeatability;
pub mod replay;
pub mod report;
pub mod scenario;
pub mod verify;
pub mod worlds;

pub use error::{HarnessError, Result};
pub use mapping_run::{run_mapping, MappingOutput};
pub use nav::{navigate, FailureCause, TrialResult};
pub use repeatability::{compute_repeatability, RepeatabilityReport};
pub use replay::run_replay_stage;
pub use report::Report;
pub use scenario::{Mode, Perturbation, Scenario, Stage, Tolerances};
pub use verify::{run_trial, verify, RunOptions};
