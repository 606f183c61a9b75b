//! Scripted-operator dosing trials over the telehaptic link, with trial
//! logs, replay, benchmarks and the live server behind the `telehaptic` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod log;
pub mod metrics;
pub mod perception;
pub mod policy;
pub mod replay;
pub mod scenario;
pub mod serve;
pub mod trial;

pub use log::{TrialLog, LOG_VERSION};
pub use metrics::{compute_metrics, Metrics};
pub use policy::{FeedbackCondition, OperatorKind};
pub use scenario::ScenarioSpec;
pub use trial::{run_trial, TrialRun};
