//! Dosing accuracy and task time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use telehaptic_core::sim::SceneState;

use crate::log::{state_digest, EndReason, TrialLog};
use crate::scenario::ScenarioSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Volume added to every tube, ml.
    pub dispensed_ml: Vec<f64>,
    /// Mean of `|dispensed - target| / target` over the dosing tubes.
    pub relative_error: f64,
    pub task_time_s: f64,
    pub squeeze_count: u32,
    pub spill_ml: f64,
    pub completed: bool,
    pub end: EndReason,
    pub final_digest: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("log has no final state record")]
    NoFinalState,
}

pub fn relative_error(dispensed_ml: f64, target_ml: f64) -> f64 {
    (dispensed_ml - target_ml).abs() / target_ml
}

/// Metrics of a trial that ended at `end_us` in `state`.
pub fn metrics_from_state(
    spec: &ScenarioSpec,
    state: &SceneState,
    end_us: u64,
    completed: bool,
    end: EndReason,
) -> Metrics {
    let dispensed_ml: Vec<f64> = state
        .ledger
        .tubes_ml
        .iter()
        .zip(&spec.initial.tubes_ml)
        .map(|(now, start)| now - start)
        .collect();
    let relative_error = spec
        .dose_tubes
        .iter()
        .map(|&i| relative_error(dispensed_ml[i], spec.target_volume_ml))
        .sum::<f64>()
        / spec.dose_tubes.len() as f64;
    Metrics {
        dispensed_ml,
        relative_error,
        task_time_s: end_us as f64 * 1e-6,
        squeeze_count: state.squeeze_count,
        spill_ml: state.ledger.spill_ml,
        completed,
        end,
        final_digest: state_digest(state),
    }
}

/// Recomputes metrics from a log's final state and end marker. A log
/// without an end marker yields partial metrics timed at its final state.
pub fn compute_metrics(log: &TrialLog, spec: &ScenarioSpec) -> Result<Metrics, MetricsError> {
    let (final_us, _, state) = log.final_record().ok_or(MetricsError::NoFinalState)?;
    let (end_us, completed, reason) = log.trial_end().unwrap_or((final_us, false, EndReason::Timeout));
    Ok(metrics_from_state(spec, state, end_us, completed, reason))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn relative_error_examples() {
        assert!(close(relative_error(2.07, 2.0), 0.035));
        assert_eq!(relative_error(2.0, 2.0), 0.0);
        assert!(close(relative_error(1.8, 2.0), 0.10));
        assert!(relative_error(0.0, 2.0) >= 0.0);
    }
}
