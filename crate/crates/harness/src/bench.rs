//! Repeated trials per feedback condition, summarised as mean and SD.

use rayon::prelude::*;
use serde::Serialize;

use crate::metrics::Metrics;
use crate::policy::{FeedbackCondition, OperatorKind, Perception};
use crate::scenario::ScenarioSpec;
use crate::trial::{run_trial_with, TrialError};

pub const CSV_HEADER: &str = "condition,trials,mean_error,sd_error,mean_time_s,sd_time_s";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub condition: OperatorKind,
    pub trials: usize,
    pub completed: usize,
    pub mean_error: f64,
    pub sd_error: f64,
    pub mean_time_s: f64,
    pub sd_time_s: f64,
}

impl ConditionSummary {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.3},{:.3}",
            self.condition, self.trials, self.mean_error, self.sd_error, self.mean_time_s, self.sd_time_s
        )
    }
}

/// Mean and sample SD; SD is 0 for fewer than two values.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn summarize(condition: OperatorKind, runs: &[Metrics]) -> ConditionSummary {
    let errors: Vec<f64> = runs.iter().map(|m| m.relative_error).collect();
    let times: Vec<f64> = runs.iter().map(|m| m.task_time_s).collect();
    let (mean_error, sd_error) = mean_sd(&errors);
    let (mean_time_s, sd_time_s) = mean_sd(&times);
    ConditionSummary {
        condition,
        trials: runs.len(),
        completed: runs.iter().filter(|m| m.completed).count(),
        mean_error,
        sd_error,
        mean_time_s,
        sd_time_s,
    }
}

/// Runs `trials` seeds starting at `first_seed` for every kind, in
/// parallel. Results do not depend on the thread count.
pub fn run_bench(
    spec: &ScenarioSpec,
    kinds: &[OperatorKind],
    first_seed: u64,
    trials: usize,
) -> Result<Vec<(OperatorKind, Vec<Metrics>)>, TrialError> {
    let perception = Perception::new(spec);
    let jobs: Vec<(usize, u64)> = (0..kinds.len())
        .flat_map(|k| (0..trials as u64).map(move |i| (k, first_seed + i)))
        .collect();
    let results: Vec<Metrics> = jobs
        .par_iter()
        .map(|&(k, seed)| run_trial_with(spec, kinds[k], seed, perception.clone()).map(|r| r.metrics))
        .collect::<Result<_, _>>()?;
    let mut out: Vec<(OperatorKind, Vec<Metrics>)> = kinds.iter().map(|&k| (k, Vec::new())).collect();
    for ((k, _), m) in jobs.into_iter().zip(results) {
        out[k].1.push(m);
    }
    Ok(out)
}

pub fn scripted_kinds() -> Vec<OperatorKind> {
    FeedbackCondition::ALL
        .iter()
        .map(|&c| OperatorKind::Scripted(c))
        .collect()
}

pub fn to_csv(summaries: &[ConditionSummary]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for row in summaries {
        s.push_str(&row.csv_row());
        s.push('\n');
    }
    s
}
