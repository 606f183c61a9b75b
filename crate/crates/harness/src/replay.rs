//! Re-executes a trial log's command stream against a fresh slave and
//! checks the result against the logged final state.
//!
//! Each master message is applied at its logged receive time, after the
//! slave has run every tick due strictly before that time, which is the
//! order a live slave polled once per instant sees.

use thiserror::Error;

use telehaptic_core::sim::SceneState;
use telehaptic_protocol::{Direction, NullTransport, SlaveEndpoint};

use crate::log::{state_digest, TrialLog, LOG_FORMAT, LOG_VERSION};
use crate::metrics::{compute_metrics, metrics_from_state, Metrics, MetricsError};
use crate::scenario::ScenarioSpec;
use crate::trial::{initial_scene, slave_config, TrialError};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log format '{found}' is not a trial log")]
    Format { found: String },
    #[error("log version {found} cannot be replayed by this build (version {LOG_VERSION})")]
    Version { found: u32 },
    #[error("log was recorded for scenario {logged}, not the given one ({given})")]
    SpecMismatch { logged: String, given: String },
    #[error("log header is inconsistent: {0}")]
    Header(String),
    #[error("log has no header")]
    MissingHeader,
    #[error("log is incomplete: {0}")]
    Incomplete(#[from] MetricsError),
    #[error("replay diverged: {0}")]
    Divergence(String),
    #[error(transparent)]
    Trial(#[from] TrialError),
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub final_state: SceneState,
    pub metrics: Metrics,
    pub commands_applied: usize,
}

/// Replays `log`. With `spec`, the log must have been recorded for it.
pub fn replay(log: &TrialLog, spec: Option<&ScenarioSpec>) -> Result<ReplayOutcome, ReplayError> {
    let h = log.header().ok_or(ReplayError::MissingHeader)?;
    if h.format != LOG_FORMAT {
        return Err(ReplayError::Format {
            found: h.format.clone(),
        });
    }
    if h.version != LOG_VERSION {
        return Err(ReplayError::Version { found: h.version });
    }
    let logged_hash = h.scenario.spec_hash();
    if logged_hash != h.spec_hash {
        return Err(ReplayError::Header("embedded scenario does not match its hash".into()));
    }
    if let Some(s) = spec {
        if s.spec_hash() != h.spec_hash {
            return Err(ReplayError::SpecMismatch {
                logged: h.spec_hash.clone(),
                given: s.spec_hash(),
            });
        }
    }
    let spec = &h.scenario;
    if spec.hidden(h.seed) != h.hidden {
        return Err(ReplayError::Header(
            "hidden parameters do not follow from the seed".into(),
        ));
    }
    let (final_us, digest, logged_state) = log.final_record().ok_or(MetricsError::NoFinalState)?;

    let mut commands: Vec<_> = log.wire().filter(|w| w.dir == Direction::MasterToSlave).collect();
    // every message the master sent is logged once, so seqs run 0..n
    commands.sort_by_key(|w| w.seq);
    for (i, w) in commands.iter().enumerate() {
        if w.seq as usize != i {
            return Err(ReplayError::Divergence(format!(
                "master message seq {i} is missing from the log"
            )));
        }
    }
    let mut delivered: Vec<_> = commands.into_iter().filter_map(|w| w.recv_us.map(|t| (t, w))).collect();
    delivered.sort_by_key(|(t, w)| (*t, w.seq));

    let scene = initial_scene(spec, h.seed)?;
    let mut slave = SlaveEndpoint::new(scene, NullTransport, slave_config(spec), 0);
    let mut applied = 0;
    let mut last_t = None;
    for (t, w) in &delivered {
        let msg = w
            .message()
            .ok_or_else(|| ReplayError::Divergence(format!("master message seq {} has no payload", w.seq)))?;
        if last_t != Some(*t) {
            if *t > 0 {
                slave.advance(t - 1);
            }
            last_t = Some(*t);
        }
        slave.apply_message(msg, *t);
        applied += 1;
    }
    slave.advance(final_us);

    let state = slave.scene().state().clone();
    if state_digest(&state) != digest || &state != logged_state {
        return Err(ReplayError::Divergence(format!(
            "final state differs from the log (replayed {}, logged {digest})",
            state_digest(&state)
        )));
    }
    let logged = compute_metrics(log, spec)?;
    let (end_us, completed, reason) = log.trial_end().unwrap_or((final_us, false, logged.end));
    let metrics = metrics_from_state(spec, &state, end_us, completed, reason);
    if log.metrics().next() != Some(&metrics) {
        return Err(ReplayError::Divergence("metrics differ from the logged block".into()));
    }
    Ok(ReplayOutcome {
        final_state: state,
        metrics,
        commands_applied: applied,
    })
}
