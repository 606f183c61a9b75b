//! One dosing trial: scene, both endpoints over loopback and a scripted
//! operator, stepped on the simulated clock until the operator is done.

use std::collections::BTreeMap;

use thiserror::Error;

use telehaptic_core::sim::{Scene, SceneState, SimError, SimEvent};
use telehaptic_protocol::{Direction, LoopbackSession, MasterConfig, SlaveConfig, WireRecord};

use crate::log::{
    state_digest, EndReason, Header, Record, TrialEvent, TrialLog, WireEntry, BUILD, LOG_FORMAT, LOG_VERSION,
};
use crate::metrics::{metrics_from_state, Metrics};
use crate::policy::{Observation, Operator, OperatorKind, Perception, Truth};
use crate::scenario::ScenarioSpec;

/// Interval between logged state snapshots.
pub const SNAPSHOT_INTERVAL_US: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("scene setup failed: {0}")]
    Scene(#[from] SimError),
}

#[derive(Debug, Clone)]
pub struct TrialRun {
    pub log: TrialLog,
    pub metrics: Metrics,
    pub final_state: SceneState,
}

pub fn slave_config(spec: &ScenarioSpec) -> SlaveConfig {
    SlaveConfig {
        gains: spec.gains.to_gains(),
        ..SlaveConfig::default()
    }
}

pub fn master_config(spec: &ScenarioSpec) -> MasterConfig {
    let mut cfg = MasterConfig::new(spec.home(), spec.scale());
    cfg.workspace.robot_reach_mm = spec.scene.reach_mm;
    cfg.initial_beaker_ml = spec.initial.beaker_ml;
    cfg.initial_tubes_ml = spec.initial.tubes_ml.clone();
    cfg.initial_grip = if spec.initial.start_grasped {
        spec.hold_opening()
    } else {
        1.0
    };
    cfg
}

/// Builds the scene a trial with `seed` starts from.
pub fn initial_scene(spec: &ScenarioSpec, seed: u64) -> Result<Scene, TrialError> {
    let hidden = spec.hidden(seed);
    Ok(Scene::new(spec.scene.clone(), &spec.initial_conditions(&hidden))?)
}

pub fn run_trial(spec: &ScenarioSpec, kind: OperatorKind, seed: u64) -> Result<TrialRun, TrialError> {
    run_trial_with(spec, kind, seed, Perception::new(spec))
}

/// Like [`run_trial`], reusing perception tables built for `spec`.
pub fn run_trial_with(
    spec: &ScenarioSpec,
    kind: OperatorKind,
    seed: u64,
    perception: Perception,
) -> Result<TrialRun, TrialError> {
    let hidden = spec.hidden(seed);
    let scene = initial_scene(spec, seed)?;
    let mut session = LoopbackSession::new(scene, slave_config(spec), master_config(spec), spec.latency_us);
    session.master.enable_tap();
    session.slave.enable_tap();
    let mut op = Operator::new(spec, kind, perception, seed);

    let mut records = vec![Record::Trial {
        t_us: 0,
        event: TrialEvent::TrialStart,
    }];
    let timeout = spec.timeout_us();
    let mut next_snapshot = 0;
    let end_reason = loop {
        let truth = (kind == OperatorKind::Oracle).then(|| {
            let l = &session.slave.scene().state().ledger;
            Truth {
                tubes_ml: l.tubes_ml.clone(),
                pipette_ml: l.pipette_ml,
            }
        });
        let t = session.step_with(|m, t| {
            if !m.command_due(t) {
                return;
            }
            let force = m.force();
            let obs = Observation {
                t_us: t,
                twin: m.twin(),
                ledger: m.ledger(),
                force_n: force.magnitude,
                force_stamp_us: force.timestamp_us,
                electrodes: m.electrodes(),
                truth,
            };
            let action = op.act(&obs);
            m.set_input(action.input);
        });
        let mut dropped = false;
        for (at, ev) in session.slave.take_events() {
            dropped |= matches!(ev, SimEvent::Dropped { .. });
            records.push(Record::SceneEvent { t_us: at, event: ev });
        }
        if t >= next_snapshot {
            records.push(Record::State {
                t_us: t,
                state: session.slave.scene().state().clone(),
            });
            next_snapshot = (t / SNAPSHOT_INTERVAL_US + 1) * SNAPSHOT_INTERVAL_US;
        }
        if dropped {
            records.push(Record::Trial {
                t_us: t,
                event: TrialEvent::Failure {
                    reason: "pipette dropped".into(),
                },
            });
            break EndReason::Dropped;
        }
        if op.is_done() {
            break EndReason::Done;
        }
        if t >= timeout {
            break EndReason::Timeout;
        }
    };
    let end_us = session.now_us();
    let completed = end_reason == EndReason::Done;
    records.push(Record::Trial {
        t_us: end_us,
        event: TrialEvent::TrialEnd {
            completed,
            reason: end_reason,
        },
    });
    let final_state = session.slave.scene().state().clone();
    records.push(Record::Final {
        t_us: end_us,
        digest: state_digest(&final_state),
        state: final_state.clone(),
    });
    records.extend(
        pair_wire(session.master.take_tap(), session.slave.take_tap())
            .into_iter()
            .map(Record::Wire),
    );
    // stable: same-time records keep their insertion order
    records.sort_by_key(|r| r.t_us());

    let metrics = metrics_from_state(spec, &final_state, end_us, completed, end_reason);
    let header = Header {
        format: LOG_FORMAT.into(),
        version: LOG_VERSION,
        build: BUILD.into(),
        spec_hash: spec.spec_hash(),
        condition: kind,
        seed,
        hidden,
        scenario: spec.clone(),
    };
    records.insert(0, Record::Header(header));
    records.push(Record::Metrics(metrics.clone()));
    Ok(TrialRun {
        log: TrialLog { records },
        metrics,
        final_state,
    })
}

/// Joins both endpoints' taps into one entry per message with its send
/// and receive times. Each side taps what it sends and what it reads.
fn pair_wire(master: Vec<WireRecord>, slave: Vec<WireRecord>) -> Vec<WireEntry> {
    let mut sent: BTreeMap<(Direction, u32), WireRecord> = BTreeMap::new();
    let mut recv: BTreeMap<(Direction, u32), u64> = BTreeMap::new();
    let is_send = |side_is_master: bool, dir: Direction| (dir == Direction::MasterToSlave) == side_is_master;
    for (side_is_master, tap) in [(true, master), (false, slave)] {
        for r in tap {
            let k = (r.dir, r.msg.seq);
            if is_send(side_is_master, r.dir) {
                sent.insert(k, r);
            } else {
                recv.entry(k).or_insert(r.time_us);
            }
        }
    }
    let mut out: Vec<WireEntry> = sent
        .into_iter()
        .map(|(k, r)| WireEntry::new(r.dir, &r.msg, r.time_us, recv.get(&k).copied()))
        .collect();
    out.sort_by_key(|e| (e.t_us, e.dir, e.seq));
    out
}
