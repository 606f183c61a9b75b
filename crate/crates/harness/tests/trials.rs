use std::collections::BTreeSet;

use proptest::prelude::*;
use telehaptic_harness::log::{EndReason, Record, TrialLog};
use telehaptic_harness::metrics::compute_metrics;
use telehaptic_harness::replay::{replay, ReplayError};
use telehaptic_harness::{run_trial, FeedbackCondition, OperatorKind, ScenarioSpec, LOG_VERSION};
use telehaptic_protocol::Direction;

fn vfe() -> OperatorKind {
    OperatorKind::Scripted(FeedbackCondition::VFE)
}

fn check_log_shape(log: &TrialLog) {
    assert!(matches!(log.records.first(), Some(Record::Header(_))));
    assert!(matches!(log.records.last(), Some(Record::Metrics(_))));
    assert_eq!(log.metrics().count(), 1);
    let stamps: Vec<u64> = log.records.iter().filter_map(|r| r.t_us()).collect();
    assert!(stamps.windows(2).all(|w| w[0] <= w[1]), "timestamps go backwards");
    // every message once: sequence numbers per direction are exactly 0..n
    for dir in [Direction::MasterToSlave, Direction::SlaveToMaster] {
        let seqs: Vec<u32> = log.wire().filter(|w| w.dir == dir).map(|w| w.seq).collect();
        let set: BTreeSet<u32> = seqs.iter().copied().collect();
        assert_eq!(set.len(), seqs.len(), "{dir:?} message logged twice");
        assert_eq!(set.iter().copied().last(), Some(seqs.len() as u32 - 1), "{dir:?} gap");
    }
    for w in log.wire() {
        assert_eq!(w.delivered, w.recv_us.is_some());
        if let Some(r) = w.recv_us {
            assert!(r >= w.t_us);
        }
        assert!(w.payload.is_some() != w.digest.is_some());
        if w.dir == Direction::MasterToSlave {
            assert!(w.payload.is_some());
        }
    }
}

#[test]
fn oracle_doses_within_two_percent() {
    let spec = ScenarioSpec::default();
    for seed in 0..5 {
        let run = run_trial(&spec, OperatorKind::Oracle, seed).unwrap();
        assert!(run.metrics.completed);
        assert!(run.metrics.relative_error <= 0.02, "seed {seed}: {:?}", run.metrics);
        assert!(run.metrics.task_time_s > 0.0);
        assert_eq!(run.metrics.spill_ml, 0.0);
        let total = run.final_state.ledger.total_ml();
        assert!((total - 50.0).abs() < 1e-9);
    }
}

#[test]
fn logs_are_complete_and_replay_exactly() {
    let spec = ScenarioSpec::default();
    for (i, kind) in FeedbackCondition::ALL
        .iter()
        .map(|&c| OperatorKind::Scripted(c))
        .chain([OperatorKind::Oracle])
        .enumerate()
    {
        let run = run_trial(&spec, kind, 100 + i as u64).unwrap();
        check_log_shape(&run.log);
        assert_eq!(compute_metrics(&run.log, &spec).unwrap(), run.metrics);
        let parsed = TrialLog::read_jsonl(&run.log.to_jsonl()[..]).unwrap();
        assert_eq!(parsed, run.log);
        let out = replay(&parsed, Some(&spec)).unwrap();
        assert_eq!(out.final_state, run.final_state);
        assert_eq!(out.metrics, run.metrics);
    }
}

#[test]
fn deleted_command_is_detected() {
    let spec = ScenarioSpec::default();
    let run = run_trial(&spec, vfe(), 3).unwrap();
    let mut log = run.log.clone();
    let victim = log
        .records
        .iter()
        .position(|r| matches!(r, Record::Wire(w) if w.dir == Direction::MasterToSlave && w.msg_type == "gripper_command" && w.t_us > 5_000_000))
        .unwrap();
    log.records.remove(victim);
    assert!(matches!(replay(&log, None), Err(ReplayError::Divergence(_))));
}

#[test]
fn altered_command_diverges_on_state() {
    let spec = ScenarioSpec::default();
    let run = run_trial(&spec, vfe(), 4).unwrap();
    let mut log = run.log.clone();
    for r in log.records.iter_mut() {
        if let Record::Wire(w) = r {
            if w.msg_type == "tcp_command" && w.t_us > 3_000_000 {
                if let Some(telehaptic_protocol::Payload::TcpCommand { pose }) = w.payload.as_mut() {
                    pose[0] += 1000;
                }
                break;
            }
        }
    }
    let err = replay(&log, None).unwrap_err();
    assert!(
        matches!(err, ReplayError::Divergence(ref m) if m.contains("final state")),
        "{err}"
    );
}

#[test]
fn version_and_spec_mismatch_are_reported() {
    let spec = ScenarioSpec::default();
    let run = run_trial(&spec, vfe(), 5).unwrap();
    let mut log = run.log.clone();
    if let Record::Header(h) = &mut log.records[0] {
        h.version = LOG_VERSION + 1;
    }
    assert!(matches!(replay(&log, None), Err(ReplayError::Version { .. })));

    let mut other = spec.clone();
    other.target_volume_ml = 1.0;
    assert!(matches!(
        replay(&run.log, Some(&other)),
        Err(ReplayError::SpecMismatch { .. })
    ));
}

#[test]
fn timeout_gives_partial_metrics() {
    let spec = ScenarioSpec {
        timeout_s: 3.0,
        ..ScenarioSpec::default()
    };
    let run = run_trial(&spec, vfe(), 1).unwrap();
    assert!(!run.metrics.completed);
    assert_eq!(run.metrics.end, EndReason::Timeout);
    assert!(run.metrics.task_time_s >= 3.0 && run.metrics.task_time_s < 3.1);
    check_log_shape(&run.log);
    replay(&run.log, Some(&spec)).unwrap();
}

#[test]
fn pipette_from_the_rack() {
    let mut spec = ScenarioSpec::default();
    spec.initial.start_grasped = false;
    let run = run_trial(&spec, vfe(), 2).unwrap();
    assert!(run.metrics.completed, "{:?}", run.metrics);
    assert!(run.metrics.relative_error < 0.05);
    let grasped = run.log.records.iter().any(|r| {
        matches!(
            r,
            Record::SceneEvent {
                event: telehaptic_core::sim::SimEvent::Grasped,
                ..
            }
        )
    });
    assert!(grasped);
}

#[test]
fn second_tube_and_larger_scale() {
    let spec = ScenarioSpec {
        dose_tubes: vec![0, 1],
        scale_factor: 3,
        ..ScenarioSpec::default()
    };
    let run = run_trial(&spec, vfe(), 6).unwrap();
    assert!(run.metrics.completed);
    assert_eq!(run.metrics.dispensed_ml.len(), 2);
    for v in &run.metrics.dispensed_ml {
        assert!((v - 2.0).abs() < 0.1, "{:?}", run.metrics);
    }
    replay(&run.log, Some(&spec)).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    // relative error recomputed from the logged ledger is the logged value
    #[test]
    fn metrics_recompute_exactly(seed in 0u64..10_000, cond in 0usize..4, target in 0.5f64..3.0) {
        let spec = ScenarioSpec { target_volume_ml: target, ..ScenarioSpec::default() };
        let run = run_trial(&spec, OperatorKind::Scripted(FeedbackCondition::ALL[cond]), seed).unwrap();
        let m = compute_metrics(&run.log, &spec).unwrap();
        let tube = run.final_state.ledger.tubes_ml[0] - spec.initial.tubes_ml[0];
        prop_assert_eq!(m.relative_error, (tube - target).abs() / target);
        prop_assert_eq!(&m, &run.metrics);
        prop_assert!(m.relative_error >= 0.0);
    }
}

#[test]
fn golden_logs_replay() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
            continue;
        }
        let file = std::io::BufReader::new(std::fs::File::open(&path).unwrap());
        let log = TrialLog::read_jsonl(file).unwrap();
        let out = replay(&log, None).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(Some(&out.final_state), log.final_record().map(|(_, _, s)| s));

        // the current build still produces the archived run
        let h = log.header().unwrap();
        let mut fresh = run_trial(&h.scenario, h.condition, h.seed).unwrap().log;
        if let Record::Header(fh) = &mut fresh.records[0] {
            fh.build = h.build.clone();
        }
        assert!(fresh == log, "{} no longer reproduces", path.display());
        n += 1;
    }
    assert!(n >= 2);
}
