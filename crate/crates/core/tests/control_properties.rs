use proptest::prelude::*;
use telehaptic_core::control::{
    in_device_workspace, pid_step, scale_workspace, HapticInput, LockMask, PidGains, PidState, RobotTarget,
    ScaleFactor, VelocityCommand, WorkspaceConfig,
};
use telehaptic_core::sim::{InitialConditions, Scene, SceneConfig};

fn home() -> RobotTarget<f64> {
    RobotTarget::new([300.0, 0.0, 200.0], [0.0, 0.0, 0.0], 0)
}

/// 100 mm step on x, default gains, the simulator's integrator closing the
/// loop at 125 Hz.
#[test]
fn default_gains_step_response() {
    let init = InitialConditions {
        tcp: home(),
        beaker_ml: 0.0,
        tubes_ml: vec![0.0],
        start_grasped: false,
        min_squeezed_diameter_mm: None,
    };
    let mut scene = Scene::new(SceneConfig::default(), &init).unwrap();
    let opening = scene.state().gripper.p_current;
    let target = RobotTarget::new([400.0, 0.0, 200.0], [0.0; 3], 0);
    let gains = PidGains::default();
    let mut pid = PidState::zero();
    let mut entered_band_at = None;
    let mut peak: f64 = 0.0;
    for k in 1..=(5 * 125) {
        let (v, next) = pid_step(&target, &scene.state().robot, &gains, &pid, 0.008).unwrap();
        pid = next;
        scene.tick(&v, opening, 0.008).unwrap();
        let x = scene.state().robot.tcp_position[0] - 300.0;
        peak = peak.max(x);
        if entered_band_at.is_none() && (x - 100.0).abs() <= 2.0 {
            entered_band_at = Some(k as f64 * 0.008);
        }
    }
    let t = entered_band_at.expect("never reached the 2% band");
    assert!(t <= 3.0, "entered 2% band at {t} s");
    assert!(peak <= 105.0, "overshoot to {peak}");
}

fn displacement() -> impl Strategy<Value = [f64; 3]> {
    (-55.0..=55.0f64, 0.0..80.0f64, 0.0..std::f64::consts::TAU).prop_map(|(x, r, a)| [x, r * a.cos(), r * a.sin()])
}

fn locks() -> impl Strategy<Value = LockMask> {
    (0u8..16).prop_map(LockMask::from_bits_truncate)
}

proptest! {
    #[test]
    fn scaling_is_linear(d in displacement(), alpha in 0.0..1.0f64, s in 1u8..=5, l in locks()) {
        prop_assume!(in_device_workspace(&d));
        let cfg = WorkspaceConfig { scale: ScaleFactor::new(s).unwrap(), locks: l, robot_reach_mm: 1e6 };
        let a = HapticInput::new(d.map(|v| v * alpha), [0.0; 3], 0.5, 0).unwrap();
        let b = HapticInput::new(d, [0.0; 3], 0.5, 0).unwrap();
        let ta = scale_workspace(&a, &cfg, &home());
        let tb = scale_workspace(&b, &cfg, &home());
        for i in 0..3 {
            let lhs = ta.tcp_position[i] - home().tcp_position[i];
            let rhs = alpha * (tb.tcp_position[i] - home().tcp_position[i]);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn locks_are_idempotent_and_pin_home(d in displacement(), tilt in prop::array::uniform3(-90.0..90.0f64), l in locks()) {
        prop_assume!(in_device_workspace(&d));
        let input = HapticInput::new(d, tilt, 0.5, 0).unwrap();
        let once = WorkspaceConfig { scale: ScaleFactor::new(3).unwrap(), locks: l, robot_reach_mm: 500.0 };
        let twice = WorkspaceConfig { locks: l | l, ..once };
        let t = scale_workspace(&input, &once, &home());
        prop_assert_eq!(t, scale_workspace(&input, &twice, &home()));
        if t.within_reach(500.0) && home().tcp_position.iter().zip(t.tcp_position.iter()).all(|(h, p)| (h - p).abs() < 500.0) {
            for i in 0..3 {
                if l.translation_locked(i) && t.tcp_position == scale_workspace(&input, &WorkspaceConfig { robot_reach_mm: 1e6, ..once }, &home()).tcp_position {
                    prop_assert_eq!(t.tcp_position[i], home().tcp_position[i]);
                }
            }
        }
        if l.contains(LockMask::ROTATION) {
            prop_assert_eq!(t.tcp_orientation, home().tcp_orientation);
        }
    }

    #[test]
    fn targets_stay_in_reach(d in prop::array::uniform3(-200.0..200.0f64), s in 1u8..=5,
                             h in prop::array::uniform3(-450.0..450.0f64)) {
        let cfg = WorkspaceConfig { scale: ScaleFactor::new(s).unwrap(), locks: LockMask::empty(), robot_reach_mm: 500.0 };
        let input = HapticInput::saturating(d, [0.0; 3], 0.5, 0);
        let t = scale_workspace(&input, &cfg, &RobotTarget::new(h, [0.0; 3], 0));
        prop_assert!(t.within_reach(500.0));
    }

    #[test]
    fn integral_contribution_bounded(errs in prop::collection::vec(prop::array::uniform3(-1e4..1e4f64), 1..200)) {
        let gains = PidGains::default();
        let mut st = PidState::zero();
        let cur = home();
        for e in errs {
            let tgt = RobotTarget::new([cur.tcp_position[0] + e[0], cur.tcp_position[1] + e[1], cur.tcp_position[2] + e[2]], [0.0; 3], 0);
            let (v, next) = pid_step(&tgt, &cur, &gains, &st, 0.008).unwrap();
            st = next;
            for i in 0..6 {
                prop_assert!((gains.ki[i] * st.integral[i]).abs() <= gains.ki[i] * gains.integral_limit + 1e-12);
                prop_assert!(v.axis(i).abs() <= gains.output_limit);
            }
        }
    }
}

#[test]
fn zero_error_stays_zero() {
    let gains = PidGains::default();
    let mut st = PidState::zero();
    for _ in 0..1000 {
        let (v, next) = pid_step(&home(), &home(), &gains, &st, 0.008).unwrap();
        assert_eq!(v, VelocityCommand::zero());
        st = next;
    }
    assert_eq!(st, PidState::zero());
}
