use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::SceneConfig;
use super::footprint::contact_frames;
use super::pipette::{pipette_flow, LiquidLedger, Location, PipetteModel, TipRegion, Transfer};
use crate::control::{project_to_reach, RobotTarget, VelocityCommand};
use crate::haptics::GripperState;
use crate::tactile::TactileFrame;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid timestep {0} s")]
    InvalidTimestep(f64),
    #[error("non-finite command")]
    NonFiniteCommand,
    #[error("invalid scene configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipetteStatus {
    Grasped,
    InRack,
    /// Released away from the rack; out of play for the rest of the trial.
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub robot: RobotTarget<f64>,
    pub gripper: GripperState<f64>,
    pub pipette: PipetteModel,
    pub ledger: LiquidLedger,
    pub status: PipetteStatus,
    pub tip_region: TipRegion,
    pub sim_time_us: u64,
    pub squeeze_count: u32,
    /// Sign of the last nonzero compression change; used to delimit squeezes.
    pub last_compression_trend: i8,
}

impl SceneState {
    pub fn grasped(&self) -> bool {
        self.status == PipetteStatus::Grasped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    Transfer(Transfer),
    SqueezeStart,
    Grasped,
    Released,
    Dropped { spilled_ml: f64 },
    ContactMade { opening: f64 },
    ContactLost,
}

/// How a scene starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    pub tcp: RobotTarget<f64>,
    pub beaker_ml: f64,
    pub tubes_ml: Vec<f64>,
    pub start_grasped: bool,
    /// Per-trial squeezed diameter of this particular bulb; falls back to the
    /// configured nominal value.
    pub min_squeezed_diameter_mm: Option<f64>,
}

/// Single-owner stepped simulation of the remote cell.
#[derive(Debug, Clone)]
pub struct Scene {
    config: SceneConfig,
    state: SceneState,
}

impl Scene {
    pub fn new(config: SceneConfig, init: &InitialConditions) -> Result<Self, SimError> {
        config.validate().map_err(SimError::Config)?;
        let mut tubes = init.tubes_ml.clone();
        tubes.resize(config.tubes.len(), 0.0);
        let mut pipette = PipetteModel::from_spec(&config.pipette);
        if let Some(d) = init.min_squeezed_diameter_mm {
            pipette.min_squeezed_diameter_mm = d.clamp(0.0, pipette.outer_diameter_mm - 1e-3);
        }
        let contact = config.contact_opening();
        let (status, opening) = if init.start_grasped {
            // hold on the permille grid at or just inside the contact point
            ((PipetteStatus::Grasped), (contact * 1000.0).floor() / 1000.0)
        } else {
            (PipetteStatus::InRack, (contact * 2.0).min(1.0))
        };
        let mut state = SceneState {
            robot: RobotTarget {
                tcp_position: project_to_reach(init.tcp.tcp_position, config.reach_mm),
                ..init.tcp
            },
            gripper: GripperState {
                p_current: opening,
                p_contact: None,
                commanded_opening: opening,
            },
            pipette,
            ledger: LiquidLedger::new(init.beaker_ml, tubes),
            status,
            tip_region: TipRegion::Elsewhere,
            sim_time_us: 0,
            squeeze_count: 0,
            last_compression_trend: 0,
        };
        if state.grasped() {
            let gap = opening * config.gripper_stroke_mm;
            state.pipette.compression = state.pipette.compression_for_gap(gap);
        }
        let mut scene = Self { config, state };
        scene.state.tip_region = scene.tip_region_for(&scene.state.robot);
        let (l, r) = scene.tactile_frames();
        scene.state.gripper.observe_contact(&l, &r);
        Ok(scene)
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn state(&self) -> &SceneState {
        &self.state
    }

    /// Replaces the state wholesale (used when restoring snapshots).
    pub fn restore(&mut self, state: SceneState) {
        self.state = state;
    }

    pub fn tip_position(&self, robot: &RobotTarget<f64>) -> [f64; 3] {
        let p = robot.tcp_position;
        [p[0], p[1], p[2] - self.state.pipette.tip_length_mm]
    }

    /// Region of the pipette tip for a TCP pose, assuming the pipette is held.
    pub fn tip_region_for(&self, robot: &RobotTarget<f64>) -> TipRegion {
        if !self.state.grasped() {
            return TipRegion::Elsewhere;
        }
        region_of_tip(&self.config, self.tip_position(robot))
    }

    fn near_rack(&self) -> bool {
        let g = self.config.rack.grasp_position;
        let p = self.state.robot.tcp_position;
        let d2: f64 = (0..3).map(|i| (p[i] - g[i]).powi(2)).sum();
        d2.sqrt() <= self.config.rack.capture_radius_mm
    }

    pub fn tactile_frames(&self) -> (TactileFrame<f64>, TactileFrame<f64>) {
        synthesize_tactile(&self.state, &self.config)
    }

    /// Advances the scene by `dt` seconds under the given commands.
    pub fn tick(
        &mut self,
        velocity: &VelocityCommand<f64>,
        gripper_command: f64,
        dt: f64,
    ) -> Result<Vec<SimEvent>, SimError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::InvalidTimestep(dt));
        }
        let finite = velocity
            .linear
            .iter()
            .chain(velocity.angular.iter())
            .all(|v| v.is_finite());
        if !finite || !gripper_command.is_finite() {
            return Err(SimError::NonFiniteCommand);
        }
        let mut events = Vec::new();
        let dt_us = (dt * 1e6).round() as u64;
        let now_us = self.state.sim_time_us + dt_us;

        // pose
        let robot = &mut self.state.robot;
        let moved: [f64; 3] = std::array::from_fn(|i| robot.tcp_position[i] + velocity.linear[i] * dt);
        robot.tcp_position = project_to_reach(moved, self.config.reach_mm);
        for i in 0..3 {
            robot.tcp_orientation[i] += velocity.angular[i] * dt;
        }
        robot.timestamp_us = now_us;

        // gripper
        let stroke = self.config.gripper_stroke_mm;
        let contact = self.config.contact_opening();
        let before = self.state.gripper.p_current;
        let command = gripper_command.clamp(0.0, 1.0);
        let step = self.config.gripper_speed_per_s * dt;
        let mut opening = before + (command - before).clamp(-step, step);
        if self.state.grasped() {
            opening = opening.max(self.state.pipette.min_squeezed_diameter_mm / stroke);
        }
        self.state.gripper.p_current = opening;
        self.state.gripper.commanded_opening = command;

        // grasp bookkeeping
        match self.state.status {
            PipetteStatus::InRack if before > contact && opening <= contact && self.near_rack() => {
                self.state.status = PipetteStatus::Grasped;
                events.push(SimEvent::Grasped);
            }
            PipetteStatus::Grasped if opening > contact => {
                if self.near_rack() {
                    self.state.status = PipetteStatus::InRack;
                    events.push(SimEvent::Released);
                } else {
                    self.state.status = PipetteStatus::Dropped;
                    let spilled = self.state.ledger.pipette_ml;
                    if spilled > 0.0 {
                        self.state.ledger.exchange(Location::Spill, spilled);
                    }
                    self.state.pipette.held_ml = self.state.ledger.pipette_ml;
                    events.push(SimEvent::Dropped { spilled_ml: spilled });
                }
            }
            _ => {}
        }

        self.state.tip_region = self.tip_region_for(&self.state.robot);

        // bulb
        let target_c = if self.state.grasped() {
            self.state.pipette.compression_for_gap(opening * stroke)
        } else {
            0.0
        };
        let dc = target_c - self.state.pipette.compression;
        if dc != 0.0 {
            let trend: i8 = if dc > 0.0 { 1 } else { -1 };
            if trend > 0 && self.state.last_compression_trend <= 0 && self.state.grasped() {
                self.state.squeeze_count += 1;
                events.push(SimEvent::SqueezeStart);
            }
            self.state.last_compression_trend = trend;
        }
        if let Some(t) = pipette_flow(
            &mut self.state.pipette,
            dc,
            self.state.tip_region,
            &mut self.state.ledger,
        ) {
            events.push(SimEvent::Transfer(t));
        }
        // land exactly on the geometric value regardless of rounding in the flow step
        self.state.pipette.compression = target_c;

        self.state.sim_time_us = now_us;

        let (l, r) = self.tactile_frames();
        let had_contact = self.state.gripper.p_contact.is_some();
        if self.state.gripper.observe_contact(&l, &r) {
            if had_contact {
                events.push(SimEvent::ContactLost);
            } else {
                events.push(SimEvent::ContactMade { opening });
            }
        }
        Ok(events)
    }
}

pub fn region_of_tip(config: &SceneConfig, tip: [f64; 3]) -> TipRegion {
    let dist_xy = |c: [f64; 2]| ((tip[0] - c[0]).powi(2) + (tip[1] - c[1]).powi(2)).sqrt();
    let b = &config.beaker;
    if dist_xy(b.center_xy) <= b.radius_mm && tip[2] >= b.bottom_z_mm {
        return if tip[2] < b.liquid_surface_z_mm {
            TipRegion::OverBeakerSubmerged
        } else {
            TipRegion::OverBeakerAir
        };
    }
    for (i, t) in config.tubes.iter().enumerate() {
        if dist_xy(t.center_xy) <= t.radius_mm && tip[2] >= t.bottom_z_mm && tip[2] <= t.top_z_mm + t.clearance_mm {
            return TipRegion::OverTube(i);
        }
    }
    TipRegion::Elsewhere
}

/// Pad frames for the current state. Both pads read zero unless the pipette
/// is held with the fingers at or inside its outer diameter.
pub fn synthesize_tactile(state: &SceneState, config: &SceneConfig) -> (TactileFrame<f64>, TactileFrame<f64>) {
    let ts = state.sim_time_us;
    let touching = state.grasped() && state.gripper.p_current <= config.contact_opening();
    if !touching {
        return (
            TactileFrame::zeros(crate::tactile::Finger::Left, ts),
            TactileFrame::zeros(crate::tactile::Finger::Right, ts),
        );
    }
    contact_frames(state.pipette.compression, config.contact_rows, ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(grasped: bool) -> Scene {
        let init = InitialConditions {
            tcp: RobotTarget::new([300.0, 0.0, 200.0], [0.0; 3], 0),
            beaker_ml: 50.0,
            tubes_ml: vec![0.0, 0.0],
            start_grasped: grasped,
            min_squeezed_diameter_mm: None,
        };
        Scene::new(SceneConfig::default(), &init).unwrap()
    }

    #[test]
    fn zero_command_is_a_fixed_point() {
        let mut s = scene(true);
        let before = s.state().clone();
        let opening = before.gripper.p_current;
        let ev = s.tick(&VelocityCommand::zero(), opening, 0.008).unwrap();
        assert!(ev.is_empty());
        assert_eq!(s.state().robot.tcp_position, before.robot.tcp_position);
        assert_eq!(s.state().ledger, before.ledger);
        assert_eq!(s.state().sim_time_us, 8000);
    }

    #[test]
    fn euler_integration() {
        let mut s = scene(true);
        let v = VelocityCommand {
            linear: [100.0, 0.0, 0.0],
            angular: [0.0; 3],
        };
        let opening = s.state().gripper.p_current;
        s.tick(&v, opening, 0.1).unwrap();
        assert!((s.state().robot.tcp_position[0] - 310.0).abs() < 1e-9);
    }

    #[test]
    fn bad_timestep_rejected() {
        let mut s = scene(true);
        assert_eq!(
            s.tick(&VelocityCommand::zero(), 0.1, 0.0),
            Err(SimError::InvalidTimestep(0.0))
        );
    }

    #[test]
    fn starts_in_contact_when_grasped() {
        let s = scene(true);
        assert!(s.state().gripper.p_contact.is_some());
        let (l, _) = s.tactile_frames();
        assert!(!l.is_zero());
        assert!(s.state().pipette.compression < 0.01);
    }

    #[test]
    fn gripper_speed_limited() {
        let mut s = scene(true);
        let before = s.state().gripper.p_current;
        s.tick(&VelocityCommand::zero(), 1.0, 0.008).unwrap();
        // opening past the pipette drops it away from the rack
        assert_eq!(s.state().status, PipetteStatus::Dropped);
        assert!((s.state().gripper.p_current - (before + 0.8 * 0.008)).abs() < 1e-12);
    }

    #[test]
    fn squeezing_is_blocked_at_min_diameter() {
        let mut s = scene(true);
        for _ in 0..100 {
            s.tick(&VelocityCommand::zero(), 0.0, 0.008).unwrap();
        }
        assert_eq!(s.state().pipette.compression, 1.0);
        assert!((s.state().gripper.p_current - 4.0 / 85.0).abs() < 1e-12);
        assert_eq!(s.state().squeeze_count, 1);
    }

    #[test]
    fn pick_from_rack() {
        let mut s = scene(false);
        let rack = s.config().rack.grasp_position;
        s.restore(SceneState {
            robot: RobotTarget::new(rack, [0.0; 3], 0),
            ..s.state().clone()
        });
        let mut grasped = false;
        for _ in 0..100 {
            let ev = s.tick(&VelocityCommand::zero(), 0.1, 0.008).unwrap();
            grasped |= ev.contains(&SimEvent::Grasped);
        }
        assert!(grasped);
        assert!(s.state().grasped());
    }

    #[test]
    fn tip_regions() {
        let cfg = SceneConfig::default();
        assert_eq!(
            region_of_tip(&cfg, [300.0, -100.0, 30.0]),
            TipRegion::OverBeakerSubmerged
        );
        assert_eq!(region_of_tip(&cfg, [300.0, -100.0, 80.0]), TipRegion::OverBeakerAir);
        assert_eq!(region_of_tip(&cfg, [300.0, 60.0, 130.0]), TipRegion::OverTube(0));
        assert_eq!(region_of_tip(&cfg, [300.0, 100.0, 130.0]), TipRegion::OverTube(1));
        assert_eq!(region_of_tip(&cfg, [300.0, 0.0, 130.0]), TipRegion::Elsewhere);
    }
}
