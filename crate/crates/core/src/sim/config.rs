use serde::{Deserialize, Serialize};

use crate::control::ROBOT_REACH_MM;

/// Geometry and physical constants of the remote cell.
///
/// All lengths are millimetres in the robot base frame, volumes millilitres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Full travel of the gripper fingers; opening 1.0 corresponds to this width.
    pub gripper_stroke_mm: f64,
    /// Maximum gripper speed, normalised opening per second.
    pub gripper_speed_per_s: f64,
    pub reach_mm: f64,
    pub pipette: PipetteSpec,
    pub beaker: BeakerSpec,
    pub tubes: Vec<TubeSpec>,
    pub rack: RackSpec,
    /// First and last sensor rows (inclusive) covered by the pipette body.
    pub contact_rows: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipetteSpec {
    pub capacity_ml: f64,
    pub outer_diameter_mm: f64,
    pub min_squeezed_diameter_mm: f64,
    /// Distance from the TCP down to the pipette tip.
    pub tip_length_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeakerSpec {
    pub center_xy: [f64; 2],
    pub radius_mm: f64,
    pub bottom_z_mm: f64,
    pub liquid_surface_z_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSpec {
    pub center_xy: [f64; 2],
    pub radius_mm: f64,
    pub bottom_z_mm: f64,
    pub top_z_mm: f64,
    /// How far above the mouth the tip still counts as over the tube.
    #[serde(default = "default_clearance")]
    pub clearance_mm: f64,
}

fn default_clearance() -> f64 {
    40.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RackSpec {
    /// TCP position at which the resting pipette can be grasped.
    pub grasp_position: [f64; 3],
    pub capture_radius_mm: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            gripper_stroke_mm: 85.0,
            gripper_speed_per_s: 0.8,
            reach_mm: ROBOT_REACH_MM,
            pipette: PipetteSpec::default(),
            beaker: BeakerSpec::default(),
            tubes: vec![
                TubeSpec {
                    center_xy: [300.0, 60.0],
                    radius_mm: 8.0,
                    bottom_z_mm: 20.0,
                    top_z_mm: 110.0,
                    clearance_mm: default_clearance(),
                },
                TubeSpec {
                    center_xy: [300.0, 100.0],
                    radius_mm: 8.0,
                    bottom_z_mm: 20.0,
                    top_z_mm: 110.0,
                    clearance_mm: default_clearance(),
                },
            ],
            rack: RackSpec::default(),
            contact_rows: [1, 8],
        }
    }
}

impl Default for PipetteSpec {
    fn default() -> Self {
        Self {
            capacity_ml: 1.5,
            outer_diameter_mm: 12.0,
            min_squeezed_diameter_mm: 4.0,
            tip_length_mm: 100.0,
        }
    }
}

impl Default for BeakerSpec {
    fn default() -> Self {
        Self {
            center_xy: [300.0, -100.0],
            radius_mm: 40.0,
            bottom_z_mm: 0.0,
            liquid_surface_z_mm: 60.0,
        }
    }
}

impl Default for RackSpec {
    fn default() -> Self {
        Self {
            grasp_position: [220.0, 0.0, 180.0],
            capture_radius_mm: 5.0,
        }
    }
}

impl SceneConfig {
    /// Normalised opening at which the fingers touch an unsqueezed pipette.
    pub fn contact_opening(&self) -> f64 {
        self.pipette.outer_diameter_mm / self.gripper_stroke_mm
    }

    pub fn validate(&self) -> Result<(), String> {
        let p = &self.pipette;
        if !(self.gripper_stroke_mm > 0.0) {
            return Err("gripper_stroke_mm must be positive".into());
        }
        if !(self.gripper_speed_per_s > 0.0) {
            return Err("gripper_speed_per_s must be positive".into());
        }
        if !(p.capacity_ml > 0.0) {
            return Err("pipette capacity must be positive".into());
        }
        if !(p.min_squeezed_diameter_mm >= 0.0 && p.min_squeezed_diameter_mm < p.outer_diameter_mm) {
            return Err("pipette min squeezed diameter must lie in [0, outer diameter)".into());
        }
        if p.outer_diameter_mm > self.gripper_stroke_mm {
            return Err("pipette wider than the gripper stroke".into());
        }
        let [first, last] = self.contact_rows;
        if first > last || last >= crate::tactile::SENSOR_ROWS {
            return Err(format!("contact_rows {first}..={last} outside the sensor"));
        }
        if self.tubes.is_empty() {
            return Err("scene needs at least one tube".into());
        }
        Ok(())
    }
}
