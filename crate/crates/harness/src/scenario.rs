//! Trial scenario: cell geometry, starting volumes, controller gains and the
//! scripted operator's perception model. Loaded from TOML.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use telehaptic_core::control::{CONTROL_RATE_HZ, ROBOT_REACH_MM};
use telehaptic_core::sim::{InitialConditions, SceneConfig};
use telehaptic_core::{PidGains, RobotTarget, ScaleFactor};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    /// Volume to add to each dosing tube, ml.
    pub target_volume_ml: f64,
    pub dose_tubes: Vec<usize>,
    /// Graduation marks printed on the tubes, ml. Informational.
    pub tube_markers_ml: Vec<f64>,
    pub scale_factor: u8,
    /// TCP pose the centred handle maps to.
    pub home_mm: [f64; 3],
    pub timeout_s: f64,
    pub latency_us: u64,
    pub initial: InitialVolumes,
    pub scene: SceneConfig,
    pub gains: GainSpec,
    pub operator: OperatorModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialVolumes {
    pub beaker_ml: f64,
    pub tubes_ml: Vec<f64>,
    /// Start with the pipette already in the gripper at the hold opening.
    pub start_grasped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainSpec {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral_limit: f64,
    pub output_limit: f64,
}

/// How the scripted operator perceives and acts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorModel {
    /// SD of one visual reading of a tube volume, ml.
    pub volume_sigma_ml: f64,
    /// SD of the operator's read of the robot position, mm.
    pub pose_sigma_mm: f64,
    /// Distinguishable intensity steps per electrode.
    pub electrode_levels: u8,
    /// Seconds between visual glances at the tube while dispensing.
    pub glance_interval_s: f64,
    /// Grip ramp while dosing by eye, opening per second.
    pub visual_ramp_per_s: f64,
    /// Grip ramp while dosing by feel, opening per second.
    pub haptic_ramp_per_s: f64,
    /// Robot-space speed the handle is moved at, mm/s.
    pub move_speed_mm_s: f64,
    /// Distance at which a waypoint counts as reached, mm.
    pub arrive_tolerance_mm: f64,
    /// A coarse visual check tops up only below `target - tolerance`, ml.
    pub coarse_check_tolerance_ml: f64,
    /// Bulb collapse limit the operator assumes, mm.
    pub assumed_min_diameter_mm: f64,
    /// Half-width of the uniform spread of the true collapse limit, mm.
    pub min_diameter_jitter_mm: f64,
    /// Upper bound on dosing attempts per tube before giving up.
    pub max_top_ups: u32,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 0,
            target_volume_ml: 2.0,
            dose_tubes: vec![0],
            tube_markers_ml: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            scale_factor: 2,
            home_mm: [300.0, 0.0, 200.0],
            timeout_s: 600.0,
            latency_us: 2_000,
            initial: InitialVolumes::default(),
            scene: SceneConfig::default(),
            gains: GainSpec::default(),
            operator: OperatorModel::default(),
        }
    }
}

impl Default for InitialVolumes {
    fn default() -> Self {
        Self {
            beaker_ml: 50.0,
            tubes_ml: vec![0.0, 0.0],
            start_grasped: true,
        }
    }
}

impl Default for GainSpec {
    fn default() -> Self {
        let g = PidGains::default();
        Self {
            kp: g.kp[0],
            ki: g.ki[0],
            kd: g.kd[0],
            integral_limit: g.integral_limit,
            output_limit: g.output_limit,
        }
    }
}

impl Default for OperatorModel {
    fn default() -> Self {
        Self {
            volume_sigma_ml: 0.15,
            pose_sigma_mm: 0.5,
            electrode_levels: 10,
            glance_interval_s: 0.25,
            visual_ramp_per_s: 0.01,
            haptic_ramp_per_s: 0.02,
            move_speed_mm_s: 120.0,
            arrive_tolerance_mm: 3.0,
            coarse_check_tolerance_ml: 0.3,
            assumed_min_diameter_mm: 4.0,
            min_diameter_jitter_mm: 1.0,
            max_top_ups: 6,
        }
    }
}

impl GainSpec {
    pub fn to_gains(&self) -> PidGains {
        PidGains::uniform(self.kp, self.ki, self.kd, self.integral_limit, self.output_limit)
    }
}

/// Per-trial values drawn from the seed that the operator never observes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenParams {
    pub min_squeezed_diameter_mm: f64,
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.target_volume_ml > 0.0 && self.target_volume_ml.is_finite()) {
            return bad(format!("target_volume_ml = {} must be positive", self.target_volume_ml));
        }
        let vols = std::iter::once(self.initial.beaker_ml).chain(self.initial.tubes_ml.iter().copied());
        for v in vols {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("initial volume {v} must be nonnegative"));
            }
        }
        if self.initial.tubes_ml.len() != self.scene.tubes.len() {
            return bad(format!(
                "{} initial tube volumes for {} tubes",
                self.initial.tubes_ml.len(),
                self.scene.tubes.len()
            ));
        }
        if self.dose_tubes.is_empty() {
            return bad("dose_tubes is empty".into());
        }
        if let Some(&i) = self.dose_tubes.iter().find(|&&i| i >= self.scene.tubes.len()) {
            return bad(format!("dose tube {i} does not exist"));
        }
        ScaleFactor::new(self.scale_factor).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if !(self.timeout_s > 0.0) {
            return bad("timeout_s must be positive".into());
        }
        if !self.gains.to_gains().is_valid() {
            return bad("controller gains must be finite and nonnegative".into());
        }
        self.scene.validate().map_err(ScenarioError::Invalid)?;
        if self.scene.reach_mm > ROBOT_REACH_MM {
            return bad(format!(
                "reach {} exceeds the robot's {ROBOT_REACH_MM} mm",
                self.scene.reach_mm
            ));
        }
        let op = &self.operator;
        let positive = [
            ("glance_interval_s", op.glance_interval_s),
            ("visual_ramp_per_s", op.visual_ramp_per_s),
            ("haptic_ramp_per_s", op.haptic_ramp_per_s),
            ("move_speed_mm_s", op.move_speed_mm_s),
            ("arrive_tolerance_mm", op.arrive_tolerance_mm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("operator.{name} must be positive"));
            }
        }
        if !(op.volume_sigma_ml >= 0.0 && op.pose_sigma_mm >= 0.0) {
            return bad("operator noise must be nonnegative".into());
        }
        if op.electrode_levels < 2 {
            return bad("operator.electrode_levels must be at least 2".into());
        }
        let p = &self.scene.pipette;
        let lo = op.assumed_min_diameter_mm - op.min_diameter_jitter_mm;
        let hi = op.assumed_min_diameter_mm + op.min_diameter_jitter_mm;
        if !(op.min_diameter_jitter_mm >= 0.0 && lo > 0.0 && hi < p.outer_diameter_mm) {
            return bad("collapse limit spread must stay inside (0, outer diameter)".into());
        }
        Ok(())
    }

    pub fn scale(&self) -> ScaleFactor {
        // validated on load
        ScaleFactor::new(self.scale_factor).unwrap_or_default()
    }

    pub fn home(&self) -> RobotTarget {
        RobotTarget::new(self.home_mm, [0.0; 3], 0)
    }

    pub fn timeout_us(&self) -> u64 {
        (self.timeout_s * 1e6).round() as u64
    }

    /// Opening that holds an unsqueezed pipette without dropping it: the
    /// contact opening rounded down to the command resolution.
    pub fn hold_opening(&self) -> f64 {
        (self.scene.contact_opening() * 1000.0).floor() / 1000.0
    }

    pub fn hidden(&self, seed: u64) -> HiddenParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = &self.operator;
        let jitter = if op.min_diameter_jitter_mm > 0.0 {
            rng.random_range(-op.min_diameter_jitter_mm..=op.min_diameter_jitter_mm)
        } else {
            0.0
        };
        HiddenParams {
            min_squeezed_diameter_mm: op.assumed_min_diameter_mm + jitter,
        }
    }

    pub fn initial_conditions(&self, hidden: &HiddenParams) -> InitialConditions {
        let tcp = if self.initial.start_grasped {
            self.home()
        } else {
            RobotTarget::new(self.scene.rack.grasp_position, [0.0; 3], 0)
        };
        InitialConditions {
            tcp,
            beaker_ml: self.initial.beaker_ml,
            tubes_ml: self.initial.tubes_ml.clone(),
            start_grasped: self.initial.start_grasped,
            min_squeezed_diameter_mm: Some(hidden.min_squeezed_diameter_mm),
        }
    }

    pub fn control_rate_hz(&self) -> u32 {
        CONTROL_RATE_HZ
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn spec_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serialises");
        hex::encode(Sha256::digest(json))
    }
}
