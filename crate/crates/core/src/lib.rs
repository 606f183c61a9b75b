//! Core numerics for telehaptic pipette dosing.
//!
//! The signal-processing and control modules are generic over [`Scalar`]
//! (`f32` or `f64`); the simulation is `f64` only. Concrete aliases for both
//! precisions live at the crate root.

// `!(x > 0)` is used on purpose: it rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod haptics;
pub mod scalar;
pub mod sim;
pub mod tactile;

pub use control::{ControlError, LockMask, ScaleFactor};
pub use haptics::HapticError;
pub use scalar::Scalar;
pub use tactile::{Finger, LevelGrid, TactileError};

pub type TactileFrame = tactile::TactileFrame<f64>;
pub type ElectrodePattern = tactile::ElectrodePattern<f64>;
pub type GripperState = haptics::GripperState<f64>;
pub type KinestheticForce = haptics::KinestheticForce<f64>;
pub type HapticInput = control::HapticInput<f64>;
pub type WorkspaceConfig = control::WorkspaceConfig<f64>;
pub type RobotTarget = control::RobotTarget<f64>;
pub type PidGains = control::PidGains<f64>;
pub type PidState = control::PidState<f64>;
pub type VelocityCommand = control::VelocityCommand<f64>;

pub type TactileFrameF32 = tactile::TactileFrame<f32>;
pub type ElectrodePatternF32 = tactile::ElectrodePattern<f32>;
pub type GripperStateF32 = haptics::GripperState<f32>;
pub type RobotTargetF32 = control::RobotTarget<f32>;
pub type PidGainsF32 = control::PidGains<f32>;
