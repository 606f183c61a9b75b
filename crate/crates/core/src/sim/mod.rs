//! Deterministic simulation of the remote cell: robot TCP, gripper, the
//! squeezable pipette and the liquid it moves between beaker and tubes.

pub mod config;
pub mod footprint;
pub mod pipette;
pub mod scene;

pub use config::{BeakerSpec, PipetteSpec, RackSpec, SceneConfig, TubeSpec};
pub use pipette::{pipette_flow, LiquidLedger, Location, PipetteModel, TipRegion, Transfer};
pub use scene::{
    region_of_tip, synthesize_tactile, InitialConditions, PipetteStatus, Scene, SceneState, SimError, SimEvent,
};
