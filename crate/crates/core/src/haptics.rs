//! Kinesthetic grasp-force rendering.
//!
//! The rendered force is the mean cell force over both fingers multiplied by
//! how far the gripper has closed past the point of first contact:
//!
//! ```text
//! F = (Σ cells / 100) · max(0, p_contact − p_current),  clamped to [0, 8] N
//! ```
//!
//! Positions are normalised openings (0 closed, 1 open).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tactile::{TactileFrame, SENSOR_CELLS};

/// Ceiling of the desktop haptic display's grasp force, newtons.
pub const MAX_GRASP_FORCE_N: f64 = 8.0;

/// Number of cells averaged over (both fingers).
pub const GRASP_CELLS: usize = 2 * SENSOR_CELLS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HapticError {
    #[error("tactile frames are not synchronised: left at {left_us} us, right at {right_us} us")]
    FrameSync { left_us: u64, right_us: u64 },
    #[error("gripper {field} = {value} outside [0, 1]")]
    InvalidGripper { field: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState<T> {
    pub p_current: T,
    pub p_contact: Option<T>,
    pub commanded_opening: T,
}

impl<T: Scalar> GripperState<T> {
    pub fn new(p_current: T, commanded_opening: T) -> Result<Self, HapticError> {
        let s = Self {
            p_current,
            p_contact: None,
            commanded_opening,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), HapticError> {
        let unit = |field: &'static str, v: T| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(HapticError::InvalidGripper {
                    field,
                    value: v.to_f64_lossy(),
                })
            }
        };
        unit("p_current", self.p_current)?;
        unit("commanded_opening", self.commanded_opening)?;
        if let Some(c) = self.p_contact {
            unit("p_contact", c)?;
        }
        Ok(())
    }

    /// Updates the contact marker from the latest frames.
    ///
    /// The marker latches the opening at the first tick with any nonzero
    /// cell and clears once both pads read all zero. Returns `true` when the
    /// marker changed.
    pub fn observe_contact(&mut self, left: &TactileFrame<T>, right: &TactileFrame<T>) -> bool {
        let touching = !(left.is_zero() && right.is_zero());
        match (touching, self.p_contact) {
            (true, None) => {
                self.p_contact = Some(self.p_current);
                true
            }
            (false, Some(_)) => {
                self.p_contact = None;
                true
            }
            _ => false,
        }
    }

    /// Closure past the contact point, never negative. Zero without contact.
    pub fn closure_past_contact(&self) -> T {
        match self.p_contact {
            Some(c) => (c - self.p_current).max(T::zero()),
            None => T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinestheticForce<T> {
    pub magnitude: T,
    pub timestamp_us: u64,
}

/// Grasp force before the device ceiling is applied.
pub fn unclamped_grasp_force<T: Scalar>(
    left: &TactileFrame<T>,
    right: &TactileFrame<T>,
    grip: &GripperState<T>,
) -> Result<T, HapticError> {
    if left.timestamp_us() != right.timestamp_us() {
        return Err(HapticError::FrameSync {
            left_us: left.timestamp_us(),
            right_us: right.timestamp_us(),
        });
    }
    grip.validate()?;
    let mean = (left.total_force() + right.total_force()) / T::lit(GRASP_CELLS as f64);
    Ok(mean * grip.closure_past_contact())
}

pub fn kinesthetic_force<T: Scalar>(
    left: &TactileFrame<T>,
    right: &TactileFrame<T>,
    grip: &GripperState<T>,
) -> Result<KinestheticForce<T>, HapticError> {
    let raw = unclamped_grasp_force(left, right, grip)?;
    Ok(KinestheticForce {
        magnitude: raw.clamp_to(T::zero(), T::lit(MAX_GRASP_FORCE_N)),
        timestamp_us: left.timestamp_us(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tactile::{clamp_sensor, Finger};

    fn frame(finger: Finger, v: f64, ts: u64) -> TactileFrame<f64> {
        clamp_sensor(finger, &[[v; 5]; 10], ts).unwrap()
    }

    fn grip(contact: Option<f64>, current: f64) -> GripperState<f64> {
        GripperState {
            p_current: current,
            p_contact: contact,
            commanded_opening: current,
        }
    }

    #[test]
    fn zero_cells_give_zero_force() {
        let l = frame(Finger::Left, 0.0, 5);
        let r = frame(Finger::Right, 0.0, 5);
        let f = kinesthetic_force(&l, &r, &grip(Some(0.9), 0.1)).unwrap();
        assert_eq!(f.magnitude, 0.0);
        assert_eq!(f.timestamp_us, 5);
    }

    #[test]
    fn uniform_four_newtons() {
        let l = frame(Finger::Left, 4.0, 0);
        let r = frame(Finger::Right, 4.0, 0);
        let f = kinesthetic_force(&l, &r, &grip(Some(0.5), 0.25)).unwrap();
        assert_eq!(f.magnitude, 1.0);
    }

    #[test]
    fn saturated_force_hits_device_ceiling() {
        let l = frame(Finger::Left, 9.0, 0);
        let r = frame(Finger::Right, 9.0, 0);
        let g = grip(Some(1.0), 0.0);
        assert_eq!(unclamped_grasp_force(&l, &r, &g).unwrap(), 9.0);
        assert_eq!(kinesthetic_force(&l, &r, &g).unwrap().magnitude, 8.0);
    }

    #[test]
    fn no_contact_or_reopened_gives_zero() {
        let l = frame(Finger::Left, 5.0, 0);
        let r = frame(Finger::Right, 5.0, 0);
        assert_eq!(kinesthetic_force(&l, &r, &grip(None, 0.1)).unwrap().magnitude, 0.0);
        assert_eq!(kinesthetic_force(&l, &r, &grip(Some(0.2), 0.3)).unwrap().magnitude, 0.0);
    }

    #[test]
    fn mismatched_timestamps_rejected() {
        let l = frame(Finger::Left, 5.0, 0);
        let r = frame(Finger::Right, 5.0, 1);
        assert_eq!(
            kinesthetic_force(&l, &r, &grip(Some(0.2), 0.1)),
            Err(HapticError::FrameSync {
                left_us: 0,
                right_us: 1
            })
        );
    }

    #[test]
    fn contact_marker_latches_then_clears() {
        let touch = frame(Finger::Left, 2.0, 0);
        let none = frame(Finger::Right, 0.0, 0);
        let mut g = grip(None, 0.3);
        assert!(g.observe_contact(&touch, &none));
        assert_eq!(g.p_contact, Some(0.3));
        g.p_current = 0.2;
        assert!(!g.observe_contact(&touch, &none));
        assert_eq!(g.p_contact, Some(0.3));
        assert!(g.observe_contact(&none, &none));
        assert_eq!(g.p_contact, None);
    }

    #[test]
    fn gripper_validation() {
        assert!(GripperState::new(1.2, 0.5).is_err());
        assert!(GripperState::new(0.5, 0.5).is_ok());
    }
}
