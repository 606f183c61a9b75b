//! Master-side motion mapping and the TCP velocity regulator.

use bitflags::bitflags;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Haptic handle workspace: a cylinder along the device's forward (X) axis.
pub const DEVICE_WORKSPACE_DIAMETER_MM: f64 = 160.0;
pub const DEVICE_WORKSPACE_LENGTH_MM: f64 = 110.0;
/// Radius of the robot's reachable sphere around its base origin.
pub const ROBOT_REACH_MM: f64 = 500.0;

pub const CONTROL_RATE_HZ: u32 = 125;

pub type Vec3<T> = [T; 3];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("handle displacement ({0:?}) mm lies outside the device workspace")]
    OutsideWorkspace([f64; 3]),
    #[error("grip command {0} outside [0, 1]")]
    GripOutOfRange(f64),
    #[error("scale factor {0} outside 1..=5")]
    ScaleOutOfRange(u8),
    #[error("invalid timestep {0} s")]
    InvalidTimestep(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

fn finite3<T: Scalar>(v: &Vec3<T>) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn norm3<T: Scalar>(v: &Vec3<T>) -> T {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Whether a handle offset from the device centre is reachable.
pub fn in_device_workspace<T: Scalar>(d: &Vec3<T>) -> bool {
    let half_len = T::lit(DEVICE_WORKSPACE_LENGTH_MM / 2.0);
    let radius = T::lit(DEVICE_WORKSPACE_DIAMETER_MM / 2.0);
    d[0].abs() <= half_len && (d[1] * d[1] + d[2] * d[2]).sqrt() <= radius
}

/// Closest point of the device workspace to `d`.
pub fn clamp_to_device_workspace<T: Scalar>(d: &Vec3<T>) -> Vec3<T> {
    let half_len = T::lit(DEVICE_WORKSPACE_LENGTH_MM / 2.0);
    let radius = T::lit(DEVICE_WORKSPACE_DIAMETER_MM / 2.0);
    let x = d[0].clamp_to(-half_len, half_len);
    let r = (d[1] * d[1] + d[2] * d[2]).sqrt();
    if r <= radius {
        [x, d[1], d[2]]
    } else {
        let k = radius / r;
        [x, d[1] * k, d[2] * k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HapticInput<T> {
    /// Handle offset from the device centre, mm.
    pub handle_displacement: Vec3<T>,
    /// Roll, pitch, yaw of the handle, degrees.
    pub handle_tilt: Vec3<T>,
    /// Normalised gripper opening requested by the operator.
    pub grip_command: T,
    pub timestamp_us: u64,
}

impl<T: Scalar> HapticInput<T> {
    pub fn new(
        handle_displacement: Vec3<T>,
        handle_tilt: Vec3<T>,
        grip_command: T,
        timestamp_us: u64,
    ) -> Result<Self, ControlError> {
        if !finite3(&handle_displacement) {
            return Err(ControlError::NonFinite("handle_displacement"));
        }
        if !finite3(&handle_tilt) {
            return Err(ControlError::NonFinite("handle_tilt"));
        }
        if !in_device_workspace(&handle_displacement) {
            return Err(ControlError::OutsideWorkspace(
                handle_displacement.map(|v| v.to_f64_lossy()),
            ));
        }
        if !(grip_command >= T::zero() && grip_command <= T::one()) {
            return Err(ControlError::GripOutOfRange(grip_command.to_f64_lossy()));
        }
        Ok(Self {
            handle_displacement,
            handle_tilt,
            grip_command,
            timestamp_us,
        })
    }

    /// Like [`HapticInput::new`] but projects out-of-range values back into
    /// the device limits instead of failing. Non-finite components become 0.
    pub fn saturating(handle_displacement: Vec3<T>, handle_tilt: Vec3<T>, grip_command: T, timestamp_us: u64) -> Self {
        let clean = |v: T| if v.is_finite() { v } else { T::zero() };
        let d = clamp_to_device_workspace(&handle_displacement.map(clean));
        Self {
            handle_displacement: d,
            handle_tilt: handle_tilt.map(clean),
            grip_command: clean(grip_command).clamp_to(T::zero(), T::one()),
            timestamp_us,
        }
    }
}

/// Workspace magnification, ×1 to ×5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ScaleFactor(u8);

impl ScaleFactor {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 5;

    pub fn new(factor: u8) -> Result<Self, ControlError> {
        if (Self::MIN..=Self::MAX).contains(&factor) {
            Ok(Self(factor))
        } else {
            Err(ControlError::ScaleOutOfRange(factor))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl Default for ScaleFactor {
    fn default() -> Self {
        Self(1)
    }
}

impl TryFrom<u8> for ScaleFactor {
    type Error = ControlError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ScaleFactor> for u8 {
    fn from(s: ScaleFactor) -> u8 {
        s.0
    }
}

bitflags! {
    /// Axes whose motion is frozen at the home pose.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
    pub struct LockMask: u8 {
        const X = 0b0001;
        const Y = 0b0010;
        const Z = 0b0100;
        const ROTATION = 0b1000;
    }
}

impl LockMask {
    pub fn translation_locked(self, axis: usize) -> bool {
        match axis {
            0 => self.contains(LockMask::X),
            1 => self.contains(LockMask::Y),
            2 => self.contains(LockMask::Z),
            _ => false,
        }
    }

    pub fn from_axis_name(name: &str) -> Option<LockMask> {
        match name.to_ascii_lowercase().as_str() {
            "x" => Some(LockMask::X),
            "y" => Some(LockMask::Y),
            "z" => Some(LockMask::Z),
            "rotation" | "rot" | "r" => Some(LockMask::ROTATION),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceConfig<T> {
    pub scale: ScaleFactor,
    pub locks: LockMask,
    pub robot_reach_mm: T,
}

impl<T: Scalar> Default for WorkspaceConfig<T> {
    fn default() -> Self {
        Self {
            scale: ScaleFactor::default(),
            locks: LockMask::empty(),
            robot_reach_mm: T::lit(ROBOT_REACH_MM),
        }
    }
}

/// A TCP pose in the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotTarget<T> {
    /// mm
    pub tcp_position: Vec3<T>,
    /// degrees
    pub tcp_orientation: Vec3<T>,
    pub timestamp_us: u64,
}

impl<T: Scalar> RobotTarget<T> {
    pub fn new(tcp_position: Vec3<T>, tcp_orientation: Vec3<T>, timestamp_us: u64) -> Self {
        Self {
            tcp_position,
            tcp_orientation,
            timestamp_us,
        }
    }

    pub fn distance_to(&self, other: &Self) -> T {
        let d = [
            self.tcp_position[0] - other.tcp_position[0],
            self.tcp_position[1] - other.tcp_position[1],
            self.tcp_position[2] - other.tcp_position[2],
        ];
        norm3(&d)
    }

    pub fn within_reach(&self, reach_mm: T) -> bool {
        norm3(&self.tcp_position) <= reach_mm
    }
}

/// Radially projects `p` onto the reach sphere when it lies outside.
pub fn project_to_reach<T: Scalar>(p: Vec3<T>, reach_mm: T) -> Vec3<T> {
    let n = norm3(&p);
    if n <= reach_mm || n == T::zero() {
        return p;
    }
    // The product can land a rounding step outside; shrink until it doesn't.
    let mut k = reach_mm / n;
    loop {
        let q = p.map(|v| v * k);
        if norm3(&q) <= reach_mm {
            return q;
        }
        k *= T::one() - T::epsilon();
    }
}

/// Position-mode mapping from handle offset to TCP target.
pub fn scale_workspace<T: Scalar>(
    input: &HapticInput<T>,
    cfg: &WorkspaceConfig<T>,
    home: &RobotTarget<T>,
) -> RobotTarget<T> {
    let s = T::lit(cfg.scale.get() as f64);
    let position: Vec3<T> = std::array::from_fn(|i| {
        let offset = if cfg.locks.translation_locked(i) {
            T::zero()
        } else {
            s * input.handle_displacement[i]
        };
        home.tcp_position[i] + offset
    });
    let orientation = if cfg.locks.contains(LockMask::ROTATION) {
        home.tcp_orientation
    } else {
        std::array::from_fn(|i| home.tcp_orientation[i] + input.handle_tilt[i])
    };
    RobotTarget {
        tcp_position: project_to_reach(position, cfg.robot_reach_mm),
        tcp_orientation: orientation,
        timestamp_us: input.timestamp_us,
    }
}

/// Per-axis gains: indices 0..3 are x, y, z (mm), 3..6 are roll, pitch, yaw (deg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains<T> {
    pub kp: [T; 6],
    pub ki: [T; 6],
    pub kd: [T; 6],
    /// Bound on the accumulated error integral, mm·s (deg·s on rotation axes).
    pub integral_limit: T,
    /// Bound on each axis' output, mm/s (deg/s on rotation axes).
    pub output_limit: T,
}

impl<T: Scalar> PidGains<T> {
    pub fn uniform(kp: T, ki: T, kd: T, integral_limit: T, output_limit: T) -> Self {
        Self {
            kp: [kp; 6],
            ki: [ki; 6],
            kd: [kd; 6],
            integral_limit,
            output_limit,
        }
    }

    pub fn is_valid(&self) -> bool {
        let nonneg = |g: &[T; 6]| g.iter().all(|v| *v >= T::zero() && v.is_finite());
        nonneg(&self.kp)
            && nonneg(&self.ki)
            && nonneg(&self.kd)
            && self.integral_limit > T::zero()
            && self.output_limit > T::zero()
    }
}

impl<T: Scalar> Default for PidGains<T> {
    fn default() -> Self {
        Self::uniform(T::lit(4.0), T::lit(0.5), T::lit(0.05), T::lit(50.0), T::lit(250.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState<T> {
    pub integral: [T; 6],
    pub prev_error: [T; 6],
}

impl<T: Scalar> PidState<T> {
    pub fn zero() -> Self {
        Self {
            integral: [T::zero(); 6],
            prev_error: [T::zero(); 6],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand<T> {
    /// mm/s
    pub linear: Vec3<T>,
    /// deg/s
    pub angular: Vec3<T>,
}

impl<T: Scalar> VelocityCommand<T> {
    pub fn zero() -> Self {
        Self {
            linear: [T::zero(); 3],
            angular: [T::zero(); 3],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| *v == T::zero())
    }

    pub fn axis(&self, i: usize) -> T {
        if i < 3 {
            self.linear[i]
        } else {
            self.angular[i - 3]
        }
    }
}

/// One discrete PID update over all six TCP axes.
pub fn pid_step<T: Scalar>(
    target: &RobotTarget<T>,
    current: &RobotTarget<T>,
    gains: &PidGains<T>,
    state: &PidState<T>,
    dt: T,
) -> Result<(VelocityCommand<T>, PidState<T>), ControlError> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(ControlError::InvalidTimestep(dt.to_f64_lossy()));
    }
    let mut out = [T::zero(); 6];
    let mut next = *state;
    for (axis, v) in out.iter_mut().enumerate() {
        let e = if axis < 3 {
            target.tcp_position[axis] - current.tcp_position[axis]
        } else {
            target.tcp_orientation[axis - 3] - current.tcp_orientation[axis - 3]
        };
        let integral = (state.integral[axis] + e * dt).clamp_to(-gains.integral_limit, gains.integral_limit);
        let derivative = (e - state.prev_error[axis]) / dt;
        let u = gains.kp[axis] * e + gains.ki[axis] * integral + gains.kd[axis] * derivative;
        *v = u.clamp_to(-gains.output_limit, gains.output_limit);
        next.integral[axis] = integral;
        next.prev_error[axis] = e;
    }
    Ok((
        VelocityCommand {
            linear: [out[0], out[1], out[2]],
            angular: [out[3], out[4], out[5]],
        },
        next,
    ))
}
