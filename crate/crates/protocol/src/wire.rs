//! Frame layout, little-endian throughout:
//!
//! ```text
//! 0      2        3         4         8           16            18
//! | 54 48 | ver=1 | msg_type | seq u32 | ts_us u64 | payload_len | payload | crc32 |
//! ```
//!
//! The CRC (IEEE) covers every byte before it. Each message type has a fixed
//! payload size.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use telehaptic_core::tactile::{Finger, SENSOR_CELLS};

pub const MAGIC: [u8; 2] = [0x54, 0x48];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
pub const CRC_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MsgType {
    TcpCommand = 0x01,
    GripperCommand = 0x02,
    RobotState = 0x03,
    TactileFrame = 0x04,
    ForceFeedback = 0x05,
    SceneEvent = 0x06,
    ConfigSet = 0x07,
}

impl MsgType {
    pub const ALL: [MsgType; 7] = [
        MsgType::TcpCommand,
        MsgType::GripperCommand,
        MsgType::RobotState,
        MsgType::TactileFrame,
        MsgType::ForceFeedback,
        MsgType::SceneEvent,
        MsgType::ConfigSet,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == v)
    }

    pub const fn payload_len(self) -> usize {
        match self {
            MsgType::TcpCommand => 24,
            MsgType::GripperCommand => 2,
            MsgType::RobotState => 28,
            MsgType::TactileFrame => 1 + 2 * SENSOR_CELLS,
            MsgType::ForceFeedback => 4,
            MsgType::SceneEvent => 10,
            MsgType::ConfigSet => 2,
        }
    }

    pub const fn frame_len(self) -> usize {
        HEADER_LEN + self.payload_len() + CRC_LEN
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::TcpCommand => "tcp_command",
            MsgType::GripperCommand => "gripper_command",
            MsgType::RobotState => "robot_state",
            MsgType::TactileFrame => "tactile_frame",
            MsgType::ForceFeedback => "force_feedback",
            MsgType::SceneEvent => "scene_event",
            MsgType::ConfigSet => "config_set",
        }
    }
}

/// Pose in wire units: x, y, z in µm then rx, ry, rz in millidegrees.
pub type WirePose = [i32; 6];

/// Opening value meaning "no contact marker".
pub const CONTACT_UNSET: u16 = 0xFFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum EventCode {
    Transfer = 1,
    SqueezeStart = 2,
    Grasped = 3,
    Released = 4,
    Dropped = 5,
    ContactMade = 6,
    ContactLost = 7,
    /// Slave lost its link and stopped the robot.
    Halted = 8,
}

impl EventCode {
    pub fn from_u8(v: u8) -> Option<Self> {
        use EventCode::*;
        [
            Transfer,
            SqueezeStart,
            Grasped,
            Released,
            Dropped,
            ContactMade,
            ContactLost,
            Halted,
        ]
        .into_iter()
        .find(|c| *c as u8 == v)
    }
}

/// Liquid location on the wire: 0 none, 1 beaker, 2 spill, 0x10 + i tube i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WireLocation {
    None,
    Beaker,
    Spill,
    Tube(u8),
}

pub const MAX_TUBES: u8 = 0xFF - 0x10;

impl WireLocation {
    pub fn code(self) -> u8 {
        match self {
            WireLocation::None => 0,
            WireLocation::Beaker => 1,
            WireLocation::Spill => 2,
            WireLocation::Tube(i) => 0x10 + i.min(MAX_TUBES),
        }
    }

    pub fn from_code(v: u8) -> Option<Self> {
        match v {
            0 => Some(WireLocation::None),
            1 => Some(WireLocation::Beaker),
            2 => Some(WireLocation::Spill),
            0x10..=0xFF => Some(WireLocation::Tube(v - 0x10)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ConfigKey {
    /// Value is the workspace scale factor.
    Scale = 1,
    /// Value is the lock bitmask.
    Lock = 2,
}

impl ConfigKey {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(ConfigKey::Scale),
            2 => Some(ConfigKey::Lock),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    TcpCommand {
        pose: WirePose,
    },
    GripperCommand {
        opening_permille: u16,
    },
    RobotState {
        pose: WirePose,
        opening_permille: u16,
        /// [`CONTACT_UNSET`] when no contact marker is latched.
        contact_permille: u16,
    },
    TactileFrame {
        finger: Finger,
        #[serde(with = "cells_serde")]
        cells_cn: [u16; SENSOR_CELLS],
    },
    ForceFeedback {
        force_mn: u32,
    },
    SceneEvent {
        code: EventCode,
        volume_ul: i64,
        location: WireLocation,
    },
    ConfigSet {
        key: ConfigKey,
        value: u8,
    },
}

mod cells_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use telehaptic_core::tactile::SENSOR_CELLS;

    pub fn serialize<S: Serializer>(v: &[u16; SENSOR_CELLS], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u16; SENSOR_CELLS], D::Error> {
        let v = Vec::<u16>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<u16>| serde::de::Error::invalid_length(v.len(), &"50 cells"))
    }
}

impl Payload {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Payload::TcpCommand { .. } => MsgType::TcpCommand,
            Payload::GripperCommand { .. } => MsgType::GripperCommand,
            Payload::RobotState { .. } => MsgType::RobotState,
            Payload::TactileFrame { .. } => MsgType::TactileFrame,
            Payload::ForceFeedback { .. } => MsgType::ForceFeedback,
            Payload::SceneEvent { .. } => MsgType::SceneEvent,
            Payload::ConfigSet { .. } => MsgType::ConfigSet,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        let pose = |out: &mut Vec<u8>, p: &WirePose| {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        match self {
            Payload::TcpCommand { pose: p } => pose(out, p),
            Payload::GripperCommand { opening_permille } => out.extend_from_slice(&opening_permille.to_le_bytes()),
            Payload::RobotState {
                pose: p,
                opening_permille,
                contact_permille,
            } => {
                pose(out, p);
                out.extend_from_slice(&opening_permille.to_le_bytes());
                out.extend_from_slice(&contact_permille.to_le_bytes());
            }
            Payload::TactileFrame { finger, cells_cn } => {
                out.push(finger_code(*finger));
                for c in cells_cn {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
            Payload::ForceFeedback { force_mn } => out.extend_from_slice(&force_mn.to_le_bytes()),
            Payload::SceneEvent {
                code,
                volume_ul,
                location,
            } => {
                out.push(*code as u8);
                out.extend_from_slice(&volume_ul.to_le_bytes());
                out.push(location.code());
            }
            Payload::ConfigSet { key, value } => {
                out.push(*key as u8);
                out.push(*value);
            }
        }
    }

    fn read(ty: MsgType, b: &[u8]) -> Result<Self, DecodeError> {
        debug_assert_eq!(b.len(), ty.payload_len());
        let i32_at = |o: usize| i32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let u16_at = |o: usize| u16::from_le_bytes(b[o..o + 2].try_into().unwrap());
        let pose = || -> WirePose { std::array::from_fn(|k| i32_at(4 * k)) };
        Ok(match ty {
            MsgType::TcpCommand => Payload::TcpCommand { pose: pose() },
            MsgType::GripperCommand => Payload::GripperCommand {
                opening_permille: u16_at(0),
            },
            MsgType::RobotState => Payload::RobotState {
                pose: pose(),
                opening_permille: u16_at(24),
                contact_permille: u16_at(26),
            },
            MsgType::TactileFrame => Payload::TactileFrame {
                finger: finger_from_code(b[0]).ok_or(DecodeError::Malformed {
                    what: "finger",
                    value: b[0],
                })?,
                cells_cn: std::array::from_fn(|k| u16_at(1 + 2 * k)),
            },
            MsgType::ForceFeedback => Payload::ForceFeedback {
                force_mn: u32::from_le_bytes(b[0..4].try_into().unwrap()),
            },
            MsgType::SceneEvent => Payload::SceneEvent {
                code: EventCode::from_u8(b[0]).ok_or(DecodeError::Malformed {
                    what: "event code",
                    value: b[0],
                })?,
                volume_ul: i64::from_le_bytes(b[1..9].try_into().unwrap()),
                location: WireLocation::from_code(b[9]).ok_or(DecodeError::Malformed {
                    what: "location",
                    value: b[9],
                })?,
            },
            MsgType::ConfigSet => Payload::ConfigSet {
                key: ConfigKey::from_u8(b[0]).ok_or(DecodeError::Malformed {
                    what: "config key",
                    value: b[0],
                })?,
                value: b[1],
            },
        })
    }
}

pub fn finger_code(f: Finger) -> u8 {
    match f {
        Finger::Left => 0,
        Finger::Right => 1,
    }
}

pub fn finger_from_code(v: u8) -> Option<Finger> {
    match v {
        0 => Some(Finger::Left),
        1 => Some(Finger::Right),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WireMessage {
    pub seq: u32,
    pub timestamp_us: u64,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("bad magic or protocol version")]
    Version { found: [u8; 3] },
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("frame corrupted: {0}")]
    Corruption(CorruptionKind),
    #[error("malformed {what}: {value}")]
    Malformed { what: &'static str, value: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    PayloadLength { ty: MsgType, len: u16 },
    Crc { expected: u32, found: u32 },
}

impl std::fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CorruptionKind::PayloadLength { ty, len } => {
                write!(f, "{} payload length {len}, expected {}", ty.name(), ty.payload_len())
            }
            CorruptionKind::Crc { expected, found } => {
                write!(f, "crc 0x{found:08x}, computed 0x{expected:08x}")
            }
        }
    }
}

impl WireMessage {
    pub fn new(seq: u32, timestamp_us: u64, payload: Payload) -> Self {
        Self {
            seq,
            timestamp_us,
            payload,
        }
    }

    pub fn msg_type(&self) -> MsgType {
        self.payload.msg_type()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.msg_type().frame_len());
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let start = out.len();
        let ty = self.msg_type();
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(ty as u8);
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.timestamp_us.to_le_bytes());
        out.extend_from_slice(&(ty.payload_len() as u16).to_le_bytes());
        self.payload.write(out);
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }
}

/// Decodes one frame from the front of `buf`.
///
/// `Ok(None)` means the buffer holds a valid prefix and more bytes are
/// needed. On success returns the message and the number of bytes consumed.
pub fn decode(buf: &[u8]) -> Result<Option<(WireMessage, usize)>, DecodeError> {
    let expect = [MAGIC[0], MAGIC[1], VERSION];
    let n = buf.len().min(3);
    if buf[..n] != expect[..n] {
        let mut found = [0u8; 3];
        found[..n].copy_from_slice(&buf[..n]);
        return Err(DecodeError::Version { found });
    }
    if buf.len() < HEADER_LEN {
        return Ok(None);
    }
    let ty = MsgType::from_u8(buf[3]).ok_or(DecodeError::UnknownType(buf[3]))?;
    let len = u16::from_le_bytes([buf[16], buf[17]]);
    if len as usize != ty.payload_len() {
        return Err(DecodeError::Corruption(CorruptionKind::PayloadLength { ty, len }));
    }
    let total = ty.frame_len();
    if buf.len() < total {
        return Ok(None);
    }
    let body = &buf[..total - CRC_LEN];
    let found = u32::from_le_bytes(buf[total - CRC_LEN..total].try_into().unwrap());
    let expected = crc32fast::hash(body);
    if found != expected {
        return Err(DecodeError::Corruption(CorruptionKind::Crc { expected, found }));
    }
    let seq = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    let timestamp_us = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let payload = Payload::read(ty, &buf[HEADER_LEN..total - CRC_LEN])?;
    Ok(Some((
        WireMessage {
            seq,
            timestamp_us,
            payload,
        },
        total,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gripper_half_open_payload() {
        let m = WireMessage::new(7, 1, Payload::GripperCommand { opening_permille: 500 });
        let b = m.encode();
        assert_eq!(&b[..4], &[0x54, 0x48, 0x01, 0x02]);
        assert_eq!(&b[HEADER_LEN..HEADER_LEN + 2], &[0xF4, 0x01]);
        assert_eq!(b.len(), MsgType::GripperCommand.frame_len());
        assert_eq!(decode(&b), Ok(Some((m, b.len()))));
    }

    #[test]
    fn empty_buffer_needs_more() {
        assert_eq!(decode(&[]), Ok(None));
        assert_eq!(decode(&[0x54]), Ok(None));
        assert_eq!(decode(&[0x54, 0x48, 0x01, 0x02]), Ok(None));
    }

    #[test]
    fn bad_version_rejected() {
        assert!(matches!(decode(&[0x54, 0x48, 0x02]), Err(DecodeError::Version { .. })));
        assert!(matches!(decode(&[0x00]), Err(DecodeError::Version { .. })));
    }

    #[test]
    fn unknown_type() {
        let mut b = WireMessage::new(0, 0, Payload::ForceFeedback { force_mn: 5 }).encode();
        b[3] = 0x42;
        assert_eq!(decode(&b), Err(DecodeError::UnknownType(0x42)));
    }

    #[test]
    fn payload_bit_flip_is_corruption() {
        let mut b = WireMessage::new(1, 2, Payload::ForceFeedback { force_mn: 1234 }).encode();
        b[HEADER_LEN] ^= 0x10;
        assert!(matches!(decode(&b), Err(DecodeError::Corruption(_))));
    }

    #[test]
    fn fixed_sizes() {
        let sizes: Vec<usize> = MsgType::ALL.iter().map(|t| t.payload_len()).collect();
        assert_eq!(sizes, vec![24, 2, 28, 101, 4, 10, 2]);
    }

    #[test]
    fn bad_enum_after_valid_crc_is_malformed() {
        let mut b = WireMessage::new(
            0,
            0,
            Payload::ConfigSet {
                key: ConfigKey::Scale,
                value: 2,
            },
        )
        .encode();
        b[HEADER_LEN] = 9;
        let n = b.len();
        let crc = crc32fast::hash(&b[..n - 4]);
        b[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode(&b), Err(DecodeError::Malformed { .. })));
    }
}
