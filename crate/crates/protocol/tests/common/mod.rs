#![allow(dead_code)]

use proptest::prelude::*;
use telehaptic_core::tactile::Finger;
use telehaptic_protocol::wire::{ConfigKey, EventCode, Payload, WireLocation, WireMessage};

pub fn finger() -> impl Strategy<Value = Finger> {
    prop_oneof![Just(Finger::Left), Just(Finger::Right)]
}

pub fn event_code() -> impl Strategy<Value = EventCode> {
    (1u8..=8).prop_map(|c| EventCode::from_u8(c).unwrap())
}

pub fn location() -> impl Strategy<Value = WireLocation> {
    prop_oneof![
        Just(WireLocation::None),
        Just(WireLocation::Beaker),
        Just(WireLocation::Spill),
        (0u8..=0xEF).prop_map(WireLocation::Tube),
    ]
}

pub fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        any::<[i32; 6]>().prop_map(|pose| Payload::TcpCommand { pose }),
        any::<u16>().prop_map(|opening_permille| Payload::GripperCommand { opening_permille }),
        (any::<[i32; 6]>(), any::<u16>(), any::<u16>()).prop_map(|(pose, o, c)| {
            Payload::RobotState {
                pose,
                opening_permille: o,
                contact_permille: c,
            }
        }),
        (finger(), prop::collection::vec(any::<u16>(), 50)).prop_map(|(finger, v)| {
            Payload::TactileFrame {
                finger,
                cells_cn: v.try_into().unwrap(),
            }
        }),
        any::<u32>().prop_map(|force_mn| Payload::ForceFeedback { force_mn }),
        (event_code(), any::<i64>(), location()).prop_map(|(code, volume_ul, location)| {
            Payload::SceneEvent {
                code,
                volume_ul,
                location,
            }
        }),
        (prop_oneof![Just(ConfigKey::Scale), Just(ConfigKey::Lock)], any::<u8>())
            .prop_map(|(key, value)| Payload::ConfigSet { key, value }),
    ]
}

pub fn message() -> impl Strategy<Value = WireMessage> {
    (any::<u32>(), any::<u64>(), payload()).prop_map(|(s, t, p)| WireMessage::new(s, t, p))
}
