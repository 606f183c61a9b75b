//! Fixed-point wire units. Every conversion rounds to nearest and saturates
//! at the integer range.

use telehaptic_core::tactile::{Finger, TactileError, SENSOR_CELLS, SENSOR_COLS, SENSOR_ROWS};
use telehaptic_core::{RobotTarget, TactileFrame};

use crate::wire::{WirePose, CONTACT_UNSET};

fn round_i32(v: f64) -> i32 {
    v.round().clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

pub fn mm_to_um(mm: f64) -> i32 {
    round_i32(mm * 1000.0)
}

pub fn um_to_mm(um: i32) -> f64 {
    um as f64 / 1000.0
}

pub fn deg_to_mdeg(deg: f64) -> i32 {
    round_i32(deg * 1000.0)
}

pub fn mdeg_to_deg(mdeg: i32) -> f64 {
    mdeg as f64 / 1000.0
}

pub fn opening_to_permille(opening: f64) -> u16 {
    (opening.clamp(0.0, 1.0) * 1000.0).round() as u16
}

pub fn permille_to_opening(p: u16) -> f64 {
    (p.min(1000)) as f64 / 1000.0
}

pub fn contact_to_wire(contact: Option<f64>) -> u16 {
    contact.map_or(CONTACT_UNSET, opening_to_permille)
}

pub fn contact_from_wire(p: u16) -> Option<f64> {
    (p != CONTACT_UNSET).then(|| permille_to_opening(p))
}

pub fn newton_to_cn(n: f64) -> u16 {
    (n.max(0.0) * 100.0).round().min(u16::MAX as f64) as u16
}

pub fn cn_to_newton(cn: u16) -> f64 {
    cn as f64 / 100.0
}

pub fn newton_to_mn(n: f64) -> u32 {
    (n.max(0.0) * 1000.0).round().min(u32::MAX as f64) as u32
}

pub fn mn_to_newton(mn: u32) -> f64 {
    mn as f64 / 1000.0
}

pub fn ml_to_ul(ml: f64) -> i64 {
    (ml * 1000.0).round() as i64
}

pub fn ul_to_ml(ul: i64) -> f64 {
    ul as f64 / 1000.0
}

pub fn pose_to_wire(t: &RobotTarget) -> WirePose {
    let p = t.tcp_position;
    let o = t.tcp_orientation;
    [
        mm_to_um(p[0]),
        mm_to_um(p[1]),
        mm_to_um(p[2]),
        deg_to_mdeg(o[0]),
        deg_to_mdeg(o[1]),
        deg_to_mdeg(o[2]),
    ]
}

pub fn pose_from_wire(w: &WirePose, timestamp_us: u64) -> RobotTarget {
    RobotTarget::new(
        [um_to_mm(w[0]), um_to_mm(w[1]), um_to_mm(w[2])],
        [mdeg_to_deg(w[3]), mdeg_to_deg(w[4]), mdeg_to_deg(w[5])],
        timestamp_us,
    )
}

pub fn frame_to_wire(f: &TactileFrame) -> [u16; SENSOR_CELLS] {
    let mut out = [0u16; SENSOR_CELLS];
    for (o, v) in out.iter_mut().zip(f.iter_cells()) {
        *o = newton_to_cn(v);
    }
    out
}

/// Rebuilds a frame from centinewton cells. Values outside the sensor's
/// range are rejected rather than silently clamped.
pub fn frame_from_wire(
    finger: Finger,
    cells_cn: &[u16; SENSOR_CELLS],
    timestamp_us: u64,
) -> Result<TactileFrame, TactileError> {
    let mut grid = [[0.0; SENSOR_COLS]; SENSOR_ROWS];
    for (k, &cn) in cells_cn.iter().enumerate() {
        grid[k / SENSOR_COLS][k % SENSOR_COLS] = cn_to_newton(cn);
    }
    TactileFrame::from_cells(finger, grid, timestamp_us)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert_eq!(mm_to_um(300.0004), 300_000);
        assert_eq!(mm_to_um(-0.0006), -1);
        assert_eq!(opening_to_permille(0.5), 500);
        assert_eq!(opening_to_permille(1.7), 1000);
        assert_eq!(contact_from_wire(contact_to_wire(None)), None);
        assert_eq!(contact_from_wire(contact_to_wire(Some(0.141))), Some(0.141));
        assert_eq!(newton_to_cn(9.0), 900);
        assert_eq!(ml_to_ul(-1.5), -1500);
    }

    #[test]
    fn pose_error_within_half_micron() {
        let t = RobotTarget::new([123.45678, -0.0004, 499.9999], [1.23456, 0.0, -90.0], 0);
        let back = pose_from_wire(&pose_to_wire(&t), 0);
        for i in 0..3 {
            assert!((back.tcp_position[i] - t.tcp_position[i]).abs() <= 0.0005 + 1e-12);
        }
    }
}
