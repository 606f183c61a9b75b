//! Synthetic contact footprint of a squeezed pipette on the gripper pads.
//!
//! The pipette lies along the pad's long axis. Across the pad the force
//! profile is a Gaussian stripe centred on the middle column whose peak and
//! width both grow with compression `c`:
//!
//! ```text
//! peak(c)  = 1 + 8c    N
//! width(c) = 0.6 + 2.4c   cells
//! ```
//!
//! so first contact sits at the 1 N detection floor on a single column and a
//! full squeeze saturates the centre at 9 N.

use crate::tactile::{clamp_sensor, Finger, SensorGrid, TactileFrame, SENSOR_COLS, SENSOR_ROWS};

pub const PAD_CENTER_COL: f64 = ((SENSOR_COLS - 1) as f64) / 2.0;

pub fn peak_force(c: f64) -> f64 {
    1.0 + 8.0 * c
}

pub fn contact_half_width(c: f64) -> f64 {
    0.6 + 2.4 * c
}

/// Raw (unclamped) force on one cell.
pub fn footprint_force(c: f64, row: usize, col: usize, contact_rows: [usize; 2]) -> f64 {
    if row < contact_rows[0] || row > contact_rows[1] {
        return 0.0;
    }
    let z = (col as f64 - PAD_CENTER_COL) / contact_half_width(c);
    peak_force(c) * (-z * z).exp()
}

pub fn raw_footprint(c: f64, contact_rows: [usize; 2]) -> SensorGrid<f64> {
    let mut g = [[0.0; SENSOR_COLS]; SENSOR_ROWS];
    for (row, line) in g.iter_mut().enumerate() {
        for (col, cell) in line.iter_mut().enumerate() {
            *cell = footprint_force(c, row, col, contact_rows);
        }
    }
    g
}

/// Both pad frames for a pipette held at compression `c`.
pub fn contact_frames(c: f64, contact_rows: [usize; 2], timestamp_us: u64) -> (TactileFrame<f64>, TactileFrame<f64>) {
    let raw = raw_footprint(c.clamp(0.0, 1.0), contact_rows);
    // raw footprint values are finite and nonnegative by construction
    let left = clamp_sensor(Finger::Left, &raw, timestamp_us).expect("finite footprint");
    let right = clamp_sensor(Finger::Right, &raw, timestamp_us).expect("finite footprint");
    (left, right)
}
