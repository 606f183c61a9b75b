//! Fingertip force grids and the electrode patterns derived from them.
//!
//! A gripper pad reports a 10×5 grid of contact forces (rows run along the
//! pad's long axis). The sensor cannot resolve forces below 1 N and saturates
//! at 9 N, so frames only ever hold `0` or a value in `[1, 9]`.
//!
//! The operator-side display is a 4×5 electrode matrix. Frames are reduced to
//! it with cubic convolution (Keys kernel, `a = -0.5`), edge-clamped sampling
//! and align-corners coordinates, then normalised by the saturation force.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const SENSOR_ROWS: usize = 10;
pub const SENSOR_COLS: usize = 5;
pub const SENSOR_CELLS: usize = SENSOR_ROWS * SENSOR_COLS;

pub const ELECTRODE_ROWS: usize = 4;
pub const ELECTRODE_COLS: usize = 5;
pub const ELECTRODE_CELLS: usize = ELECTRODE_ROWS * ELECTRODE_COLS;

/// Smallest force a sensor cell reports, newtons.
pub const DETECTION_FLOOR_N: f64 = 1.0;
/// Force at which a sensor cell saturates, newtons.
pub const SATURATION_N: f64 = 9.0;

/// Cubic convolution parameter used for the electrode mapping.
pub const CUBIC_A: f64 = -0.5;

pub type SensorGrid<T> = [[T; SENSOR_COLS]; SENSOR_ROWS];
pub type ElectrodeGrid<T> = [[T; ELECTRODE_COLS]; ELECTRODE_ROWS];
pub type LevelGrid = [[u8; ELECTRODE_COLS]; ELECTRODE_ROWS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Left,
    Right,
}

impl Finger {
    pub const BOTH: [Finger; 2] = [Finger::Left, Finger::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Finger::Left => "left",
            Finger::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TactileError {
    #[error("invalid sensor value {value} at row {row}, col {col}")]
    InvalidSensorValue { row: usize, col: usize, value: f64 },
    #[error("cell ({row}, {col}) = {value} N is neither 0 nor within the 1-9 N sensing range")]
    CellOutOfRange { row: usize, col: usize, value: f64 },
    #[error("electrode ({row}, {col}) intensity {value} outside [0, 1]")]
    IntensityOutOfRange { row: usize, col: usize, value: f64 },
}

/// One sampling instant of one finger pad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TactileFrame<T> {
    finger: Finger,
    cells: SensorGrid<T>,
    timestamp_us: u64,
}

impl<T: Scalar> TactileFrame<T> {
    pub fn zeros(finger: Finger, timestamp_us: u64) -> Self {
        Self {
            finger,
            cells: [[T::zero(); SENSOR_COLS]; SENSOR_ROWS],
            timestamp_us,
        }
    }

    /// Builds a frame from cells that already satisfy the sensor invariant.
    pub fn from_cells(finger: Finger, cells: SensorGrid<T>, timestamp_us: u64) -> Result<Self, TactileError> {
        let floor = T::lit(DETECTION_FLOOR_N);
        let sat = T::lit(SATURATION_N);
        for (row, line) in cells.iter().enumerate() {
            for (col, &v) in line.iter().enumerate() {
                if !(v == T::zero() || (v >= floor && v <= sat)) {
                    return Err(TactileError::CellOutOfRange {
                        row,
                        col,
                        value: v.to_f64_lossy(),
                    });
                }
            }
        }
        Ok(Self {
            finger,
            cells,
            timestamp_us,
        })
    }

    pub fn finger(&self) -> Finger {
        self.finger
    }

    pub fn cells(&self) -> &SensorGrid<T> {
        &self.cells
    }

    pub fn timestamp_us(&self) -> u64 {
        self.timestamp_us
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = T> + '_ {
        self.cells.iter().flat_map(|row| row.iter().copied())
    }

    pub fn total_force(&self) -> T {
        self.iter_cells().fold(T::zero(), |acc, v| acc + v)
    }

    pub fn nonzero_count(&self) -> usize {
        self.iter_cells().filter(|v| *v != T::zero()).count()
    }

    pub fn is_zero(&self) -> bool {
        self.iter_cells().all(|v| v == T::zero())
    }
}

/// Applies the sensor's detection floor and saturation to raw contact forces.
///
/// Cells below 1 N read as exactly 0 and cells above 9 N read as 9 N.
pub fn clamp_sensor<T: Scalar>(
    finger: Finger,
    raw: &SensorGrid<T>,
    timestamp_us: u64,
) -> Result<TactileFrame<T>, TactileError> {
    let floor = T::lit(DETECTION_FLOOR_N);
    let sat = T::lit(SATURATION_N);
    let mut cells = [[T::zero(); SENSOR_COLS]; SENSOR_ROWS];
    for (row, line) in raw.iter().enumerate() {
        for (col, &v) in line.iter().enumerate() {
            if !v.is_finite() || v < T::zero() {
                return Err(TactileError::InvalidSensorValue {
                    row,
                    col,
                    value: v.to_f64_lossy(),
                });
            }
            cells[row][col] = if v < floor { T::zero() } else { v.min(sat) };
        }
    }
    Ok(TactileFrame {
        finger,
        cells,
        timestamp_us,
    })
}

/// A 4×5 grid of stimulation intensities in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectrodePattern<T> {
    finger: Finger,
    cells: ElectrodeGrid<T>,
    source_timestamp_us: u64,
}

impl<T: Scalar> ElectrodePattern<T> {
    pub fn from_cells(finger: Finger, cells: ElectrodeGrid<T>, source_timestamp_us: u64) -> Result<Self, TactileError> {
        for (row, line) in cells.iter().enumerate() {
            for (col, &v) in line.iter().enumerate() {
                if !(v >= T::zero() && v <= T::one()) {
                    return Err(TactileError::IntensityOutOfRange {
                        row,
                        col,
                        value: v.to_f64_lossy(),
                    });
                }
            }
        }
        Ok(Self {
            finger,
            cells,
            source_timestamp_us,
        })
    }

    pub fn finger(&self) -> Finger {
        self.finger
    }

    pub fn cells(&self) -> &ElectrodeGrid<T> {
        &self.cells
    }

    pub fn source_timestamp_us(&self) -> u64 {
        self.source_timestamp_us
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = T> + '_ {
        self.cells.iter().flat_map(|row| row.iter().copied())
    }
}

/// Keys cubic convolution kernel.
#[inline]
pub fn cubic_kernel<T: Scalar>(x: T, a: T) -> T {
    let x = x.abs();
    let one = T::one();
    let two = T::lit(2.0);
    if x <= one {
        ((a + two) * x - (a + T::lit(3.0))) * x * x + one
    } else if x < two {
        ((a * x - T::lit(5.0) * a) * x + T::lit(8.0) * a) * x - T::lit(4.0) * a
    } else {
        T::zero()
    }
}

/// Source coordinate of destination sample `index` under align-corners mapping.
#[inline]
pub fn align_corners_coord<T: Scalar>(index: usize, src_len: usize, dst_len: usize) -> T {
    if dst_len <= 1 {
        return T::zero();
    }
    T::lit(index as f64) * T::lit((src_len - 1) as f64) / T::lit((dst_len - 1) as f64)
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Resizes a grid with cubic convolution, edge-clamped borders and
/// align-corners coordinate mapping.
pub fn resize_bicubic<T: Scalar, const SR: usize, const SC: usize, const DR: usize, const DC: usize>(
    src: &[[T; SC]; SR],
    a: T,
) -> [[T; DC]; DR] {
    let mut dst = [[T::zero(); DC]; DR];
    for (r, dst_row) in dst.iter_mut().enumerate() {
        let sy: T = align_corners_coord(r, SR, DR);
        let iy = sy.floor();
        let fy = sy - iy;
        let iy = iy.to_isize().unwrap_or(0);
        let wy: [T; 4] = std::array::from_fn(|k| cubic_kernel(T::lit(k as f64 - 1.0) - fy, a));

        for (c, out) in dst_row.iter_mut().enumerate() {
            let sx: T = align_corners_coord(c, SC, DC);
            let ix = sx.floor();
            let fx = sx - ix;
            let ix = ix.to_isize().unwrap_or(0);
            let wx: [T; 4] = std::array::from_fn(|k| cubic_kernel(T::lit(k as f64 - 1.0) - fx, a));

            let mut acc = T::zero();
            for (m, &w_row) in wy.iter().enumerate() {
                if w_row == T::zero() {
                    continue;
                }
                let y = clamp_index(iy + m as isize - 1, SR);
                let mut line = T::zero();
                for (n, &w_col) in wx.iter().enumerate() {
                    let x = clamp_index(ix + n as isize - 1, SC);
                    line += w_col * src[y][x];
                }
                acc += w_row * line;
            }
            *out = acc;
        }
    }
    dst
}

/// Maps a tactile frame onto the 4×5 electrode display.
///
/// Only the 10-row axis is reduced; the 5 columns map onto themselves.
pub fn resample_bicubic<T: Scalar>(frame: &TactileFrame<T>) -> ElectrodePattern<T> {
    let forces: ElectrodeGrid<T> = resize_bicubic(frame.cells(), T::lit(CUBIC_A));
    let sat = T::lit(SATURATION_N);
    let cells = forces.map(|row| row.map(|f| f.clamp_to(T::zero(), sat) / sat));
    ElectrodePattern {
        finger: frame.finger(),
        cells,
        source_timestamp_us: frame.timestamp_us(),
    }
}

/// Quantises intensities to 8-bit stimulation levels (round half up).
pub fn pattern_to_levels<T: Scalar>(pattern: &ElectrodePattern<T>) -> LevelGrid {
    pattern.cells().map(|row| {
        row.map(|v| {
            let scaled = (v * T::lit(255.0) + T::lit(0.5)).floor();
            scaled.to_u8().unwrap_or(if scaled > T::zero() { u8::MAX } else { 0 })
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(v: f64) -> SensorGrid<f64> {
        [[v; SENSOR_COLS]; SENSOR_ROWS]
    }

    #[test]
    fn clamp_zeroes_sub_threshold_and_saturates() {
        let f = clamp_sensor(Finger::Left, &grid(0.0), 0).unwrap();
        assert!(f.is_zero());
        let f = clamp_sensor(Finger::Left, &grid(12.0), 0).unwrap();
        assert!(f.iter_cells().all(|v| v == 9.0));

        let mut raw = grid(0.0);
        raw[0] = [0.5, 1.0, 5.0, 9.0, 9.5];
        let f = clamp_sensor(Finger::Right, &raw, 3).unwrap();
        assert_eq!(f.cells()[0], [0.0, 1.0, 5.0, 9.0, 9.0]);
        assert_eq!(f.timestamp_us(), 3);
    }

    #[test]
    fn clamp_rejects_negative_and_nan() {
        let mut raw = grid(2.0);
        raw[4][1] = -0.1;
        assert!(matches!(
            clamp_sensor(Finger::Left, &raw, 0),
            Err(TactileError::InvalidSensorValue { row: 4, col: 1, .. })
        ));
        raw[4][1] = f64::NAN;
        assert!(clamp_sensor(Finger::Left, &raw, 0).is_err());
        raw[4][1] = f64::INFINITY;
        assert!(clamp_sensor(Finger::Left, &raw, 0).is_err());
    }

    #[test]
    fn from_cells_enforces_sensor_range() {
        let mut cells = grid(0.0);
        cells[2][2] = 0.4;
        assert!(TactileFrame::from_cells(Finger::Left, cells, 0).is_err());
        cells[2][2] = 9.0;
        assert!(TactileFrame::from_cells(Finger::Left, cells, 0).is_ok());
    }

    #[test]
    fn kernel_interpolates_at_integers() {
        let a = CUBIC_A;
        assert_eq!(cubic_kernel(0.0, a), 1.0);
        assert_eq!(cubic_kernel(1.0, a), 0.0);
        assert_eq!(cubic_kernel(-1.0, a), 0.0);
        assert_eq!(cubic_kernel(2.0, a), 0.0);
        // partition of unity at a fractional offset
        let t = 0.3;
        let s: f64 = (-1..=2).map(|k| cubic_kernel(k as f64 - t, a)).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_frame_maps_to_constant_pattern() {
        let f = clamp_sensor(Finger::Left, &grid(4.5), 0).unwrap();
        let p = resample_bicubic(&f);
        assert!(p.iter_cells().all(|v| (v - 0.5).abs() <= 1e-9));
    }

    #[test]
    fn zero_frame_maps_to_zero_levels() {
        let f = TactileFrame::<f64>::zeros(Finger::Right, 9);
        let p = resample_bicubic(&f);
        assert!(p.iter_cells().all(|v| v == 0.0));
        assert_eq!(p.source_timestamp_us(), 9);
        assert_eq!(pattern_to_levels(&p), [[0; 5]; 4]);
    }

    #[test]
    fn levels_round_half_up() {
        let mut cells = [[0.0; 5]; 4];
        cells[0][0] = 1.0;
        cells[0][1] = 0.5;
        let p = ElectrodePattern::from_cells(Finger::Left, cells, 0).unwrap();
        let l = pattern_to_levels(&p);
        assert_eq!(l[0][0], 255);
        assert_eq!(l[0][1], 128);
        assert_eq!(l[1][0], 0);
    }

    #[test]
    fn pattern_rejects_out_of_range_intensity() {
        let mut cells = [[0.0; 5]; 4];
        cells[3][4] = 1.01;
        assert!(ElectrodePattern::from_cells(Finger::Left, cells, 0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let f = clamp_sensor(Finger::Left, &[[4.5f32; 5]; 10], 0).unwrap();
        let p = resample_bicubic(&f);
        assert!(p.iter_cells().all(|v| (v - 0.5).abs() < 1e-6));
    }
}
