//! The production resampler sums the Keys kernel tap by tap. The reference
//! here evaluates the Catmull-Rom spline in its matrix form instead, so the
//! two share no arithmetic beyond the sample lookup.

#![allow(clippy::needless_range_loop, clippy::manual_clamp)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use telehaptic_core::tactile::{clamp_sensor, resample_bicubic, Finger, SensorGrid, SENSOR_COLS, SENSOR_ROWS};
use telehaptic_core::TactileFrame;

const CATMULL_ROM: [[f64; 4]; 4] = [
    [0.0, 2.0, 0.0, 0.0],
    [-1.0, 0.0, 1.0, 0.0],
    [2.0, -5.0, 4.0, -1.0],
    [-1.0, 3.0, -3.0, 1.0],
];

fn spline(p: [f64; 4], t: f64) -> f64 {
    let powers = [1.0, t, t * t, t * t * t];
    let mut out = 0.0;
    for (i, row) in CATMULL_ROM.iter().enumerate() {
        let dot: f64 = row.iter().zip(p.iter()).map(|(m, v)| m * v).sum();
        out += powers[i] * dot;
    }
    0.5 * out
}

/// 10 rows down to 4, columns untouched, forces mapped to [0, 1].
fn reference(cells: &SensorGrid<f64>) -> [[f64; 5]; 4] {
    let mut out = [[0.0; 5]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        let y = r as f64 * 3.0;
        let base = y.floor() as i64;
        let t = y - base as f64;
        for (c, v) in row.iter_mut().enumerate() {
            let tap = |k: i64| cells[(base + k).clamp(0, 9) as usize][c];
            let f = spline([tap(-1), tap(0), tap(1), tap(2)], t);
            *v = f.max(0.0).min(9.0) / 9.0;
        }
    }
    out
}

fn assert_matches(frame: &TactileFrame) {
    let got = resample_bicubic(frame);
    let want = reference(frame.cells());
    for r in 0..4 {
        for c in 0..5 {
            let d = (got.cells()[r][c] - want[r][c]).abs();
            assert!(d <= 1e-9, "cell ({r},{c}): {} vs {}", got.cells()[r][c], want[r][c]);
        }
    }
}

#[test]
fn random_frames_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7ac7);
    for _ in 0..100 {
        let mut raw = [[0.0; SENSOR_COLS]; SENSOR_ROWS];
        for v in raw.iter_mut().flatten() {
            *v = rng.random_range(0.0..10.0);
        }
        let f = clamp_sensor(Finger::Left, &raw, 0).unwrap();
        assert_matches(&f);
    }
}

#[test]
fn constant_fields_match_reference() {
    for v in [0.0, 1.0, 4.5, 9.0] {
        let f = clamp_sensor(Finger::Right, &[[v; 5]; 10], 3).unwrap();
        assert_matches(&f);
        let p = resample_bicubic(&f);
        assert!(p.iter_cells().all(|x| (x - v / 9.0).abs() < 1e-12));
    }
}

#[test]
fn linear_fields_match_reference() {
    // cubic convolution reproduces linear ramps exactly away from clamped borders
    let mut rows = [[0.0; 5]; 10];
    let mut cols = [[0.0; 5]; 10];
    for r in 0..10 {
        for c in 0..5 {
            rows[r][c] = 1.0 + 0.8 * r as f64;
            cols[r][c] = 1.0 + 2.0 * c as f64;
        }
    }
    for raw in [rows, cols] {
        let f = clamp_sensor(Finger::Left, &raw, 0).unwrap();
        assert_matches(&f);
    }
    let p = resample_bicubic(&clamp_sensor(Finger::Left, &rows, 0).unwrap());
    for (r, want) in [(1, 1.0 + 0.8 * 3.0), (2, 1.0 + 0.8 * 6.0)] {
        assert!((p.cells()[r][0] - want / 9.0).abs() < 1e-12);
    }
}
