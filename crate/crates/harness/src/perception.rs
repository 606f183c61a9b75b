//! What the scripted operator can make of each feedback channel.
//!
//! Both haptic estimators recover bulb compression `c`. The force reading
//! is inverted through a model that assumes a nominal collapse limit, so it
//! is smooth but biased when the real bulb differs. The electrode display
//! is read as a coarse intensity picture whose appearance depends on `c`
//! alone, so it is unbiased but only brackets `c`.

use std::collections::BTreeMap;

use telehaptic_core::haptics::GRASP_CELLS;
use telehaptic_core::sim::footprint::contact_frames;
use telehaptic_core::sim::SceneConfig;
use telehaptic_core::tactile::{resample_bicubic, ELECTRODE_COLS, ELECTRODE_ROWS};
use telehaptic_core::ElectrodePattern;

/// Electrode intensities as the operator tells them apart, both fingers.
pub type PerceivedPattern = [[[u8; ELECTRODE_COLS]; ELECTRODE_ROWS]; 2];

pub fn perceive(patterns: &(ElectrodePattern, ElectrodePattern), levels: u8) -> PerceivedPattern {
    let steps = f64::from(levels - 1);
    let one = |p: &ElectrodePattern| {
        p.cells()
            .map(|row| row.map(|v| (v.clamp(0.0, 1.0) * steps + 0.5).floor() as u8))
    };
    [one(&patterns.0), one(&patterns.1)]
}

/// Compression interval `[lo, hi]` over which a pattern is displayed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn clamp(&self, c: f64) -> f64 {
        c.clamp(self.lo, self.hi)
    }
}

/// Pattern-to-compression lookup learned by sweeping the footprint.
#[derive(Debug, Clone)]
pub struct ElectrodeTable {
    map: BTreeMap<PerceivedPattern, Bracket>,
}

const SWEEP_STEPS: usize = 4000;

impl ElectrodeTable {
    pub fn build(scene: &SceneConfig, levels: u8) -> Self {
        let mut map: BTreeMap<PerceivedPattern, Bracket> = BTreeMap::new();
        for k in 0..=SWEEP_STEPS {
            let c = k as f64 / SWEEP_STEPS as f64;
            let (l, r) = contact_frames(c, scene.contact_rows, 0);
            let seen = perceive(&(resample_bicubic(&l), resample_bicubic(&r)), levels);
            map.entry(seen)
                .and_modify(|b| {
                    b.lo = b.lo.min(c);
                    b.hi = b.hi.max(c);
                })
                .or_insert(Bracket { lo: c, hi: c });
        }
        Self { map }
    }

    pub fn lookup(&self, seen: &PerceivedPattern) -> Option<Bracket> {
        self.map.get(seen).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn brackets(&self) -> Vec<Bracket> {
        let mut v: Vec<_> = self.map.values().copied().collect();
        v.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        v
    }
}

/// Grasp-force model the operator believes in: the nominal footprint and a
/// bulb that collapses to `assumed_min_mm`, closed from `hold_opening`.
#[derive(Debug, Clone)]
pub struct ForceModel {
    contact_rows: [usize; 2],
    outer_mm: f64,
    assumed_min_mm: f64,
    stroke_mm: f64,
    hold_opening: f64,
}

impl ForceModel {
    pub fn new(scene: &SceneConfig, assumed_min_mm: f64, hold_opening: f64) -> Self {
        Self {
            contact_rows: scene.contact_rows,
            outer_mm: scene.pipette.outer_diameter_mm,
            assumed_min_mm,
            stroke_mm: scene.gripper_stroke_mm,
            hold_opening,
        }
    }

    /// Opening the operator expects at compression `c`.
    pub fn opening_at(&self, c: f64) -> f64 {
        (self.outer_mm - c * (self.outer_mm - self.assumed_min_mm)) / self.stroke_mm
    }

    /// Compression the operator expects at `opening`.
    pub fn compression_at(&self, opening: f64) -> f64 {
        ((self.outer_mm - opening * self.stroke_mm) / (self.outer_mm - self.assumed_min_mm)).clamp(0.0, 1.0)
    }

    pub fn force_at(&self, c: f64) -> f64 {
        let (l, r) = contact_frames(c, self.contact_rows, 0);
        let mean = (l.total_force() + r.total_force()) / GRASP_CELLS as f64;
        mean * (self.hold_opening - self.opening_at(c)).max(0.0)
    }

    /// Compression whose modelled force is `f`, by bisection.
    pub fn invert(&self, f: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        if f <= self.force_at(lo) {
            return lo;
        }
        if f >= self.force_at(hi) {
            return hi;
        }
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if self.force_at(mid) < f {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}
