//! Transfer-pipette bulb and the liquid bookkeeping around it.
//!
//! The bulb's free volume is `capacity · (1 − c)` for compression `c`.
//! Squeezing pushes out liquid first (tip down) and air after; releasing
//! with the tip submerged draws from the beaker, otherwise it draws air.

use serde::{Deserialize, Serialize};

use super::config::PipetteSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipetteModel {
    pub capacity_ml: f64,
    pub outer_diameter_mm: f64,
    pub min_squeezed_diameter_mm: f64,
    pub tip_length_mm: f64,
    pub held_ml: f64,
    pub compression: f64,
}

impl PipetteModel {
    pub fn from_spec(spec: &PipetteSpec) -> Self {
        Self {
            capacity_ml: spec.capacity_ml,
            outer_diameter_mm: spec.outer_diameter_mm,
            min_squeezed_diameter_mm: spec.min_squeezed_diameter_mm,
            tip_length_mm: spec.tip_length_mm,
            held_ml: 0.0,
            compression: 0.0,
        }
    }

    pub fn free_volume_ml(&self) -> f64 {
        self.free_volume_at(self.compression)
    }

    pub fn free_volume_at(&self, c: f64) -> f64 {
        self.capacity_ml * (1.0 - c)
    }

    /// Compression produced by a finger gap of `gap_mm`.
    pub fn compression_for_gap(&self, gap_mm: f64) -> f64 {
        let span = self.outer_diameter_mm - self.min_squeezed_diameter_mm;
        ((self.outer_diameter_mm - gap_mm) / span).clamp(0.0, 1.0)
    }

    /// Finger gap that produces compression `c`.
    pub fn gap_for_compression(&self, c: f64) -> f64 {
        self.outer_diameter_mm - c * (self.outer_diameter_mm - self.min_squeezed_diameter_mm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Location {
    Beaker,
    Tube(usize),
    Spill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidLedger {
    pub beaker_ml: f64,
    pub tubes_ml: Vec<f64>,
    pub pipette_ml: f64,
    pub spill_ml: f64,
}

impl LiquidLedger {
    pub fn new(beaker_ml: f64, tubes_ml: Vec<f64>) -> Self {
        Self {
            beaker_ml,
            tubes_ml,
            pipette_ml: 0.0,
            spill_ml: 0.0,
        }
    }

    pub fn total_ml(&self) -> f64 {
        self.beaker_ml + self.tubes_ml.iter().sum::<f64>() + self.pipette_ml + self.spill_ml
    }

    pub fn at(&self, loc: Location) -> f64 {
        match loc {
            Location::Beaker => self.beaker_ml,
            Location::Tube(i) => self.tubes_ml.get(i).copied().unwrap_or(0.0),
            Location::Spill => self.spill_ml,
        }
    }

    fn slot(&mut self, loc: Location) -> &mut f64 {
        match loc {
            Location::Beaker => &mut self.beaker_ml,
            Location::Tube(i) => &mut self.tubes_ml[i],
            Location::Spill => &mut self.spill_ml,
        }
    }

    /// Moves `ml` from the pipette into `loc` (negative moves the other way).
    pub fn exchange(&mut self, loc: Location, ml: f64) {
        self.pipette_ml -= ml;
        *self.slot(loc) += ml;
    }
}

/// Where the pipette tip currently is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "region", content = "tube", rename_all = "snake_case")]
pub enum TipRegion {
    OverBeakerSubmerged,
    OverBeakerAir,
    OverTube(usize),
    Elsewhere,
}

impl TipRegion {
    pub fn expel_destination(self) -> Location {
        match self {
            TipRegion::OverBeakerSubmerged | TipRegion::OverBeakerAir => Location::Beaker,
            TipRegion::OverTube(i) => Location::Tube(i),
            TipRegion::Elsewhere => Location::Spill,
        }
    }
}

/// A liquid movement between the pipette and a location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub location: Location,
    /// Positive: pipette → location. Negative: location → pipette.
    pub volume_ml: f64,
}

/// Applies a compression change of `delta_c` to the bulb.
///
/// The resulting compression is clamped to `[0, 1]` and the applied change
/// recomputed from it, so every input is handled.
pub fn pipette_flow(
    pipette: &mut PipetteModel,
    delta_c: f64,
    region: TipRegion,
    ledger: &mut LiquidLedger,
) -> Option<Transfer> {
    let c_old = pipette.compression;
    let c_new = (c_old + delta_c).clamp(0.0, 1.0);
    let dc = c_new - c_old;
    pipette.compression = c_new;

    let transfer = if dc > 0.0 {
        let out = pipette.held_ml.min(pipette.capacity_ml * dc);
        (out > 0.0).then(|| Transfer {
            location: region.expel_destination(),
            volume_ml: out,
        })
    } else if dc < 0.0 && region == TipRegion::OverBeakerSubmerged {
        let room = (pipette.free_volume_at(c_new) - pipette.held_ml).max(0.0);
        let draw = (pipette.capacity_ml * -dc).min(ledger.beaker_ml).min(room);
        (draw > 0.0).then(|| Transfer {
            location: Location::Beaker,
            volume_ml: -draw,
        })
    } else {
        None
    };

    if let Some(t) = transfer {
        ledger.exchange(t.location, t.volume_ml);
        // the ledger's pipette entry is the bulb's contents
        pipette.held_ml = ledger.pipette_ml;
    }
    transfer
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PipetteModel, LiquidLedger) {
        let p = PipetteModel::from_spec(&PipetteSpec::default());
        let l = LiquidLedger::new(50.0, vec![0.0, 0.0]);
        (p, l)
    }

    #[test]
    fn no_change_no_transfer() {
        let (mut p, mut l) = setup();
        p.compression = 0.4;
        assert!(pipette_flow(&mut p, 0.0, TipRegion::OverTube(0), &mut l).is_none());
        assert_eq!(l, LiquidLedger::new(50.0, vec![0.0, 0.0]));
    }

    #[test]
    fn full_release_submerged_fills_bulb() {
        let (mut p, mut l) = setup();
        p.compression = 1.0;
        pipette_flow(&mut p, -1.0, TipRegion::OverBeakerSubmerged, &mut l);
        assert_eq!(p.held_ml, 1.5);
        assert_eq!(l.beaker_ml, 48.5);

        let (mut p, _) = setup();
        let mut low = LiquidLedger::new(0.4, vec![0.0]);
        p.compression = 1.0;
        pipette_flow(&mut p, -1.0, TipRegion::OverBeakerSubmerged, &mut low);
        assert_eq!(p.held_ml, 0.4);
        assert_eq!(low.beaker_ml, 0.0);
    }

    #[test]
    fn full_squeeze_over_tube_empties_bulb() {
        let (mut p, mut l) = setup();
        l.beaker_ml -= 1.5;
        l.pipette_ml = 1.5;
        p.held_ml = 1.5;
        let t = pipette_flow(&mut p, 1.0, TipRegion::OverTube(1), &mut l).unwrap();
        assert_eq!(t.location, Location::Tube(1));
        assert_eq!(l.tubes_ml[1], 1.5);
        assert_eq!(p.held_ml, 0.0);
        assert_eq!(l.total_ml(), 50.0);
    }

    #[test]
    fn release_in_air_draws_nothing() {
        let (mut p, mut l) = setup();
        p.compression = 0.8;
        assert!(pipette_flow(&mut p, -0.8, TipRegion::OverBeakerAir, &mut l).is_none());
        assert_eq!(p.compression, 0.0);
    }

    #[test]
    fn squeeze_elsewhere_spills() {
        let (mut p, mut l) = setup();
        l.beaker_ml -= 1.0;
        l.pipette_ml = 1.0;
        p.held_ml = 1.0;
        pipette_flow(&mut p, 0.2, TipRegion::Elsewhere, &mut l);
        assert!((l.spill_ml - 0.3).abs() < 1e-12);
    }

    #[test]
    fn partial_draw_limited_by_free_volume() {
        let (mut p, mut l) = setup();
        // 1.0 ml held at c = 0.5 leaves no room; releasing to 0.25 makes 0.375 ml room
        p.compression = 0.5;
        p.held_ml = 0.75;
        l.pipette_ml = 0.75;
        l.beaker_ml -= 0.75;
        pipette_flow(&mut p, -0.25, TipRegion::OverBeakerSubmerged, &mut l);
        assert!((p.held_ml - 1.125).abs() < 1e-12);
        assert!(p.held_ml <= p.free_volume_ml() + 1e-12);
    }

    #[test]
    fn compression_gap_round_trip() {
        let p = PipetteModel::from_spec(&PipetteSpec::default());
        assert_eq!(p.compression_for_gap(12.0), 0.0);
        assert_eq!(p.compression_for_gap(4.0), 1.0);
        assert_eq!(p.compression_for_gap(20.0), 0.0);
        assert!((p.compression_for_gap(p.gap_for_compression(0.3)) - 0.3).abs() < 1e-12);
    }
}
