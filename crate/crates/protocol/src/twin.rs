//! Master-side mirror of the remote cell, rebuilt from the wire streams.

use serde::{Deserialize, Serialize};

use telehaptic_core::sim::Location;
use telehaptic_core::RobotTarget;

use crate::quant::{contact_from_wire, permille_to_opening, pose_from_wire, ul_to_ml};
use crate::wire::{WireLocation, WirePose};

/// Last robot state heard from the slave, kept in wire units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TwinState {
    pub pose: WirePose,
    pub opening_permille: u16,
    pub contact_permille: u16,
    /// Slave timestamp of the state; `None` before the first update.
    pub last_update_us: Option<u64>,
}

impl TwinState {
    pub fn apply(&mut self, pose: WirePose, opening: u16, contact: u16, timestamp_us: u64) {
        // stale or reordered states never overwrite newer ones
        if self.last_update_us.is_some_and(|t| t > timestamp_us) {
            return;
        }
        self.pose = pose;
        self.opening_permille = opening;
        self.contact_permille = contact;
        self.last_update_us = Some(timestamp_us);
    }

    pub fn is_synced(&self) -> bool {
        self.last_update_us.is_some()
    }

    pub fn robot(&self) -> RobotTarget {
        pose_from_wire(&self.pose, self.last_update_us.unwrap_or(0))
    }

    pub fn position_mm(&self) -> [f64; 3] {
        self.robot().tcp_position
    }

    pub fn opening(&self) -> f64 {
        permille_to_opening(self.opening_permille)
    }

    pub fn contact_opening(&self) -> Option<f64> {
        contact_from_wire(self.contact_permille)
    }

    pub fn staleness_us(&self, now_us: u64) -> Option<u64> {
        self.last_update_us.map(|t| now_us.saturating_sub(t))
    }

    /// Euclidean distance between the mirrored and a true TCP position, mm.
    pub fn deviation_mm(&self, truth: &RobotTarget) -> f64 {
        let p = self.position_mm();
        (0..3)
            .map(|i| (p[i] - truth.tcp_position[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn location_to_wire(loc: Location) -> WireLocation {
    match loc {
        Location::Beaker => WireLocation::Beaker,
        Location::Spill => WireLocation::Spill,
        Location::Tube(i) => WireLocation::Tube(i.min(crate::wire::MAX_TUBES as usize) as u8),
    }
}

pub fn location_from_wire(loc: WireLocation) -> Option<Location> {
    match loc {
        WireLocation::None => None,
        WireLocation::Beaker => Some(Location::Beaker),
        WireLocation::Spill => Some(Location::Spill),
        WireLocation::Tube(i) => Some(Location::Tube(i as usize)),
    }
}

/// Converts continuous transfers into integer µl deltas whose running sum
/// per location always equals the rounded cumulative volume, so rounding
/// never accumulates on the receiving side.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferQuantizer {
    cumulative_ml: Vec<(WireLocation, f64, i64)>,
}

impl TransferQuantizer {
    /// Records `ml` moved into `loc` (negative: out of it) and returns the
    /// µl delta to report.
    pub fn push(&mut self, loc: WireLocation, ml: f64) -> i64 {
        let entry = match self.cumulative_ml.iter_mut().find(|e| e.0 == loc) {
            Some(e) => e,
            None => {
                self.cumulative_ml.push((loc, 0.0, 0));
                self.cumulative_ml.last_mut().unwrap()
            }
        };
        entry.1 += ml;
        let total_ul = (entry.1 * 1000.0).round() as i64;
        let delta = total_ul - entry.2;
        entry.2 = total_ul;
        delta
    }
}

/// Liquid levels reconstructed from scene events, µl.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LedgerMirror {
    pub beaker_ul: i64,
    pub tubes_ul: Vec<i64>,
    pub spill_ul: i64,
    /// Liquid inside the pipette, the negated sum of every transfer.
    pub pipette_ul: i64,
}

impl LedgerMirror {
    pub fn new(beaker_ml: f64, tubes_ml: &[f64]) -> Self {
        Self {
            beaker_ul: (beaker_ml * 1000.0).round() as i64,
            tubes_ul: tubes_ml.iter().map(|v| (v * 1000.0).round() as i64).collect(),
            spill_ul: 0,
            pipette_ul: 0,
        }
    }

    pub fn apply(&mut self, loc: WireLocation, delta_ul: i64) {
        let slot = match loc {
            WireLocation::None => return,
            WireLocation::Beaker => &mut self.beaker_ul,
            WireLocation::Spill => &mut self.spill_ul,
            WireLocation::Tube(i) => {
                let i = i as usize;
                if self.tubes_ul.len() <= i {
                    self.tubes_ul.resize(i + 1, 0);
                }
                &mut self.tubes_ul[i]
            }
        };
        *slot += delta_ul;
        self.pipette_ul -= delta_ul;
    }

    pub fn tube_ml(&self, i: usize) -> f64 {
        ul_to_ml(self.tubes_ul.get(i).copied().unwrap_or(0))
    }

    pub fn pipette_ml(&self) -> f64 {
        ul_to_ml(self.pipette_ul)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantizer_does_not_drift() {
        let mut q = TransferQuantizer::default();
        let mut sent = 0;
        let mut truth = 0.0;
        for k in 0..1000 {
            let ml = 0.0004 + (k % 7) as f64 * 0.00013;
            truth += ml;
            sent += q.push(WireLocation::Tube(0), ml);
        }
        assert!((sent as f64 / 1000.0 - truth).abs() <= 0.0005);
    }

    #[test]
    fn mirror_conserves() {
        let mut m = LedgerMirror::new(50.0, &[0.0, 0.0]);
        m.apply(WireLocation::Beaker, -1500);
        m.apply(WireLocation::Tube(1), 1200);
        m.apply(WireLocation::Spill, 300);
        assert_eq!(
            m.beaker_ul + m.tubes_ul.iter().sum::<i64>() + m.spill_ul + m.pipette_ul,
            50_000
        );
        assert_eq!(m.pipette_ul, 0);
        assert_eq!(m.tube_ml(1), 1.2);
    }

    #[test]
    fn twin_ignores_older_states() {
        let mut t = TwinState::default();
        t.apply([1, 2, 3, 0, 0, 0], 100, 0xFFFF, 20_000);
        t.apply([9, 9, 9, 0, 0, 0], 100, 0xFFFF, 10_000);
        assert_eq!(t.pose[0], 1);
        assert_eq!(t.contact_opening(), None);
    }
}
