//! Scripted operators for the four feedback conditions, plus an oracle
//! that reads the true cell state.
//!
//! Every scripted operator runs the same dosing plan and differs only in
//! how it judges the volume it has squeezed out:
//!
//! - V glances at the tube (noisy) and stops once a glance reads the target.
//! - VF inverts the rendered grasp force through its bulb model.
//! - VE reads the electrode picture and takes the middle of its bracket.
//! - VFE inverts force, rescales that model whenever the electrode picture
//!   steps to a new bracket, and keeps the result inside the bracket.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use telehaptic_core::control::clamp_to_device_workspace;
use telehaptic_core::{ElectrodePattern, HapticInput};
use telehaptic_protocol::{LedgerMirror, TwinState};

use crate::perception::{perceive, Bracket, ElectrodeTable, ForceModel};
use crate::scenario::ScenarioSpec;

/// Which observation channels a scripted operator receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackCondition {
    V,
    VF,
    VE,
    VFE,
}

impl FeedbackCondition {
    pub const ALL: [FeedbackCondition; 4] = [Self::V, Self::VF, Self::VE, Self::VFE];

    pub fn name(self) -> &'static str {
        match self {
            Self::V => "v",
            Self::VF => "vf",
            Self::VE => "ve",
            Self::VFE => "vfe",
        }
    }

    pub fn force(self) -> bool {
        matches!(self, Self::VF | Self::VFE)
    }

    pub fn electrodes(self) -> bool {
        matches!(self, Self::VE | Self::VFE)
    }
}

/// Who drives the master: a scripted operator limited to one condition's
/// channels, or the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum OperatorKind {
    Scripted(FeedbackCondition),
    Oracle,
}

impl OperatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Scripted(c) => c.name(),
            Self::Oracle => "oracle",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<OperatorKind> for String {
    fn from(k: OperatorKind) -> String {
        k.name().to_string()
    }
}

impl TryFrom<String> for OperatorKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl FromStr for OperatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().replace(['+', '_'], "").as_str() {
            "v" => Self::Scripted(FeedbackCondition::V),
            "vf" => Self::Scripted(FeedbackCondition::VF),
            "ve" => Self::Scripted(FeedbackCondition::VE),
            "vfe" => Self::Scripted(FeedbackCondition::VFE),
            "oracle" => Self::Oracle,
            other => return Err(format!("unknown condition '{other}' (v, vf, ve, vfe, oracle)")),
        })
    }
}

/// True cell state, shown only to the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub tubes_ml: Vec<f64>,
    pub pipette_ml: f64,
}

/// Everything the master side shows at one instant.
pub struct Observation<'a> {
    pub t_us: u64,
    pub twin: &'a TwinState,
    pub ledger: &'a LedgerMirror,
    pub force_n: f64,
    pub force_stamp_us: u64,
    pub electrodes: Option<&'a (ElectrodePattern, ElectrodePattern)>,
    pub truth: Option<Truth>,
}

/// Per-trial perception aids, shared read-only between trials.
#[derive(Debug, Clone)]
pub struct Perception {
    pub table: Arc<ElectrodeTable>,
    pub force: ForceModel,
}

impl Perception {
    pub fn new(spec: &ScenarioSpec) -> Self {
        Self {
            table: Arc::new(ElectrodeTable::build(&spec.scene, spec.operator.electrode_levels)),
            force: ForceModel::new(&spec.scene, spec.operator.assumed_min_diameter_mm, spec.hold_opening()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub input: HapticInput,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Place {
    Start,
    Rack,
    BeakerAbove,
    BeakerIn,
    Tube(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Task {
    WaitSync,
    Move(Place),
    Grip(f64),
    Pause(u64),
    Fill,
    DispenseAll,
    DispenseSome(f64),
    Check,
}

#[derive(Debug, Clone, Copy, Default)]
struct Active {
    started_us: u64,
    handle_done: bool,
    stable_updates: u32,
    last_opening: Option<u16>,
    last_twin_us: Option<u64>,
    glances: u32,
    glance_sum: f64,
    next_glance_us: u64,
    c_est: f64,
    bracket: Option<Bracket>,
}

/// Scripted operator. Call [`Operator::act`] once per command period.
pub struct Operator {
    kind: OperatorKind,
    spec: ScenarioSpec,
    perception: Perception,
    rng: ChaCha8Rng,
    dt_s: f64,

    handle: [f64; 3],
    grip: f64,
    place: Place,
    queue: VecDeque<Task>,
    task: Option<(Task, Active)>,

    dose_index: usize,
    /// Believed volume added to the current dosing tube, ml.
    dispensed_est: f64,
    /// Believed liquid in the bulb, ml.
    held_est: f64,
    top_ups: u32,
    /// Ratio of felt to modelled force, learnt from electrode steps.
    force_gain: Option<f64>,
    last_stamp: Option<u64>,
    done: bool,
}

/// Glances averaged when checking a tube by eye.
const CHECK_GLANCES: u32 = 3;
/// Twin updates with an unchanged opening that count as settled.
const SETTLE_UPDATES: u32 = 3;
/// Bulb contents below this count as empty, ml.
const EMPTY_ML: f64 = 0.05;
/// A remaining need within this of the bulb contents is squeezed out whole, ml.
const WHOLE_MARGIN_ML: f64 = 0.02;
/// Time left after releasing in the liquid for the bulb to finish drawing.
const DRAW_PAUSE_US: u64 = 200_000;

impl Operator {
    pub fn new(spec: &ScenarioSpec, kind: OperatorKind, perception: Perception, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // hidden scene parameters use stream 0 of the same seed
        rng.set_stream(1);
        let grip = if spec.initial.start_grasped {
            spec.hold_opening()
        } else {
            1.0
        };
        let mut op = Self {
            kind,
            spec: spec.clone(),
            perception,
            rng,
            dt_s: 1.0 / f64::from(spec.control_rate_hz()),
            handle: [0.0; 3],
            grip,
            place: Place::Start,
            queue: VecDeque::new(),
            task: None,
            dose_index: 0,
            dispensed_est: 0.0,
            held_est: 0.0,
            top_ups: 0,
            force_gain: None,
            last_stamp: None,
            done: false,
        };
        op.queue.push_back(Task::WaitSync);
        op
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn grip(&self) -> f64 {
        self.grip
    }

    fn condition(&self) -> Option<FeedbackCondition> {
        match self.kind {
            OperatorKind::Scripted(c) => Some(c),
            OperatorKind::Oracle => None,
        }
    }

    fn capacity(&self) -> f64 {
        self.spec.scene.pipette.capacity_ml
    }

    fn target(&self) -> f64 {
        self.spec.target_volume_ml
    }

    fn dose_tube(&self) -> usize {
        self.spec.dose_tubes[self.dose_index]
    }

    fn initial_tube_ml(&self) -> f64 {
        self.spec.initial.tubes_ml[self.dose_tube()]
    }

    /// Compression the operator believes the hold opening gives.
    fn hold_compression(&self) -> f64 {
        self.perception.force.compression_at(self.spec.hold_opening())
    }

    fn full_bulb_ml(&self) -> f64 {
        self.capacity() * (1.0 - self.hold_compression())
    }

    fn travel_z(&self) -> f64 {
        let s = &self.spec.scene;
        let tip = s.pipette.tip_length_mm;
        let over_tubes = s
            .tubes
            .iter()
            .map(|t| t.top_z_mm + 0.5 * t.clearance_mm + tip)
            .fold(f64::MIN, f64::max);
        over_tubes.max(s.beaker.liquid_surface_z_mm + 20.0 + tip)
    }

    fn waypoint(&self, place: Place) -> [f64; 3] {
        let s = &self.spec.scene;
        let z = self.travel_z();
        match place {
            Place::Start => self.spec.home_mm,
            Place::Rack => s.rack.grasp_position,
            Place::BeakerAbove => [s.beaker.center_xy[0], s.beaker.center_xy[1], z],
            Place::BeakerIn => {
                let b = &s.beaker;
                let tip_z = b.liquid_surface_z_mm - 0.5 * (b.liquid_surface_z_mm - b.bottom_z_mm);
                [b.center_xy[0], b.center_xy[1], tip_z + s.pipette.tip_length_mm]
            }
            Place::Tube(i) => {
                let t = &s.tubes[i];
                [t.center_xy[0], t.center_xy[1], z]
            }
        }
    }

    fn handle_for(&self, tcp: [f64; 3]) -> [f64; 3] {
        let k = f64::from(self.spec.scale().get());
        let d: [f64; 3] = std::array::from_fn(|i| (tcp[i] - self.spec.home_mm[i]) / k);
        clamp_to_device_workspace(&d)
    }

    fn glance(&mut self, ledger: &LedgerMirror) -> f64 {
        let noise: f64 = self.rng.sample(StandardNormal);
        ledger.tube_ml(self.dose_tube()) - self.initial_tube_ml() + noise * self.spec.operator.volume_sigma_ml
    }

    fn noisy_position(&mut self, twin: &TwinState) -> [f64; 3] {
        let p = twin.position_mm();
        let s = self.spec.operator.pose_sigma_mm;
        std::array::from_fn(|i| {
            let n: f64 = self.rng.sample(StandardNormal);
            p[i] + n * s
        })
    }

    /// Route from the current place to `to`, without the current place.
    fn route(&self, to: Place) -> Vec<Place> {
        let mut path = Vec::new();
        let from = self.place;
        if from == to {
            return path;
        }
        if from == Place::BeakerIn {
            path.push(Place::BeakerAbove);
        }
        if to == Place::BeakerIn && from != Place::BeakerAbove {
            path.push(Place::BeakerAbove);
        }
        if path.last() != Some(&to) {
            path.push(to);
        }
        path
    }

    fn go(&mut self, to: Place) {
        for p in self.route(to) {
            self.queue.push_back(Task::Move(p));
        }
    }

    /// Chooses the next tasks once the queue runs dry.
    fn plan(&mut self, obs: &Observation) {
        if let Some(t) = &obs.truth {
            self.held_est = t.pipette_ml;
            self.dispensed_est = t.tubes_ml[self.dose_tube()] - self.initial_tube_ml();
        }
        let need = self.target() - self.dispensed_est;
        if self.held_est < EMPTY_ML || self.held_est < need.min(EMPTY_ML * 2.0) {
            self.go(Place::BeakerIn);
            self.queue.push_back(Task::Fill);
            return;
        }
        self.go(Place::Tube(self.dose_tube()));
        if need >= self.held_est - WHOLE_MARGIN_ML {
            self.queue.push_back(Task::DispenseAll);
        } else {
            self.queue.push_back(Task::DispenseSome(need));
        }
    }

    pub fn act(&mut self, obs: &Observation) -> Action {
        if !self.done {
            self.run(obs);
        }
        let input = HapticInput::saturating(self.handle, [0.0; 3], self.grip, obs.t_us);
        Action { input, done: self.done }
    }

    fn run(&mut self, obs: &Observation) {
        // several zero-time tasks may finish in one call
        for _ in 0..8 {
            if self.task.is_none() {
                if self.queue.is_empty() {
                    self.plan(obs);
                }
                let Some(next) = self.queue.pop_front() else {
                    return;
                };
                self.begin(next, obs);
            }
            let (task, mut st) = self.task.take().expect("task present");
            if self.step(task, &mut st, obs) {
                if self.done {
                    return;
                }
            } else {
                self.task = Some((task, st));
                return;
            }
        }
    }

    fn begin(&mut self, task: Task, obs: &Observation) {
        let st = Active {
            started_us: obs.t_us,
            next_glance_us: obs.t_us,
            c_est: self.hold_compression(),
            ..Active::default()
        };
        match task {
            Task::Grip(g) => self.grip = g,
            Task::DispenseAll => self.grip = 0.0,
            _ => {}
        }
        self.task = Some((task, st));
    }

    /// Advances `task`; true once it has finished.
    fn step(&mut self, task: Task, st: &mut Active, obs: &Observation) -> bool {
        match task {
            Task::WaitSync => {
                obs.twin.is_synced() && obs.electrodes.is_some() && obs.t_us >= st.started_us + 100_000 && {
                    self.held_est = 0.0;
                    if !self.spec.initial.start_grasped {
                        self.queue.push_back(Task::Move(Place::Rack));
                        self.queue.push_back(Task::Grip(self.spec.hold_opening()));
                    }
                    true
                }
            }
            Task::Move(place) => self.step_move(place, st, obs),
            Task::Grip(_) => self.settled(st, obs),
            Task::Pause(us) => obs.t_us >= st.started_us + us,
            Task::Fill => {
                // squeeze out, then release in the liquid and let it draw
                self.queue.push_front(Task::Pause(DRAW_PAUSE_US));
                self.queue.push_front(Task::Grip(self.spec.hold_opening()));
                self.queue.push_front(Task::Grip(0.0));
                self.held_est = self.full_bulb_ml();
                true
            }
            Task::DispenseAll => {
                if !self.settled(st, obs) {
                    return false;
                }
                self.dispensed_est += self.held_est;
                self.held_est = 0.0;
                self.queue.push_front(Task::Grip(self.spec.hold_opening()));
                if self.target() - self.dispensed_est <= WHOLE_MARGIN_ML {
                    self.queue.push_back(Task::Check);
                }
                true
            }
            Task::DispenseSome(need) => self.step_dispense(need, st, obs),
            Task::Check => self.step_check(st, obs),
        }
    }

    fn step_move(&mut self, place: Place, st: &mut Active, obs: &Observation) -> bool {
        let goal_tcp = self.waypoint(place);
        let goal = self.handle_for(goal_tcp);
        if !st.handle_done {
            let k = f64::from(self.spec.scale().get());
            let max_step = self.spec.operator.move_speed_mm_s / k * self.dt_s;
            let d: [f64; 3] = std::array::from_fn(|i| goal[i] - self.handle[i]);
            let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n <= max_step {
                self.handle = goal;
                st.handle_done = true;
            } else {
                for (h, di) in self.handle.iter_mut().zip(d) {
                    *h += di / n * max_step;
                }
            }
            return false;
        }
        let seen = self.noisy_position(obs.twin);
        let dist = seen
            .iter()
            .zip(goal_tcp)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        if dist <= self.spec.operator.arrive_tolerance_mm {
            self.place = place;
            true
        } else {
            false
        }
    }

    /// True once the twin's opening has stopped changing.
    fn settled(&mut self, st: &mut Active, obs: &Observation) -> bool {
        let Some(at) = obs.twin.last_update_us else {
            return false;
        };
        if st.last_twin_us == Some(at) || at < st.started_us {
            return false;
        }
        st.last_twin_us = Some(at);
        let o = obs.twin.opening_permille;
        if st.last_opening == Some(o) {
            st.stable_updates += 1;
        } else {
            st.stable_updates = 0;
            st.last_opening = Some(o);
        }
        st.stable_updates >= SETTLE_UPDATES
    }

    /// Updates the haptic compression estimate from a fresh frame pair.
    fn update_estimate(&mut self, st: &mut Active, obs: &Observation) {
        let Some(cond) = self.condition() else {
            return;
        };
        if self.last_stamp == Some(obs.force_stamp_us) {
            return;
        }
        self.last_stamp = Some(obs.force_stamp_us);
        let bracket = if cond.electrodes() {
            obs.electrodes
                .map(|e| perceive(e, self.spec.operator.electrode_levels))
                .and_then(|seen| self.perception.table.lookup(&seen))
        } else {
            None
        };
        match cond {
            FeedbackCondition::V => {}
            FeedbackCondition::VF => st.c_est = self.perception.force.invert(obs.force_n),
            FeedbackCondition::VE => {
                if let Some(b) = bracket {
                    st.c_est = b.mid().max(self.hold_compression());
                }
            }
            FeedbackCondition::VFE => {
                if let (Some(b), Some(prev)) = (bracket, st.bracket) {
                    if b.lo > prev.hi {
                        // the picture just stepped up: compression is at b.lo
                        let model = self.perception.force.force_at(b.lo);
                        if model > 0.0 && obs.force_n > 0.0 {
                            self.force_gain = Some(obs.force_n / model);
                        }
                    }
                }
                let gain = self.force_gain.unwrap_or(1.0);
                let c = self.perception.force.invert(obs.force_n / gain);
                st.c_est = match bracket {
                    Some(b) => b.clamp(c),
                    None => c,
                };
            }
        }
        if bracket.is_some() {
            st.bracket = bracket;
        }
    }

    fn step_dispense(&mut self, need: f64, st: &mut Active, obs: &Observation) -> bool {
        let c0 = self.hold_compression();
        let stop = match self.kind {
            OperatorKind::Oracle => {
                let t = obs.truth.as_ref().expect("oracle sees the truth");
                let added = t.tubes_ml[self.dose_tube()] - self.initial_tube_ml();
                added >= self.target() - 0.002
            }
            OperatorKind::Scripted(FeedbackCondition::V) => {
                if obs.t_us >= st.next_glance_us {
                    st.next_glance_us = obs.t_us + (self.spec.operator.glance_interval_s * 1e6) as u64;
                    let seen = self.glance(obs.ledger);
                    st.c_est = c0 + (seen - self.dispensed_est).max(0.0) / self.capacity();
                    seen >= self.target()
                } else {
                    false
                }
            }
            OperatorKind::Scripted(_) => {
                self.update_estimate(st, obs);
                self.capacity() * (st.c_est - c0) >= need
            }
        };
        if stop || self.grip <= 0.0 {
            let out = (self.capacity() * (st.c_est - c0)).clamp(0.0, self.held_est);
            self.dispensed_est += out;
            self.held_est -= out;
            self.queue.push_front(Task::Check);
            self.queue.push_front(Task::Grip(self.spec.hold_opening()));
            return true;
        }
        let rate = match self.kind {
            OperatorKind::Scripted(FeedbackCondition::V) => self.spec.operator.visual_ramp_per_s,
            _ => self.spec.operator.haptic_ramp_per_s,
        };
        self.grip = (self.grip - rate * self.dt_s).max(0.0);
        false
    }

    fn step_check(&mut self, st: &mut Active, obs: &Observation) -> bool {
        let target = self.target();
        let (glances, tolerance) = match self.kind {
            OperatorKind::Oracle => {
                let t = obs.truth.as_ref().expect("oracle sees the truth");
                let added = t.tubes_ml[self.dose_tube()] - self.initial_tube_ml();
                return self.conclude(added, target - added > 0.01);
            }
            OperatorKind::Scripted(FeedbackCondition::V) => (
                CHECK_GLANCES,
                self.spec.operator.volume_sigma_ml / f64::from(CHECK_GLANCES).sqrt(),
            ),
            OperatorKind::Scripted(_) => (CHECK_GLANCES, self.spec.operator.coarse_check_tolerance_ml),
        };
        if obs.t_us < st.next_glance_us {
            return false;
        }
        st.glance_sum += self.glance(obs.ledger);
        st.glances += 1;
        st.next_glance_us = obs.t_us + (self.spec.operator.glance_interval_s * 1e6) as u64;
        if st.glances < glances {
            return false;
        }
        let seen = st.glance_sum / f64::from(glances);
        let short = seen < target - tolerance;
        let believed = if short || self.condition() == Some(FeedbackCondition::V) {
            seen
        } else {
            self.dispensed_est
        };
        self.conclude(believed, short)
    }

    fn conclude(&mut self, believed: f64, short: bool) -> bool {
        self.dispensed_est = believed;
        if short && self.top_ups < self.spec.operator.max_top_ups {
            self.top_ups += 1;
            return true;
        }
        self.dose_index += 1;
        self.top_ups = 0;
        self.dispensed_est = 0.0;
        if self.dose_index >= self.spec.dose_tubes.len() {
            self.done = true;
            self.dose_index = self.spec.dose_tubes.len() - 1;
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parses() {
        assert_eq!(
            "VFE".parse::<OperatorKind>().unwrap(),
            OperatorKind::Scripted(FeedbackCondition::VFE)
        );
        assert_eq!(
            "v+f".parse::<OperatorKind>().unwrap(),
            OperatorKind::Scripted(FeedbackCondition::VF)
        );
        assert_eq!("oracle".parse::<OperatorKind>().unwrap(), OperatorKind::Oracle);
        assert!("vv".parse::<OperatorKind>().is_err());
        for c in FeedbackCondition::ALL {
            assert_eq!(c.name().parse::<OperatorKind>().unwrap(), OperatorKind::Scripted(c));
        }
    }

    #[test]
    fn waypoints_fit_the_device() {
        let spec = ScenarioSpec::default();
        let op = Operator::new(&spec, OperatorKind::Oracle, Perception::new(&spec), 0);
        for p in [Place::BeakerAbove, Place::BeakerIn, Place::Tube(0), Place::Tube(1)] {
            let w = op.waypoint(p);
            let h = op.handle_for(w);
            let back: Vec<f64> = (0..3).map(|i| spec.home_mm[i] + 2.0 * h[i]).collect();
            for i in 0..3 {
                assert!((back[i] - w[i]).abs() < 1e-9, "{p:?} out of the device workspace");
            }
        }
        let tip = op.waypoint(Place::BeakerIn)[2] - spec.scene.pipette.tip_length_mm;
        assert!(tip < spec.scene.beaker.liquid_surface_z_mm);
    }

    #[test]
    fn routes_leave_the_beaker_upwards() {
        let spec = ScenarioSpec::default();
        let mut op = Operator::new(&spec, OperatorKind::Oracle, Perception::new(&spec), 0);
        op.place = Place::BeakerIn;
        assert_eq!(op.route(Place::Tube(0)), vec![Place::BeakerAbove, Place::Tube(0)]);
        op.place = Place::Tube(0);
        assert_eq!(op.route(Place::BeakerIn), vec![Place::BeakerAbove, Place::BeakerIn]);
        op.place = Place::Start;
        assert_eq!(op.route(Place::BeakerIn), vec![Place::BeakerAbove, Place::BeakerIn]);
    }
}
