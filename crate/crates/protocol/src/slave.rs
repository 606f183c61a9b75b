//! Robot-side endpoint: owns the simulation, closes the position loop and
//! streams tactile frames, state and scene events to the master.

use log::{debug, warn};

use telehaptic_core::control::{pid_step, CONTROL_RATE_HZ};
use telehaptic_core::sim::{Scene, SimEvent};
use telehaptic_core::tactile::Finger;
use telehaptic_core::{PidGains, PidState, RobotTarget, VelocityCommand};

use crate::quant::{
    contact_to_wire, frame_to_wire, opening_to_permille, permille_to_opening, pose_from_wire, pose_to_wire,
};
use crate::record::{Direction, WireRecord};
use crate::schedule::RateSchedule;
use crate::stream::{SeqTracker, StreamDecoder};
use crate::transport::{Transport, TransportError};
use crate::twin::{location_to_wire, TransferQuantizer};
use crate::wire::{ConfigKey, EventCode, Payload, WireLocation, WireMessage};

pub const TACTILE_RATE_HZ: u32 = 120;
pub const STATE_RATE_HZ: u32 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SlaveConfig {
    pub gains: PidGains,
    pub control_rate_hz: u32,
    pub tactile_rate_hz: u32,
    pub state_rate_hz: u32,
}

impl Default for SlaveConfig {
    fn default() -> Self {
        Self {
            gains: PidGains::default(),
            control_rate_hz: CONTROL_RATE_HZ,
            tactile_rate_hz: TACTILE_RATE_HZ,
            state_rate_hz: STATE_RATE_HZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlaveCounters {
    pub tactile_sent: [u64; 2],
    pub state_sent: u64,
    pub events_sent: u64,
    pub decode_errors: u64,
    pub unexpected: u64,
}

pub struct SlaveEndpoint<T: Transport> {
    scene: Scene,
    transport: T,
    decoder: StreamDecoder,
    cfg: SlaveConfig,
    pid: PidState,
    target: RobotTarget,
    gripper_command: f64,
    velocity: VelocityCommand,
    control: RateSchedule,
    tactile: RateSchedule,
    state: RateSchedule,
    seq: u32,
    rx_seq: SeqTracker,
    quantizer: TransferQuantizer,
    halted: bool,
    last_force_mn: Option<u32>,
    scale: Option<u8>,
    locks: Option<u8>,
    events: Vec<(u64, SimEvent)>,
    tap: Option<Vec<WireRecord>>,
    counters: SlaveCounters,
    rx_buf: Vec<u8>,
}

impl<T: Transport> SlaveEndpoint<T> {
    pub fn new(scene: Scene, transport: T, cfg: SlaveConfig, start_us: u64) -> Self {
        let st = scene.state();
        let target = st.robot;
        let gripper_command = st.gripper.p_current;
        Self {
            control: RateSchedule::new(cfg.control_rate_hz, start_us),
            tactile: RateSchedule::new(cfg.tactile_rate_hz, start_us),
            state: RateSchedule::new(cfg.state_rate_hz, start_us),
            scene,
            transport,
            decoder: StreamDecoder::new(),
            cfg,
            pid: PidState::zero(),
            target,
            gripper_command,
            velocity: VelocityCommand::zero(),
            seq: 0,
            rx_seq: SeqTracker::default(),
            quantizer: TransferQuantizer::default(),
            halted: false,
            last_force_mn: None,
            scale: None,
            locks: None,
            events: Vec::new(),
            tap: None,
            counters: SlaveCounters::default(),
            rx_buf: Vec::new(),
        }
    }

    /// Starts recording every message received and sent.
    pub fn enable_tap(&mut self) {
        self.tap.get_or_insert_with(Vec::new);
    }

    pub fn take_tap(&mut self) -> Vec<WireRecord> {
        self.tap.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn take_events(&mut self) -> Vec<(u64, SimEvent)> {
        std::mem::take(&mut self.events)
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn target(&self) -> &RobotTarget {
        &self.target
    }

    pub fn velocity(&self) -> &VelocityCommand {
        &self.velocity
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn last_force_n(&self) -> Option<f64> {
        self.last_force_mn.map(crate::quant::mn_to_newton)
    }

    pub fn config_mirror(&self) -> (Option<u8>, Option<u8>) {
        (self.scale, self.locks)
    }

    pub fn counters(&self) -> SlaveCounters {
        self.counters
    }

    pub fn rx_seq(&self) -> SeqTracker {
        self.rx_seq
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn next_due_us(&self) -> u64 {
        self.control
            .next_due_us()
            .min(self.tactile.next_due_us())
            .min(self.state.next_due_us())
    }

    pub fn poll(&mut self, now_us: u64) {
        self.receive(now_us);
        self.advance(now_us);
    }

    /// Reads and applies everything the transport has delivered by `now_us`.
    pub fn receive(&mut self, now_us: u64) {
        if self.halted {
            return;
        }
        self.rx_buf.clear();
        match self.transport.recv(now_us, &mut self.rx_buf) {
            Ok(_) => {}
            Err(TransportError::Closed) => {
                self.halt(now_us);
                return;
            }
            Err(e) => {
                warn!("slave transport error: {e}");
                self.halt(now_us);
                return;
            }
        }
        self.decoder.push(&self.rx_buf);
        while let Some(r) = self.decoder.next_message() {
            match r {
                Ok(msg) => self.apply_message(msg, now_us),
                Err(e) => {
                    self.counters.decode_errors += 1;
                    warn!("slave dropped frame: {e}");
                }
            }
        }
    }

    /// Applies one master message as if it had just arrived.
    pub fn apply_message(&mut self, msg: WireMessage, now_us: u64) {
        if let Some(tap) = self.tap.as_mut() {
            tap.push(WireRecord {
                dir: Direction::MasterToSlave,
                time_us: now_us,
                msg,
            });
        }
        self.rx_seq.observe(msg.seq);
        match msg.payload {
            Payload::TcpCommand { pose } => {
                if !self.halted {
                    self.target = pose_from_wire(&pose, msg.timestamp_us);
                }
            }
            Payload::GripperCommand { opening_permille } => {
                if !self.halted {
                    self.gripper_command = permille_to_opening(opening_permille);
                }
            }
            Payload::ForceFeedback { force_mn } => self.last_force_mn = Some(force_mn),
            Payload::ConfigSet { key, value } => match key {
                ConfigKey::Scale => self.scale = Some(value),
                ConfigKey::Lock => self.locks = Some(value),
            },
            other => {
                self.counters.unexpected += 1;
                debug!("slave ignoring {:?}", other.msg_type());
            }
        }
    }

    /// Runs every scheduled emission due by `now_us`, oldest first; ties go
    /// control, tactile, state so frames always reflect the latest tick.
    pub fn advance(&mut self, now_us: u64) {
        loop {
            let c = self.control.next_due_us();
            let t = self.tactile.next_due_us();
            let s = self.state.next_due_us();
            let first = c.min(t).min(s);
            if first > now_us {
                break;
            }
            if c == first {
                self.control.take_due(now_us);
                self.control_tick(c);
            } else if t == first {
                self.tactile.take_due(now_us);
                self.send_tactile(t);
            } else {
                self.state.take_due(now_us);
                self.send_state(s);
            }
        }
    }

    fn control_tick(&mut self, t_us: u64) {
        let dt = self.control.period_s();
        self.velocity = if self.halted {
            VelocityCommand::zero()
        } else {
            let robot = self.scene.state().robot;
            // dt is a positive constant, so the step cannot fail
            let (v, next) =
                pid_step(&self.target, &robot, &self.cfg.gains, &self.pid, dt).expect("control period is positive");
            self.pid = next;
            v
        };
        let events = self
            .scene
            .tick(&self.velocity, self.gripper_command, dt)
            .expect("slave commands are finite");
        for ev in events {
            self.publish_event(t_us, &ev);
            self.events.push((t_us, ev));
        }
    }

    fn publish_event(&mut self, t_us: u64, ev: &SimEvent) {
        let (code, volume_ul, location) = match ev {
            SimEvent::Transfer(tr) => {
                let loc = location_to_wire(tr.location);
                (EventCode::Transfer, self.quantizer.push(loc, tr.volume_ml), loc)
            }
            SimEvent::SqueezeStart => (EventCode::SqueezeStart, 0, WireLocation::None),
            SimEvent::Grasped => (EventCode::Grasped, 0, WireLocation::None),
            SimEvent::Released => (EventCode::Released, 0, WireLocation::None),
            SimEvent::Dropped { spilled_ml } => {
                let loc = WireLocation::Spill;
                (EventCode::Dropped, self.quantizer.push(loc, *spilled_ml), loc)
            }
            SimEvent::ContactMade { .. } => (EventCode::ContactMade, 0, WireLocation::None),
            SimEvent::ContactLost => (EventCode::ContactLost, 0, WireLocation::None),
        };
        self.counters.events_sent += 1;
        self.send(
            t_us,
            Payload::SceneEvent {
                code,
                volume_ul,
                location,
            },
        );
    }

    fn send_tactile(&mut self, t_us: u64) {
        let (l, r) = self.scene.tactile_frames();
        for (i, f) in [l, r].iter().enumerate() {
            self.counters.tactile_sent[i] += 1;
            self.send(
                t_us,
                Payload::TactileFrame {
                    finger: if i == 0 { Finger::Left } else { Finger::Right },
                    cells_cn: frame_to_wire(f),
                },
            );
        }
    }

    fn send_state(&mut self, t_us: u64) {
        let st = self.scene.state();
        let payload = Payload::RobotState {
            pose: pose_to_wire(&st.robot),
            opening_permille: opening_to_permille(st.gripper.p_current),
            contact_permille: contact_to_wire(st.gripper.p_contact),
        };
        self.counters.state_sent += 1;
        self.send(t_us, payload);
    }

    fn send(&mut self, t_us: u64, payload: Payload) {
        let msg = WireMessage::new(self.seq, t_us, payload);
        self.seq = self.seq.wrapping_add(1);
        if let Some(tap) = self.tap.as_mut() {
            tap.push(WireRecord {
                dir: Direction::SlaveToMaster,
                time_us: t_us,
                msg,
            });
        }
        if self.halted {
            return;
        }
        if let Err(e) = self.transport.send(t_us, &msg.encode()) {
            debug!("slave send failed: {e}");
            self.halt(t_us);
        }
    }

    /// Fail-safe stop: hold the current pose and opening, zero velocity.
    pub fn halt(&mut self, now_us: u64) {
        if self.halted {
            return;
        }
        warn!("slave halting at {now_us} us: link lost");
        self.halted = true;
        self.velocity = VelocityCommand::zero();
        let st = self.scene.state();
        self.target = st.robot;
        self.gripper_command = st.gripper.p_current;
        self.pid = PidState::zero();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::LoopbackTransport;
    use telehaptic_core::sim::{InitialConditions, SceneConfig};

    fn slave() -> (SlaveEndpoint<LoopbackTransport>, LoopbackTransport) {
        let (a, b) = LoopbackTransport::pair(0);
        let init = InitialConditions {
            tcp: RobotTarget::new([300.0, 0.0, 200.0], [0.0; 3], 0),
            beaker_ml: 50.0,
            tubes_ml: vec![0.0, 0.0],
            start_grasped: true,
            min_squeezed_diameter_mm: None,
        };
        let scene = Scene::new(SceneConfig::default(), &init).unwrap();
        (SlaveEndpoint::new(scene, a, SlaveConfig::default(), 0), b)
    }

    #[test]
    fn stationary_rates() {
        let (mut s, _peer) = slave();
        s.poll(10_000_000 - 1);
        let c = s.counters();
        assert_eq!(c.tactile_sent, [1200, 1200]);
        assert_eq!(c.state_sent, 500);
    }

    #[test]
    fn halts_on_close() {
        let (mut s, mut peer) = slave();
        let cmd = WireMessage::new(
            0,
            0,
            Payload::TcpCommand {
                pose: [400_000, 0, 200_000, 0, 0, 0],
            },
        );
        peer.send(0, &cmd.encode()).unwrap();
        s.poll(80_000);
        assert!(!s.velocity().is_zero());
        peer.close();
        s.poll(88_000);
        assert!(s.is_halted());
        assert!(s.velocity().is_zero());
        let x = s.scene().state().robot.tcp_position[0];
        s.poll(200_000);
        assert_eq!(s.scene().state().robot.tcp_position[0], x);
    }
}
