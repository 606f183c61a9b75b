//! Operator-side endpoint: maps handle input to TCP targets, mirrors the
//! remote state and renders grasp force from incoming tactile pairs.

use log::{debug, warn};

use telehaptic_core::control::{scale_workspace, CONTROL_RATE_HZ};
use telehaptic_core::haptics::kinesthetic_force;
use telehaptic_core::tactile::{resample_bicubic, Finger};
use telehaptic_core::{
    ElectrodePattern, GripperState, HapticInput, KinestheticForce, LockMask, RobotTarget, ScaleFactor, TactileFrame,
    WorkspaceConfig,
};

use crate::quant::{frame_from_wire, newton_to_mn, opening_to_permille, pose_to_wire};
use crate::record::{Direction, WireRecord};
use crate::schedule::RateSchedule;
use crate::stream::{SeqTracker, StreamDecoder};
use crate::transport::{Transport, TransportError};
use crate::twin::{LedgerMirror, TwinState};
use crate::wire::{ConfigKey, EventCode, Payload, WireLocation, WireMessage};

pub const GRIPPER_KEEPALIVE_HZ: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct MasterConfig {
    pub workspace: WorkspaceConfig,
    /// TCP pose the centred handle maps to.
    pub home: RobotTarget,
    pub command_rate_hz: u32,
    pub gripper_keepalive_hz: u32,
    pub initial_beaker_ml: f64,
    pub initial_tubes_ml: Vec<f64>,
    pub initial_grip: f64,
}

impl MasterConfig {
    pub fn new(home: RobotTarget, scale: ScaleFactor) -> Self {
        Self {
            workspace: WorkspaceConfig {
                scale,
                ..WorkspaceConfig::default()
            },
            home,
            command_rate_hz: CONTROL_RATE_HZ,
            gripper_keepalive_hz: GRIPPER_KEEPALIVE_HZ,
            initial_beaker_ml: 0.0,
            initial_tubes_ml: Vec::new(),
            initial_grip: 1.0,
        }
    }
}

/// A scene event as reported over the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteEvent {
    pub time_us: u64,
    pub code: EventCode,
    pub volume_ul: i64,
    pub location: WireLocation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MasterCounters {
    pub tcp_sent: u64,
    pub gripper_sent: u64,
    pub force_sent: u64,
    pub tactile_received: [u64; 2],
    pub state_received: u64,
    pub decode_errors: u64,
    pub unexpected: u64,
    pub frame_pairs_unmatched: u64,
}

/// Everything the operator side can observe at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterSnapshot {
    pub time_us: u64,
    pub twin: TwinState,
    pub ledger: LedgerMirror,
    pub force: KinestheticForce,
    pub frames: Option<(TactileFrame, TactileFrame)>,
    pub electrodes: Option<(ElectrodePattern, ElectrodePattern)>,
    pub scale: ScaleFactor,
    pub locks: LockMask,
    pub input: HapticInput,
    pub closed: bool,
}

pub struct MasterEndpoint<T: Transport> {
    transport: T,
    decoder: StreamDecoder,
    cfg: MasterConfig,
    seq: u32,
    input: HapticInput,
    pending_config: Vec<(ConfigKey, u8)>,
    command: RateSchedule,
    keepalive: RateSchedule,
    last_grip_sent: Option<u16>,
    twin: TwinState,
    ledger: LedgerMirror,
    gripper: GripperState,
    pending_frames: [Option<TactileFrame>; 2],
    frames: Option<(TactileFrame, TactileFrame)>,
    electrodes: Option<(ElectrodePattern, ElectrodePattern)>,
    force: KinestheticForce,
    events: Vec<RemoteEvent>,
    rx_seq: SeqTracker,
    counters: MasterCounters,
    closed: bool,
    tap: Option<Vec<WireRecord>>,
    rx_buf: Vec<u8>,
}

impl<T: Transport> MasterEndpoint<T> {
    pub fn new(transport: T, cfg: MasterConfig, start_us: u64) -> Self {
        let grip = cfg.initial_grip.clamp(0.0, 1.0);
        Self {
            transport,
            decoder: StreamDecoder::new(),
            seq: 0,
            input: HapticInput::saturating([0.0; 3], [0.0; 3], grip, start_us),
            pending_config: Vec::new(),
            command: RateSchedule::new(cfg.command_rate_hz, start_us),
            keepalive: RateSchedule::new(cfg.gripper_keepalive_hz, start_us),
            last_grip_sent: None,
            twin: TwinState::default(),
            ledger: LedgerMirror::new(cfg.initial_beaker_ml, &cfg.initial_tubes_ml),
            gripper: GripperState {
                p_current: grip,
                p_contact: None,
                commanded_opening: grip,
            },
            pending_frames: [None, None],
            frames: None,
            electrodes: None,
            force: KinestheticForce {
                magnitude: 0.0,
                timestamp_us: start_us,
            },
            events: Vec::new(),
            rx_seq: SeqTracker::default(),
            counters: MasterCounters::default(),
            closed: false,
            tap: None,
            rx_buf: Vec::new(),
            cfg,
        }
    }

    pub fn enable_tap(&mut self) {
        self.tap.get_or_insert_with(Vec::new);
    }

    pub fn take_tap(&mut self) -> Vec<WireRecord> {
        self.tap.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn take_events(&mut self) -> Vec<RemoteEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn config(&self) -> &MasterConfig {
        &self.cfg
    }

    pub fn twin(&self) -> &TwinState {
        &self.twin
    }

    pub fn ledger(&self) -> &LedgerMirror {
        &self.ledger
    }

    pub fn force(&self) -> KinestheticForce {
        self.force
    }

    pub fn frames(&self) -> Option<&(TactileFrame, TactileFrame)> {
        self.frames.as_ref()
    }

    pub fn electrodes(&self) -> Option<&(ElectrodePattern, ElectrodePattern)> {
        self.electrodes.as_ref()
    }

    pub fn gripper(&self) -> &GripperState {
        &self.gripper
    }

    pub fn input(&self) -> &HapticInput {
        &self.input
    }

    pub fn counters(&self) -> MasterCounters {
        self.counters
    }

    pub fn rx_seq(&self) -> SeqTracker {
        self.rx_seq
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    /// TCP target the current input maps to.
    pub fn current_target(&self) -> RobotTarget {
        scale_workspace(&self.input, &self.cfg.workspace, &self.cfg.home)
    }

    pub fn set_input(&mut self, input: HapticInput) {
        self.input = input;
    }

    pub fn set_scale(&mut self, scale: ScaleFactor) {
        self.cfg.workspace.scale = scale;
        self.pending_config.push((ConfigKey::Scale, scale.get()));
    }

    pub fn set_locks(&mut self, locks: LockMask) {
        self.cfg.workspace.locks = locks;
        self.pending_config.push((ConfigKey::Lock, locks.bits()));
    }

    pub fn next_due_us(&self) -> u64 {
        self.command.next_due_us().min(self.keepalive.next_due_us())
    }

    /// True when a TCP command goes out at `now_us`; operator input should
    /// be updated before [`MasterEndpoint::emit`].
    pub fn command_due(&self, now_us: u64) -> bool {
        self.command.next_due_us() <= now_us
    }

    pub fn poll(&mut self, now_us: u64) {
        self.receive(now_us);
        self.emit(now_us);
    }

    pub fn receive(&mut self, now_us: u64) {
        if self.closed {
            return;
        }
        self.rx_buf.clear();
        match self.transport.recv(now_us, &mut self.rx_buf) {
            Ok(_) => {}
            Err(TransportError::Closed) => {
                self.close_session(now_us);
                return;
            }
            Err(e) => {
                warn!("master transport error: {e}");
                self.close_session(now_us);
                return;
            }
        }
        self.decoder.push(&self.rx_buf);
        while let Some(r) = self.decoder.next_message() {
            match r {
                Ok(msg) => self.apply_message(msg, now_us),
                Err(e) => {
                    self.counters.decode_errors += 1;
                    warn!("master dropped frame: {e}");
                }
            }
        }
    }

    fn close_session(&mut self, now_us: u64) {
        if !self.closed {
            warn!("master session closed at {now_us} us");
            self.closed = true;
        }
    }

    fn apply_message(&mut self, msg: WireMessage, now_us: u64) {
        if let Some(tap) = self.tap.as_mut() {
            tap.push(WireRecord {
                dir: Direction::SlaveToMaster,
                time_us: now_us,
                msg,
            });
        }
        self.rx_seq.observe(msg.seq);
        match msg.payload {
            Payload::RobotState {
                pose,
                opening_permille,
                contact_permille,
            } => {
                self.counters.state_received += 1;
                self.twin
                    .apply(pose, opening_permille, contact_permille, msg.timestamp_us);
                self.gripper.p_current = self.twin.opening();
            }
            Payload::TactileFrame { finger, cells_cn } => {
                let idx = finger as usize;
                self.counters.tactile_received[idx] += 1;
                match frame_from_wire(finger, &cells_cn, msg.timestamp_us) {
                    Ok(f) => {
                        self.pending_frames[idx] = Some(f);
                        self.try_render(now_us);
                    }
                    Err(e) => {
                        self.counters.decode_errors += 1;
                        warn!("master rejected tactile frame: {e}");
                    }
                }
            }
            Payload::SceneEvent {
                code,
                volume_ul,
                location,
            } => {
                if matches!(code, EventCode::Transfer | EventCode::Dropped) {
                    self.ledger.apply(location, volume_ul);
                }
                self.events.push(RemoteEvent {
                    time_us: msg.timestamp_us,
                    code,
                    volume_ul,
                    location,
                });
            }
            other => {
                self.counters.unexpected += 1;
                debug!("master ignoring {:?}", other.msg_type());
            }
        }
    }

    /// Renders force once both pads have reported the same instant.
    fn try_render(&mut self, now_us: u64) {
        let [Some(l), Some(r)] = self.pending_frames else {
            return;
        };
        if l.timestamp_us() != r.timestamp_us() {
            // keep the newer one and wait for its partner
            self.counters.frame_pairs_unmatched += 1;
            let keep = if l.timestamp_us() > r.timestamp_us() {
                Finger::Left
            } else {
                Finger::Right
            };
            self.pending_frames[1 - keep as usize] = None;
            return;
        }
        self.pending_frames = [None, None];
        self.gripper.observe_contact(&l, &r);
        // frames share a timestamp and the gripper state holds decoded
        // permille values, so rendering cannot fail
        self.force = kinesthetic_force(&l, &r, &self.gripper).expect("synchronised pair");
        self.electrodes = Some((resample_bicubic(&l), resample_bicubic(&r)));
        self.frames = Some((l, r));
        self.counters.force_sent += 1;
        self.send(
            now_us,
            Payload::ForceFeedback {
                force_mn: newton_to_mn(self.force.magnitude),
            },
        );
    }

    /// Sends whatever is due at `now_us`: config changes, TCP commands and
    /// gripper commands (on change or keepalive).
    pub fn emit(&mut self, now_us: u64) {
        for (key, value) in std::mem::take(&mut self.pending_config) {
            self.send(now_us, Payload::ConfigSet { key, value });
        }
        let pose = pose_to_wire(&self.current_target());
        while self.command.take_due(now_us).is_some() {
            self.counters.tcp_sent += 1;
            self.send(now_us, Payload::TcpCommand { pose });
        }
        let grip = opening_to_permille(self.input.grip_command);
        self.gripper.commanded_opening = self.input.grip_command;
        let keepalive = self.keepalive.skip_until(now_us) > 0;
        if keepalive || self.last_grip_sent != Some(grip) {
            self.last_grip_sent = Some(grip);
            self.counters.gripper_sent += 1;
            self.send(now_us, Payload::GripperCommand { opening_permille: grip });
        }
    }

    fn send(&mut self, now_us: u64, payload: Payload) {
        if self.closed {
            return;
        }
        let msg = WireMessage::new(self.seq, now_us, payload);
        self.seq = self.seq.wrapping_add(1);
        if let Some(tap) = self.tap.as_mut() {
            tap.push(WireRecord {
                dir: Direction::MasterToSlave,
                time_us: now_us,
                msg,
            });
        }
        if let Err(e) = self.transport.send(now_us, &msg.encode()) {
            debug!("master send failed: {e}");
            self.close_session(now_us);
        }
    }

    pub fn snapshot(&self, now_us: u64) -> MasterSnapshot {
        MasterSnapshot {
            time_us: now_us,
            twin: self.twin,
            ledger: self.ledger.clone(),
            force: self.force,
            frames: self.frames,
            electrodes: self.electrodes,
            scale: self.cfg.workspace.scale,
            locks: self.cfg.workspace.locks,
            input: self.input,
            closed: self.closed,
        }
    }
}
