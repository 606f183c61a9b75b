//! JSON-over-WebSocket bridge between the master endpoint and a browser
//! console.
//!
//! Inbound messages are commands (`jog`, `grip`, `scale`, `lock`, `trial`).
//! Outbound messages carry decimated snapshots of what the master sees.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tungstenite::{Message, WebSocket};

use telehaptic_core::control::in_device_workspace;
use telehaptic_core::tactile::{pattern_to_levels, Finger};
use telehaptic_core::{LockMask, ScaleFactor};

use crate::master::{MasterSnapshot, RemoteEvent};
use crate::quant::ul_to_ml;
use crate::wire::{EventCode, WireLocation};

pub const DEFAULT_UI_PORT: u16 = 8765;
pub const MAX_OUTBOUND_HZ: u32 = 30;
const EVENT_BACKLOG: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialAction {
    Start,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GatewayCommand {
    /// Handle displacement (mm) and tilt (deg).
    Jog {
        displacement: [f64; 3],
        tilt: [f64; 3],
    },
    Grip(f64),
    Scale(ScaleFactor),
    Lock(LockMask),
    Trial(TrialAction),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Command(GatewayCommand),
    /// Reply with an error message and keep the connection.
    Reject(String),
    /// Unknown type; logged and dropped.
    Ignored(String),
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum InboundJson {
    Jog {
        #[serde(default)]
        dx: f64,
        #[serde(default)]
        dy: f64,
        #[serde(default)]
        dz: f64,
        #[serde(default)]
        rx: f64,
        #[serde(default)]
        ry: f64,
        #[serde(default)]
        rz: f64,
    },
    Grip {
        value: f64,
    },
    Scale {
        factor: i64,
    },
    Lock {
        axes: Vec<String>,
    },
    Trial {
        action: TrialAction,
    },
}

const KNOWN_TYPES: [&str; 5] = ["jog", "grip", "scale", "lock", "trial"];

pub fn parse_inbound(text: &str) -> Inbound {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return Inbound::Reject(format!("malformed json: {e}")),
    };
    let Some(ty) = value.get("type").and_then(Value::as_str) else {
        return Inbound::Reject("message needs a string \"type\" field".into());
    };
    if !KNOWN_TYPES.contains(&ty) {
        return Inbound::Ignored(ty.to_owned());
    }
    let msg: InboundJson = match serde_json::from_value(value.clone()) {
        Ok(m) => m,
        Err(e) => return Inbound::Reject(format!("invalid {ty} message: {e}")),
    };
    match validate(msg) {
        Ok(cmd) => Inbound::Command(cmd),
        Err(reason) => Inbound::Reject(reason),
    }
}

fn validate(msg: InboundJson) -> Result<GatewayCommand, String> {
    match msg {
        InboundJson::Jog { dx, dy, dz, rx, ry, rz } => {
            let displacement = [dx, dy, dz];
            let tilt = [rx, ry, rz];
            if !displacement.iter().chain(tilt.iter()).all(|v| v.is_finite()) {
                return Err("jog values must be finite".into());
            }
            if !in_device_workspace(&displacement) {
                return Err(format!("jog ({dx}, {dy}, {dz}) mm is outside the device workspace"));
            }
            Ok(GatewayCommand::Jog { displacement, tilt })
        }
        InboundJson::Grip { value } => {
            if !(0.0..=1.0).contains(&value) {
                return Err(format!("grip value {value} outside [0, 1]"));
            }
            Ok(GatewayCommand::Grip(value))
        }
        InboundJson::Scale { factor } => u8::try_from(factor)
            .ok()
            .and_then(|f| ScaleFactor::new(f).ok())
            .map(GatewayCommand::Scale)
            .ok_or_else(|| format!("scale factor {factor} outside 1..=5")),
        InboundJson::Lock { axes } => {
            let mut mask = LockMask::empty();
            for a in &axes {
                mask |= LockMask::from_axis_name(a).ok_or_else(|| format!("unknown axis {a:?}"))?;
            }
            Ok(GatewayCommand::Lock(mask))
        }
        InboundJson::Trial { action } => Ok(GatewayCommand::Trial(action)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    Tactile {
        finger: Finger,
        t_us: u64,
        /// Row-major, newtons.
        cells: Vec<f64>,
    },
    Electrode {
        finger: Finger,
        t_us: u64,
        /// Row-major intensities in [0, 1].
        cells: Vec<f64>,
        levels: Vec<u8>,
    },
    State {
        t_us: u64,
        position_mm: [f64; 3],
        orientation_deg: [f64; 3],
        opening: f64,
        contact_opening: Option<f64>,
        staleness_us: Option<u64>,
        scale: u8,
        locks: Vec<&'static str>,
        connected: bool,
    },
    Force {
        t_us: u64,
        newtons: f64,
    },
    Ledger {
        beaker_ml: f64,
        tubes_ml: Vec<f64>,
        pipette_ml: f64,
        spill_ml: f64,
    },
    Event {
        t_us: u64,
        code: &'static str,
        volume_ml: f64,
        location: String,
    },
    Error {
        reason: String,
    },
}

impl Outbound {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("outbound messages always serialise")
    }
}

fn lock_names(locks: LockMask) -> Vec<&'static str> {
    [
        (LockMask::X, "x"),
        (LockMask::Y, "y"),
        (LockMask::Z, "z"),
        (LockMask::ROTATION, "rotation"),
    ]
    .into_iter()
    .filter(|(m, _)| locks.contains(*m))
    .map(|(_, n)| n)
    .collect()
}

pub fn event_name(code: EventCode) -> &'static str {
    match code {
        EventCode::Transfer => "transfer",
        EventCode::SqueezeStart => "squeeze_start",
        EventCode::Grasped => "grasped",
        EventCode::Released => "released",
        EventCode::Dropped => "dropped",
        EventCode::ContactMade => "contact_made",
        EventCode::ContactLost => "contact_lost",
        EventCode::Halted => "halted",
    }
}

pub fn location_name(loc: WireLocation) -> String {
    match loc {
        WireLocation::None => "none".into(),
        WireLocation::Beaker => "beaker".into(),
        WireLocation::Spill => "spill".into(),
        WireLocation::Tube(i) => format!("tube{i}"),
    }
}

pub fn event_message(ev: &RemoteEvent) -> Outbound {
    Outbound::Event {
        t_us: ev.time_us,
        code: event_name(ev.code),
        volume_ml: ul_to_ml(ev.volume_ul),
        location: location_name(ev.location),
    }
}

/// Messages describing one master snapshot.
pub fn snapshot_messages(s: &MasterSnapshot) -> Vec<Outbound> {
    let mut out = Vec::with_capacity(8);
    if let Some((l, r)) = &s.frames {
        for f in [l, r] {
            out.push(Outbound::Tactile {
                finger: f.finger(),
                t_us: f.timestamp_us(),
                cells: f.iter_cells().collect(),
            });
        }
    }
    if let Some((l, r)) = &s.electrodes {
        for p in [l, r] {
            out.push(Outbound::Electrode {
                finger: p.finger(),
                t_us: p.source_timestamp_us(),
                cells: p.iter_cells().collect(),
                levels: pattern_to_levels(p).iter().flatten().copied().collect(),
            });
        }
    }
    let robot = s.twin.robot();
    out.push(Outbound::State {
        t_us: s.time_us,
        position_mm: robot.tcp_position,
        orientation_deg: robot.tcp_orientation,
        opening: s.twin.opening(),
        contact_opening: s.twin.contact_opening(),
        staleness_us: s.twin.staleness_us(s.time_us),
        scale: s.scale.get(),
        locks: lock_names(s.locks),
        connected: !s.closed,
    });
    out.push(Outbound::Force {
        t_us: s.force.timestamp_us,
        newtons: s.force.magnitude,
    });
    out.push(Outbound::Ledger {
        beaker_ml: ul_to_ml(s.ledger.beaker_ul),
        tubes_ml: s.ledger.tubes_ul.iter().map(|v| ul_to_ml(*v)).collect(),
        pipette_ml: s.ledger.pipette_ml(),
        spill_ml: ul_to_ml(s.ledger.spill_ul),
    });
    out
}

/// Passes at most one update per `interval_us`.
#[derive(Debug, Clone)]
pub struct Decimator {
    interval_us: u64,
    last: Option<u64>,
}

impl Decimator {
    pub fn new(max_hz: u32) -> Self {
        Self {
            interval_us: 1_000_000u64.div_ceil(max_hz.max(1) as u64),
            last: None,
        }
    }

    pub fn ready(&mut self, now_us: u64) -> bool {
        if self.last.is_some_and(|t| now_us < t + self.interval_us) {
            return false;
        }
        self.last = Some(now_us);
        true
    }
}

/// What the master loop publishes for connected consoles.
#[derive(Debug, Default)]
pub struct GatewayFeed {
    pub snapshot: Option<MasterSnapshot>,
    events: Vec<RemoteEvent>,
    /// Index of `events[0]` in the overall event sequence.
    events_base: usize,
}

impl GatewayFeed {
    pub fn push_events(&mut self, evs: impl IntoIterator<Item = RemoteEvent>) {
        self.events.extend(evs);
        if self.events.len() > EVENT_BACKLOG {
            let drop = self.events.len() - EVENT_BACKLOG;
            self.events.drain(..drop);
            self.events_base += drop;
        }
    }

    fn events_since(&self, cursor: usize) -> (Vec<RemoteEvent>, usize) {
        let start = cursor.max(self.events_base) - self.events_base;
        (self.events[start..].to_vec(), self.events_base + self.events.len())
    }
}

pub struct GatewayServer {
    addr: SocketAddr,
    feed: Arc<Mutex<GatewayFeed>>,
    commands: Receiver<GatewayCommand>,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl GatewayServer {
    pub fn bind(addr: impl std::net::ToSocketAddrs) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let feed = Arc::new(Mutex::new(GatewayFeed::default()));
        let shutdown = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel();
        let accept_thread = {
            let feed = feed.clone();
            let shutdown = shutdown.clone();
            std::thread::spawn(move || accept_loop(listener, feed, tx, shutdown))
        };
        info!("operator gateway listening on ws://{addr}");
        Ok(Self {
            addr,
            feed,
            commands: rx,
            shutdown,
            accept_thread: Some(accept_thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn publish(&self, snapshot: MasterSnapshot, events: Vec<RemoteEvent>) {
        let mut f = self.feed.lock().unwrap();
        f.snapshot = Some(snapshot);
        f.push_events(events);
    }

    /// Commands received since the last call.
    pub fn drain_commands(&self) -> Vec<GatewayCommand> {
        self.commands.try_iter().collect()
    }

    pub fn recv_command_timeout(&self, timeout: Duration) -> Option<GatewayCommand> {
        self.commands.recv_timeout(timeout).ok()
    }
}

impl Drop for GatewayServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    feed: Arc<Mutex<GatewayFeed>>,
    tx: Sender<GatewayCommand>,
    shutdown: Arc<AtomicBool>,
) {
    let mut clients = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("console connected from {peer}");
                let feed = feed.clone();
                let tx = tx.clone();
                let shutdown = shutdown.clone();
                clients.push(std::thread::spawn(move || {
                    if let Err(e) = client_loop(stream, feed, tx, shutdown) {
                        debug!("console {peer} disconnected: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => {
                warn!("gateway accept failed: {e}");
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    }
    for c in clients {
        let _ = c.join();
    }
}

#[allow(clippy::result_large_err)]
fn send_json(ws: &mut WebSocket<TcpStream>, msg: &Outbound) -> tungstenite::Result<()> {
    ws.send(Message::Text(msg.to_json()))
}

fn client_loop(
    stream: TcpStream,
    feed: Arc<Mutex<GatewayFeed>>,
    tx: Sender<GatewayCommand>,
    shutdown: Arc<AtomicBool>,
) -> Result<(), Box<dyn std::error::Error>> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream)?;
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(5)))?;
    let started = Instant::now();
    let mut decimator = Decimator::new(MAX_OUTBOUND_HZ);
    let mut cursor = 0usize;
    while !shutdown.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => match parse_inbound(&text) {
                Inbound::Command(cmd) => {
                    if tx.send(cmd).is_err() {
                        break;
                    }
                }
                Inbound::Reject(reason) => send_json(&mut ws, &Outbound::Error { reason })?,
                Inbound::Ignored(ty) => warn!("ignoring console message of type {ty:?}"),
            },
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed) | Err(tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e.into()),
        }
        let now = started.elapsed().as_micros() as u64;
        if decimator.ready(now) {
            let (snapshot, events) = {
                let f = feed.lock().unwrap();
                let (evs, next) = f.events_since(cursor);
                cursor = next;
                (f.snapshot.clone(), evs)
            };
            for ev in &events {
                send_json(&mut ws, &event_message(ev))?;
            }
            if let Some(s) = snapshot {
                for m in snapshot_messages(&s) {
                    send_json(&mut ws, &m)?;
                }
            }
        }
    }
    let _ = ws.close(None);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grip_half() {
        assert_eq!(
            parse_inbound(r#"{"type":"grip","value":0.5}"#),
            Inbound::Command(GatewayCommand::Grip(0.5))
        );
    }

    #[test]
    fn scale_out_of_range_rejected() {
        assert!(matches!(
            parse_inbound(r#"{"type":"scale","factor":7}"#),
            Inbound::Reject(_)
        ));
        assert!(matches!(
            parse_inbound(r#"{"type":"scale","factor":-1}"#),
            Inbound::Reject(_)
        ));
        assert_eq!(
            parse_inbound(r#"{"type":"scale","factor":5}"#),
            Inbound::Command(GatewayCommand::Scale(ScaleFactor::new(5).unwrap()))
        );
    }

    #[test]
    fn malformed_and_unknown() {
        assert!(matches!(parse_inbound("{not json"), Inbound::Reject(_)));
        assert!(matches!(parse_inbound("[1,2]"), Inbound::Reject(_)));
        assert!(matches!(parse_inbound(r#"{"type":"grip"}"#), Inbound::Reject(_)));
        assert_eq!(parse_inbound(r#"{"type":"dance"}"#), Inbound::Ignored("dance".into()));
    }

    #[test]
    fn jog_and_locks() {
        assert_eq!(
            parse_inbound(r#"{"type":"jog","dx":10,"dz":-5}"#),
            Inbound::Command(GatewayCommand::Jog {
                displacement: [10.0, 0.0, -5.0],
                tilt: [0.0; 3]
            })
        );
        assert!(matches!(parse_inbound(r#"{"type":"jog","dx":60}"#), Inbound::Reject(_)));
        assert_eq!(
            parse_inbound(r#"{"type":"lock","axes":["x","rotation"]}"#),
            Inbound::Command(GatewayCommand::Lock(LockMask::X | LockMask::ROTATION))
        );
        assert!(matches!(
            parse_inbound(r#"{"type":"lock","axes":["w"]}"#),
            Inbound::Reject(_)
        ));
    }

    #[test]
    fn decimator_caps_rate() {
        let mut d = Decimator::new(30);
        let passed = (0..1_000_000u64).step_by(1000).filter(|t| d.ready(*t)).count();
        assert!(passed <= 30, "{passed}");
    }

    #[test]
    fn event_backlog_cursor() {
        let mut f = GatewayFeed::default();
        let ev = RemoteEvent {
            time_us: 0,
            code: EventCode::Grasped,
            volume_ul: 0,
            location: WireLocation::None,
        };
        f.push_events(vec![ev; 3]);
        let (a, c) = f.events_since(0);
        assert_eq!((a.len(), c), (3, 3));
        f.push_events(vec![ev; EVENT_BACKLOG + 5]);
        let (b, c2) = f.events_since(c);
        assert_eq!(b.len(), EVENT_BACKLOG);
        assert_eq!(c2, EVENT_BACKLOG + 8);
    }
}
