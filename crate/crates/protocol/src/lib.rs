//! Master/slave link for telehaptic teleoperation: the binary wire format,
//! stream reassembly, fixed-rate schedulers on the simulated clock, both
//! endpoints, the master's mirror of the remote cell and the console
//! gateway.

pub mod gateway;
pub mod master;
pub mod quant;
pub mod record;
pub mod schedule;
pub mod session;
pub mod slave;
pub mod stream;
pub mod transport;
pub mod twin;
pub mod wire;

pub use master::{MasterConfig, MasterEndpoint, MasterSnapshot, RemoteEvent};
pub use record::{Direction, WireRecord};
pub use schedule::RateSchedule;
pub use session::LoopbackSession;
pub use slave::{SlaveConfig, SlaveEndpoint};
pub use stream::{SeqTracker, StreamDecoder};
pub use transport::{LoopbackTransport, NullTransport, TcpTransport, Transport, TransportError};
pub use twin::{LedgerMirror, TwinState};
pub use wire::{decode, DecodeError, MsgType, Payload, WireMessage};

/// Default slave listen port; `TELEHAPTIC_PORT` overrides it.
pub const DEFAULT_SLAVE_PORT: u16 = 7420;
pub const PORT_ENV: &str = "TELEHAPTIC_PORT";

pub fn slave_port_from_env() -> u16 {
    std::env::var(PORT_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_SLAVE_PORT)
}
