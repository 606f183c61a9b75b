//! JSON Lines trial log.
//!
//! One record per line, tagged by `rec`. The first line is the header and
//! exactly one `metrics` record closes the log. Records are ordered by
//! `t_us`; wire records use their send time.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use telehaptic_core::sim::{SceneState, SimEvent};
use telehaptic_protocol::wire::Payload;
use telehaptic_protocol::{Direction, WireMessage};

use crate::metrics::Metrics;
use crate::policy::OperatorKind;
use crate::scenario::{HiddenParams, ScenarioSpec};

pub const LOG_FORMAT: &str = "telehaptic-trial";
/// Bumped whenever replay of older logs would no longer be exact.
pub const LOG_VERSION: u32 = 1;
pub const BUILD: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("log has no header record")]
    MissingHeader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub build: String,
    pub spec_hash: String,
    pub condition: OperatorKind,
    pub seed: u64,
    pub hidden: HiddenParams,
    pub scenario: ScenarioSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireEntry {
    pub t_us: u64,
    pub dir: Direction,
    pub seq: u32,
    #[serde(rename = "type")]
    pub msg_type: String,
    pub recv_us: Option<u64>,
    pub delivered: bool,
    /// Message timestamp as carried on the wire.
    pub stamp_us: u64,
    /// Full payload; tactile frames carry only `digest`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub payload: Option<Payload>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub digest: Option<String>,
}

impl WireEntry {
    pub fn new(dir: Direction, msg: &WireMessage, sent_us: u64, recv_us: Option<u64>) -> Self {
        let (payload, digest) = match msg.payload {
            Payload::TactileFrame { .. } => (None, Some(hex::encode(&Sha256::digest(msg.encode())[..8]))),
            p => (Some(p), None),
        };
        Self {
            t_us: sent_us,
            dir,
            seq: msg.seq,
            msg_type: msg.msg_type().name().to_string(),
            recv_us,
            delivered: recv_us.is_some(),
            stamp_us: msg.timestamp_us,
            payload,
            digest,
        }
    }

    /// The logged message, when its payload was kept.
    pub fn message(&self) -> Option<WireMessage> {
        self.payload.map(|p| WireMessage::new(self.seq, self.stamp_us, p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Done,
    Timeout,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TrialEvent {
    TrialStart,
    TrialEnd { completed: bool, reason: EndReason },
    Failure { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rec", rename_all = "snake_case")]
// one header per log; boxing it buys nothing
#[allow(clippy::large_enum_variant)]
pub enum Record {
    Header(Header),
    Wire(WireEntry),
    State {
        t_us: u64,
        state: SceneState,
    },
    SceneEvent {
        t_us: u64,
        event: SimEvent,
    },
    Trial {
        t_us: u64,
        event: TrialEvent,
    },
    Final {
        t_us: u64,
        digest: String,
        state: SceneState,
    },
    Metrics(Metrics),
}

impl Record {
    pub fn t_us(&self) -> Option<u64> {
        match self {
            Record::Header(_) | Record::Metrics(_) => None,
            Record::Wire(w) => Some(w.t_us),
            Record::State { t_us, .. }
            | Record::SceneEvent { t_us, .. }
            | Record::Trial { t_us, .. }
            | Record::Final { t_us, .. } => Some(*t_us),
        }
    }
}

/// SHA-256 of the state's JSON form. Equal digests mean bit-equal floats.
pub fn state_digest(state: &SceneState) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(state).expect("state serialises")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub records: Vec<Record>,
}

impl TrialLog {
    pub fn header(&self) -> Option<&Header> {
        match self.records.first() {
            Some(Record::Header(h)) => Some(h),
            _ => None,
        }
    }

    pub fn metrics(&self) -> impl Iterator<Item = &Metrics> {
        self.records.iter().filter_map(|r| match r {
            Record::Metrics(m) => Some(m),
            _ => None,
        })
    }

    pub fn final_record(&self) -> Option<(u64, &str, &SceneState)> {
        self.records.iter().find_map(|r| match r {
            Record::Final { t_us, digest, state } => Some((*t_us, digest.as_str(), state)),
            _ => None,
        })
    }

    pub fn wire(&self) -> impl Iterator<Item = &WireEntry> {
        self.records.iter().filter_map(|r| match r {
            Record::Wire(w) => Some(w),
            _ => None,
        })
    }

    pub fn trial_end(&self) -> Option<(u64, bool, EndReason)> {
        self.records.iter().find_map(|r| match r {
            Record::Trial {
                t_us,
                event: TrialEvent::TrialEnd { completed, reason },
            } => Some((*t_us, *completed, *reason)),
            _ => None,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), LogError> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_jsonl(&mut v).expect("writing to memory");
        v
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, LogError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
            records.push(r);
        }
        let log = Self { records };
        if log.header().is_none() {
            return Err(LogError::MissingHeader);
        }
        Ok(log)
    }
}
