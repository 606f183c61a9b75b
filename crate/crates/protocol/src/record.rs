use serde::{Deserialize, Serialize};

use crate::wire::WireMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "m2s")]
    MasterToSlave,
    #[serde(rename = "s2m")]
    SlaveToMaster,
}

/// A message as seen at one endpoint, stamped with the simulated time it
/// was sent or received there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRecord {
    pub dir: Direction,
    pub time_us: u64,
    pub msg: WireMessage,
}
