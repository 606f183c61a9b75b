//! Event-driven pairing of both endpoints over an in-process link.

use telehaptic_core::sim::Scene;

use crate::master::{MasterConfig, MasterEndpoint};
use crate::slave::{SlaveConfig, SlaveEndpoint};
use crate::transport::{LoopbackTransport, Transport};

/// Master and slave joined by a loopback link and stepped on one simulated
/// clock. Steps land on scheduled emissions and deliveries.
///
/// The slave is polled at most once per instant, reading its inbox before
/// running the ticks due then. Bytes that reach it later in the same
/// instant wait for its next poll, so a replay that re-applies each
/// received message before the ticks of its receive time reproduces the
/// run exactly.
pub struct LoopbackSession {
    pub master: MasterEndpoint<LoopbackTransport>,
    pub slave: SlaveEndpoint<LoopbackTransport>,
    now_us: u64,
    slave_polled_at: Option<u64>,
}

impl LoopbackSession {
    pub fn new(scene: Scene, slave_cfg: SlaveConfig, master_cfg: MasterConfig, latency_us: u64) -> Self {
        let (m, s) = LoopbackTransport::pair(latency_us);
        Self {
            master: MasterEndpoint::new(m, master_cfg, 0),
            slave: SlaveEndpoint::new(scene, s, slave_cfg, 0),
            now_us: 0,
            slave_polled_at: None,
        }
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn next_event_us(&self) -> u64 {
        let mut t = self.slave.next_due_us().min(self.master.next_due_us());
        if let Some(a) = self.master.transport().next_arrival_us() {
            t = t.min(a);
        }
        if let Some(a) = self.slave.transport().next_arrival_us() {
            if self.slave_polled_at.is_none_or(|p| a > p) {
                t = t.min(a);
            }
        }
        t.max(self.now_us)
    }

    /// Advances to the next event. `operator` runs between the master
    /// reading its inbox and emitting, with the master and the time.
    pub fn step_with<F>(&mut self, operator: F) -> u64
    where
        F: FnOnce(&mut MasterEndpoint<LoopbackTransport>, u64),
    {
        let t = self.next_event_us();
        self.now_us = t;
        if self.slave_polled_at.is_none_or(|p| t > p) {
            self.slave.poll(t);
            self.slave_polled_at = Some(t);
        }
        self.master.receive(t);
        operator(&mut self.master, t);
        self.master.emit(t);
        t
    }

    pub fn step(&mut self) -> u64 {
        self.step_with(|_, _| {})
    }

    /// Steps until the clock passes `end_us`.
    pub fn run_until(&mut self, end_us: u64) {
        while self.next_event_us() <= end_us {
            self.step();
        }
    }

    /// Drops the link from the master side.
    pub fn disconnect(&mut self) {
        self.master.transport_mut().close();
    }
}
