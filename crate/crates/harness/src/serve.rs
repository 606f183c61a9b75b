//! Live operator mode: slave and master joined over local TCP, with the
//! console gateway driving the master.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use log::info;

use telehaptic_core::HapticInput;
use telehaptic_protocol::gateway::{GatewayCommand, GatewayServer, TrialAction};
use telehaptic_protocol::{MasterEndpoint, SlaveEndpoint, TcpTransport};

use crate::scenario::ScenarioSpec;
use crate::trial::{initial_scene, master_config, slave_config};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Slave link port; 0 picks a free one.
    pub port: u16,
    /// Console WebSocket port; 0 picks a free one.
    pub ui_port: u16,
    /// Pace the simulated clock to the wall clock. Otherwise it advances
    /// one `step_us` per loop iteration as fast as the loop runs.
    pub realtime: bool,
    pub step_us: u64,
    /// Stop after this much simulated time.
    pub duration_s: Option<f64>,
    pub seed: u64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            port: telehaptic_protocol::slave_port_from_env(),
            ui_port: telehaptic_protocol::gateway::DEFAULT_UI_PORT,
            realtime: false,
            step_us: 1_000,
            duration_s: None,
            seed: 0,
        }
    }
}

pub struct ServeHandle {
    pub slave_addr: SocketAddr,
    pub ui_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<u64>>>,
}

impl ServeHandle {
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Waits for the loop to end; returns the simulated end time.
    pub fn join(mut self) -> Result<u64> {
        let t = self.thread.take().expect("joined once");
        t.join().map_err(|_| anyhow::anyhow!("serve loop panicked"))?
    }
}

impl Drop for ServeHandle {
    fn drop(&mut self) {
        self.stop();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds both sockets and starts the loop on its own thread.
pub fn spawn(spec: &ScenarioSpec, opts: ServeOptions) -> Result<ServeHandle> {
    let listener =
        TcpListener::bind(("127.0.0.1", opts.port)).with_context(|| format!("binding slave port {}", opts.port))?;
    let slave_addr = listener.local_addr()?;
    let master_stream = TcpStream::connect(slave_addr).context("connecting master to slave")?;
    let (slave_stream, _) = listener.accept().context("accepting master link")?;
    let gateway = GatewayServer::bind(("127.0.0.1", opts.ui_port))
        .with_context(|| format!("binding console port {}", opts.ui_port))?;
    let ui_addr = gateway.local_addr();
    info!("slave on {slave_addr}, console on ws://{ui_addr}");

    let scene = initial_scene(spec, opts.seed)?;
    let slave = SlaveEndpoint::new(scene, TcpTransport::new(slave_stream)?, slave_config(spec), 0);
    let master = MasterEndpoint::new(TcpTransport::new(master_stream)?, master_config(spec), 0);
    let stop = Arc::new(AtomicBool::new(false));
    let thread = {
        let stop = stop.clone();
        std::thread::spawn(move || run_loop(slave, master, gateway, opts, stop))
    };
    Ok(ServeHandle {
        slave_addr,
        ui_addr,
        stop,
        thread: Some(thread),
    })
}

fn apply_command(master: &mut MasterEndpoint<TcpTransport>, cmd: GatewayCommand, now_us: u64) {
    let input = *master.input();
    match cmd {
        GatewayCommand::Jog { displacement, tilt } => {
            master.set_input(HapticInput::saturating(displacement, tilt, input.grip_command, now_us));
        }
        GatewayCommand::Grip(g) => {
            master.set_input(HapticInput::saturating(
                input.handle_displacement,
                input.handle_tilt,
                g,
                now_us,
            ));
        }
        GatewayCommand::Scale(s) => master.set_scale(s),
        GatewayCommand::Lock(l) => master.set_locks(l),
        GatewayCommand::Trial(TrialAction::Start) => info!("console: trial start at {now_us} us"),
        GatewayCommand::Trial(TrialAction::Stop) => info!("console: trial stop at {now_us} us"),
    }
}

fn run_loop(
    mut slave: SlaveEndpoint<TcpTransport>,
    mut master: MasterEndpoint<TcpTransport>,
    gateway: GatewayServer,
    opts: ServeOptions,
    stop: Arc<AtomicBool>,
) -> Result<u64> {
    let start = Instant::now();
    let end_us = opts.duration_s.map(|s| (s * 1e6) as u64);
    let mut now_us = 0u64;
    while !stop.load(Ordering::SeqCst) {
        if end_us.is_some_and(|e| now_us > e) {
            break;
        }
        slave.poll(now_us);
        master.receive(now_us);
        for cmd in gateway.drain_commands() {
            apply_command(&mut master, cmd, now_us);
        }
        master.emit(now_us);
        gateway.publish(master.snapshot(now_us), master.take_events());
        if master.is_closed() {
            info!("master link closed; stopping");
            break;
        }
        now_us = if opts.realtime {
            let next = slave.next_due_us().min(master.next_due_us());
            let wall = start.elapsed().as_micros() as u64;
            if next > wall {
                std::thread::sleep(Duration::from_micros((next - wall).min(1_000)));
            }
            start.elapsed().as_micros() as u64
        } else {
            now_us + opts.step_us
        };
    }
    Ok(now_us)
}
