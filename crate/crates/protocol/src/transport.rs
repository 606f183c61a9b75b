//! Byte-stream transports shared by both endpoints.

use std::collections::VecDeque;
use std::io::{ErrorKind, Read, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("connection closed")]
    Closed,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// An ordered, reliable byte stream driven by the simulated clock.
pub trait Transport: Send {
    fn send(&mut self, now_us: u64, bytes: &[u8]) -> Result<(), TransportError>;

    /// Appends every byte available by `now_us` to `out`.
    fn recv(&mut self, now_us: u64, out: &mut Vec<u8>) -> Result<usize, TransportError>;

    /// Earliest simulated time at which queued bytes become readable, when
    /// the transport knows it.
    fn next_arrival_us(&self) -> Option<u64> {
        None
    }

    fn close(&mut self);
}

type Queue = Arc<Mutex<VecDeque<(u64, Vec<u8>)>>>;

/// In-process transport with an optional fixed one-way latency.
pub struct LoopbackTransport {
    inbox: Queue,
    outbox: Queue,
    latency_us: u64,
    closed: Arc<AtomicBool>,
}

impl LoopbackTransport {
    pub fn pair(latency_us: u64) -> (Self, Self) {
        let a: Queue = Arc::default();
        let b: Queue = Arc::default();
        let closed = Arc::new(AtomicBool::new(false));
        (
            Self {
                inbox: a.clone(),
                outbox: b.clone(),
                latency_us,
                closed: closed.clone(),
            },
            Self {
                inbox: b,
                outbox: a,
                latency_us,
                closed,
            },
        )
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    /// Bytes queued towards the peer that it has not read yet.
    pub fn in_flight_to_peer(&self) -> usize {
        self.outbox.lock().unwrap().iter().map(|(_, b)| b.len()).sum()
    }
}

impl Transport for LoopbackTransport {
    fn send(&mut self, now_us: u64, bytes: &[u8]) -> Result<(), TransportError> {
        if self.is_closed() {
            return Err(TransportError::Closed);
        }
        self.outbox
            .lock()
            .unwrap()
            .push_back((now_us + self.latency_us, bytes.to_vec()));
        Ok(())
    }

    fn recv(&mut self, now_us: u64, out: &mut Vec<u8>) -> Result<usize, TransportError> {
        let mut q = self.inbox.lock().unwrap();
        let mut n = 0;
        while q.front().is_some_and(|(t, _)| *t <= now_us) {
            let (_, b) = q.pop_front().unwrap();
            n += b.len();
            out.extend_from_slice(&b);
        }
        if n == 0 && q.is_empty() && self.is_closed() {
            return Err(TransportError::Closed);
        }
        Ok(n)
    }

    fn next_arrival_us(&self) -> Option<u64> {
        self.inbox.lock().unwrap().front().map(|(t, _)| *t)
    }

    fn close(&mut self) {
        self.closed.store(true, Ordering::SeqCst);
    }
}

/// Swallows everything sent and never delivers anything. Used when
/// replaying a recorded message stream into one endpoint.
#[derive(Debug, Default)]
pub struct NullTransport;

impl Transport for NullTransport {
    fn send(&mut self, _now_us: u64, _bytes: &[u8]) -> Result<(), TransportError> {
        Ok(())
    }

    fn recv(&mut self, _now_us: u64, _out: &mut Vec<u8>) -> Result<usize, TransportError> {
        Ok(0)
    }

    fn close(&mut self) {}
}

/// Non-blocking TCP transport. Simulated time is ignored.
pub struct TcpTransport {
    stream: TcpStream,
    pending: Vec<u8>,
    closed: bool,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> std::io::Result<Self> {
        stream.set_nonblocking(true)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            stream,
            pending: Vec::new(),
            closed: false,
        })
    }

    fn flush_pending(&mut self) -> Result<(), TransportError> {
        while !self.pending.is_empty() {
            match self.stream.write(&self.pending) {
                Ok(0) => {
                    self.closed = true;
                    return Err(TransportError::Closed);
                }
                Ok(n) => {
                    self.pending.drain(..n);
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => {
                    self.closed = true;
                    return Err(e.into());
                }
            }
        }
        Ok(())
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, _now_us: u64, bytes: &[u8]) -> Result<(), TransportError> {
        if self.closed {
            return Err(TransportError::Closed);
        }
        self.pending.extend_from_slice(bytes);
        self.flush_pending()
    }

    fn recv(&mut self, _now_us: u64, out: &mut Vec<u8>) -> Result<usize, TransportError> {
        if self.closed {
            return Err(TransportError::Closed);
        }
        self.flush_pending()?;
        let mut buf = [0u8; 4096];
        let mut n = 0;
        loop {
            match self.stream.read(&mut buf) {
                Ok(0) => {
                    self.closed = true;
                    return if n > 0 { Ok(n) } else { Err(TransportError::Closed) };
                }
                Ok(k) => {
                    out.extend_from_slice(&buf[..k]);
                    n += k;
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => return Ok(n),
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => {
                    self.closed = true;
                    return Err(e.into());
                }
            }
        }
    }

    fn close(&mut self) {
        self.closed = true;
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_latency() {
        let (mut a, mut b) = LoopbackTransport::pair(500);
        a.send(1000, b"abc").unwrap();
        let mut out = Vec::new();
        assert_eq!(b.recv(1499, &mut out).unwrap(), 0);
        assert_eq!(b.next_arrival_us(), Some(1500));
        assert_eq!(b.recv(1500, &mut out).unwrap(), 3);
        assert_eq!(out, b"abc");
    }

    #[test]
    fn loopback_close_drains_first() {
        let (mut a, mut b) = LoopbackTransport::pair(0);
        a.send(0, b"x").unwrap();
        a.close();
        let mut out = Vec::new();
        assert_eq!(b.recv(0, &mut out).unwrap(), 1);
        assert!(matches!(b.recv(0, &mut out), Err(TransportError::Closed)));
        assert!(matches!(b.send(0, b"y"), Err(TransportError::Closed)));
    }

    #[test]
    fn tcp_round_trip() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let client = TcpStream::connect(addr).unwrap();
        let (server, _) = listener.accept().unwrap();
        let mut a = TcpTransport::new(client).unwrap();
        let mut b = TcpTransport::new(server).unwrap();
        a.send(0, b"hello").unwrap();
        let mut out = Vec::new();
        for _ in 0..200 {
            b.recv(0, &mut out).unwrap();
            if out.len() == 5 {
                break;
            }
            std::thread::sleep(std::time::Duration::from_millis(5));
        }
        assert_eq!(out, b"hello");
        a.close();
        let mut closed = false;
        for _ in 0..200 {
            if b.recv(0, &mut out).is_err() {
                closed = true;
                break;
            }
            std::thread::sleep(std::time::Duration::from_millis(5));
        }
        assert!(closed);
    }
}
