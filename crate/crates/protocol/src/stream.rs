//! Reassembly of frames from an arbitrary byte stream.

use crate::wire::{decode, DecodeError, WireMessage, MAGIC};

/// Incremental frame decoder.
///
/// After a bad frame the decoder reports the error once, then scans forward
/// to the next magic that starts a frame with a valid CRC; bytes skipped
/// during that scan are counted but not reported again.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    resyncing: bool,
    errors: u64,
    skipped_bytes: u64,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn error_count(&self) -> u64 {
        self.errors
    }

    pub fn skipped_bytes(&self) -> u64 {
        self.skipped_bytes
    }

    /// Next decoded message or error; `None` when more bytes are needed.
    pub fn next_message(&mut self) -> Option<Result<WireMessage, DecodeError>> {
        loop {
            if self.buf.is_empty() {
                return None;
            }
            match decode(&self.buf) {
                Ok(Some((msg, used))) => {
                    self.buf.drain(..used);
                    self.resyncing = false;
                    return Some(Ok(msg));
                }
                Ok(None) => return None,
                Err(e) => {
                    let report = !self.resyncing;
                    self.resyncing = true;
                    self.skip_to_next_magic();
                    if report {
                        self.errors += 1;
                        return Some(Err(e));
                    }
                }
            }
        }
    }

    /// Drops at least one byte, stopping at the next possible frame start.
    fn skip_to_next_magic(&mut self) {
        let next = self.buf[1..]
            .windows(2)
            .position(|w| w == MAGIC)
            .map(|p| p + 1)
            .unwrap_or_else(|| {
                // a trailing first magic byte may be completed by the next push
                if self.buf.last() == Some(&MAGIC[0]) && self.buf.len() > 1 {
                    self.buf.len() - 1
                } else {
                    self.buf.len()
                }
            });
        self.skipped_bytes += next as u64;
        self.buf.drain(..next);
    }
}

/// Per-direction sequence bookkeeping. Gaps and reorders are counted, not
/// hidden.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SeqTracker {
    pub last: Option<u32>,
    pub received: u64,
    pub gaps: u64,
    pub missing: u64,
    pub out_of_order: u64,
}

impl SeqTracker {
    pub fn observe(&mut self, seq: u32) {
        self.received += 1;
        if let Some(last) = self.last {
            if seq <= last {
                self.out_of_order += 1;
                return;
            }
            if seq != last + 1 {
                self.gaps += 1;
                self.missing += (seq - last - 1) as u64;
            }
        }
        self.last = Some(seq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::Payload;

    fn frames(n: u32) -> Vec<Vec<u8>> {
        (0..n)
            .map(|i| WireMessage::new(i, i as u64, Payload::ForceFeedback { force_mn: i }).encode())
            .collect()
    }

    #[test]
    fn byte_at_a_time() {
        let mut d = StreamDecoder::new();
        let mut got = Vec::new();
        for f in frames(5) {
            for b in f {
                d.push(&[b]);
                while let Some(m) = d.next_message() {
                    got.push(m.unwrap().seq);
                }
            }
        }
        assert_eq!(got, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn one_error_then_recovers() {
        let mut fs = frames(6);
        fs[2][20] ^= 0x01;
        let mut d = StreamDecoder::new();
        d.push(&fs.concat());
        let mut ok = Vec::new();
        let mut errs = 0;
        while let Some(m) = d.next_message() {
            match m {
                Ok(m) => ok.push(m.seq),
                Err(_) => errs += 1,
            }
        }
        assert_eq!(errs, 1);
        assert_eq!(ok, vec![0, 1, 3, 4, 5]);
    }

    #[test]
    fn leading_garbage() {
        let mut d = StreamDecoder::new();
        d.push(&[1, 2, 3, 0x54]);
        d.push(&frames(1)[0][1..]);
        assert!(d.next_message().unwrap().is_err());
        assert_eq!(d.next_message().unwrap().unwrap().seq, 0);
    }

    #[test]
    fn seq_gaps() {
        let mut t = SeqTracker::default();
        for s in [0, 1, 2, 5, 6, 6] {
            t.observe(s);
        }
        assert_eq!((t.gaps, t.missing, t.out_of_order), (1, 2, 1));
    }
}
