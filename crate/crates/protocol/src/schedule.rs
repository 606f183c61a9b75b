//! Fixed-rate emission on the simulated clock.

/// Emission `k` is due at `start + ceil(k · 10⁶ / rate)` µs, so the count
/// over any interval never drifts from `rate · T` by more than one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateSchedule {
    rate_hz: u32,
    start_us: u64,
    next_k: u64,
}

impl RateSchedule {
    pub fn new(rate_hz: u32, start_us: u64) -> Self {
        assert!(rate_hz > 0, "rate must be positive");
        Self {
            rate_hz,
            start_us,
            next_k: 0,
        }
    }

    pub fn rate_hz(&self) -> u32 {
        self.rate_hz
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.rate_hz as f64
    }

    pub fn due_at(&self, k: u64) -> u64 {
        let r = self.rate_hz as u64;
        self.start_us + (k * 1_000_000).div_ceil(r)
    }

    pub fn next_due_us(&self) -> u64 {
        self.due_at(self.next_k)
    }

    pub fn emitted(&self) -> u64 {
        self.next_k
    }

    /// Consumes one emission if it is due by `now_us`, returning its due time.
    pub fn take_due(&mut self, now_us: u64) -> Option<u64> {
        let due = self.next_due_us();
        (due <= now_us).then(|| {
            self.next_k += 1;
            due
        })
    }

    /// Skips every emission due by `now_us` and returns how many were skipped.
    pub fn skip_until(&mut self, now_us: u64) -> u64 {
        let mut n = 0;
        while self.take_due(now_us).is_some() {
            n += 1;
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_over_ten_seconds() {
        for (rate, expect) in [(120, 1200), (50, 500), (125, 1250), (10, 100)] {
            let mut s = RateSchedule::new(rate, 0);
            let n = s.skip_until(10_000_000 - 1);
            assert_eq!(n, expect, "rate {rate}");
        }
    }

    #[test]
    fn irregular_period_rounds_up() {
        let s = RateSchedule::new(120, 100);
        assert_eq!(s.due_at(0), 100);
        assert_eq!(s.due_at(1), 100 + 8334);
        assert_eq!(s.due_at(3), 100 + 25_000);
    }
}
