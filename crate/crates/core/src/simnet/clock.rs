// SPDX-License-Identifier: Apache-2.0

//! Time sources. Simulation runs on a logical clock that only moves when
//! told to; service mode reads the wall clock.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

pub trait Clock: Send + Sync {
    /// Milliseconds since the clock was created.
    fn now_ms(&self) -> u64;
    /// Lets `ms` milliseconds pass. A no-op for real clocks.
    fn advance(&self, ms: u64);
    fn is_logical(&self) -> bool;
}

#[derive(Debug, Default)]
pub struct LogicalClock {
    now: AtomicU64,
}

impl LogicalClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Moves the clock forward to `t`; never moves it back.
    pub fn advance_to(&self, t: u64) {
        self.now.fetch_max(t, Ordering::SeqCst);
    }
}

impl Clock for LogicalClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }

    fn is_logical(&self) -> bool {
        true
    }
}

#[derive(Debug)]
pub struct WallClock {
    start: Instant,
}

impl Default for WallClock {
    fn default() -> Self {
        WallClock {
            start: Instant::now(),
        }
    }
}

impl Clock for WallClock {
    fn now_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    fn advance(&self, _ms: u64) {}

    fn is_logical(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logical_clock_is_monotone() {
        let c = LogicalClock::new();
        c.advance(5);
        c.advance_to(3);
        assert_eq!(c.now_ms(), 5);
        c.advance_to(12);
        assert_eq!(c.now_ms(), 12);
    }
}
