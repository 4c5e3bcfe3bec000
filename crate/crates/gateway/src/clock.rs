use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Wall-clock milliseconds that never run backwards: the epoch time at
/// startup plus monotonic elapsed time.
#[derive(Debug, Clone, Copy)]
pub struct Clock {
    origin_ms: u64,
    started: Instant,
}

impl Clock {
    pub fn system() -> Self {
        let origin_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Clock {
            origin_ms,
            started: Instant::now(),
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.origin_ms + self.started.elapsed().as_millis() as u64
    }
}

impl Default for Clock {
    fn default() -> Self {
        Self::system()
    }
}
