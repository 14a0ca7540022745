use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use caris_core::clock::{Clock, MonotonicClock};

/// Session time in milliseconds, taken either from the wall clock or from
/// the robot's odometry stamps (the simulator's virtual clock).
pub enum SessionClock {
    Wall(MonotonicClock),
    Virtual(RobotTime),
}

impl SessionClock {
    /// Feeds a robot stamp in seconds; ignored by the wall clock.
    pub fn observe_stamp(&self, stamp_s: f64) {
        if let SessionClock::Virtual(v) = self {
            v.observe(stamp_s);
        }
    }
}

impl Clock for SessionClock {
    fn now_ms(&self) -> u64 {
        match self {
            SessionClock::Wall(c) => c.now_ms(),
            SessionClock::Virtual(v) => v.now_ms(),
        }
    }
}

/// Milliseconds of robot time since the first stamp seen.
#[derive(Default)]
pub struct RobotTime {
    origin: Mutex<Option<u64>>,
    now: AtomicU64,
}

impl RobotTime {
    pub fn observe(&self, stamp_s: f64) {
        if !stamp_s.is_finite() || stamp_s < 0.0 {
            return;
        }
        let ms = (stamp_s * 1000.0).round() as u64;
        let origin = *self.origin.lock().expect("origin poisoned").get_or_insert(ms);
        // Stamps that predate the origin (a restarted robot) must not move time back.
        self.now.fetch_max(ms.saturating_sub(origin), Ordering::SeqCst);
    }
}

impl Clock for RobotTime {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robot_time_is_relative_and_monotone() {
        let t = RobotTime::default();
        assert_eq!(t.now_ms(), 0);
        t.observe(12.5);
        assert_eq!(t.now_ms(), 0);
        t.observe(13.0);
        assert_eq!(t.now_ms(), 500);
        t.observe(1.0);
        assert_eq!(t.now_ms(), 500);
    }
}
