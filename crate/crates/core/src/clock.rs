//! Simulated clock: seconds of virtual time, advanced explicitly.

/// Monotone simulated clock. Wall time never enters the simulation; every
/// cost is charged by advancing one of these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    now_s: f64,
}

impl SimClock {
    pub fn new() -> Self {
        SimClock { now_s: 0.0 }
    }

    pub fn at(now_s: f64) -> Self {
        assert!(now_s >= 0.0 && now_s.is_finite());
        SimClock { now_s }
    }

    pub fn now(&self) -> f64 {
        self.now_s
    }

    /// Advance by a non-negative duration in seconds.
    pub fn advance(&mut self, dt_s: f64) {
        assert!(dt_s >= 0.0 && dt_s.is_finite(), "clock must move forward");
        self.now_s += dt_s;
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self::new()
    }
}
