//! Wall-clock pacing for real-time runs and playback.

use std::time::{Duration, Instant};

/// Below this remaining time the pacer spins instead of sleeping.
const SPIN_BELOW: Duration = Duration::from_millis(2);

/// Blocks until `deadline`: a coarse sleep followed by a short spin.
pub fn sleep_until(deadline: Instant) {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let left = deadline - now;
        if left > SPIN_BELOW {
            std::thread::sleep(left - SPIN_BELOW);
        } else {
            std::hint::spin_loop();
        }
    }
}

/// Maps simulated seconds onto wall time at a fixed ratio.
#[derive(Debug, Clone, Copy)]
pub struct Pacer {
    start: Instant,
    /// Simulated seconds per wall second; 0 disables pacing.
    factor: f64,
}

impl Pacer {
    pub fn new(factor: f64) -> Self {
        Self {
            start: Instant::now(),
            factor,
        }
    }

    pub fn is_paced(&self) -> bool {
        self.factor > 0.0
    }

    /// Waits until `sim_seconds` of simulated time are due on the wall clock.
    pub fn wait(&self, sim_seconds: f64) {
        if self.factor > 0.0 {
            sleep_until(self.start + Duration::from_secs_f64(sim_seconds / self.factor));
        }
    }

    /// Shifts the time origin forward, e.g. after a stall that should not be
    /// made up with a burst.
    pub fn delay(&mut self, by: Duration) {
        self.start += by;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pacer_tracks_wall_time() {
        let p = Pacer::new(2.0);
        let t0 = Instant::now();
        p.wait(0.1);
        let dt = t0.elapsed().as_secs_f64();
        assert!((0.045..0.2).contains(&dt), "{dt}");
    }

    #[test]
    fn unpaced_returns_at_once() {
        let p = Pacer::new(0.0);
        let t0 = Instant::now();
        p.wait(1000.0);
        assert!(t0.elapsed() < Duration::from_millis(50));
    }
}
