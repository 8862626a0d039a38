use std::collections::VecDeque;

use crate::sensors::LaserScan;

/// Minimum forward range seen by the rangefinder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadwayEstimate {
    pub d: f64,
    pub valid: bool,
}

impl HeadwayEstimate {
    pub const NONE: Self = Self {
        d: f64::INFINITY,
        valid: false,
    };

    pub fn at(d: f64) -> Self {
        Self { d, valid: true }
    }

    pub fn get(&self) -> Option<f64> {
        self.valid.then_some(self.d)
    }
}

/// Smallest return among beams within `cone_half_angle` of straight ahead.
pub fn headway_from_scan(scan: &LaserScan, cone_half_angle: f64) -> HeadwayEstimate {
    scan.ranges
        .iter()
        .enumerate()
        .filter(|(k, _)| scan.bearing(*k).abs() <= cone_half_angle)
        .filter_map(|(_, r)| *r)
        .min_by(f64::total_cmp)
        .map_or(HeadwayEstimate::NONE, HeadwayEstimate::at)
}

/// Rate of change of headway from a least-squares line over a sliding
/// window of recent samples.
#[derive(Debug, Clone)]
pub struct HeadwayRate {
    window: f64,
    samples: VecDeque<(f64, f64)>,
}

impl HeadwayRate {
    pub fn new(window: f64) -> Self {
        Self {
            window,
            samples: VecDeque::new(),
        }
    }

    /// Adds a sample at time `t` seconds; an invalid headway resets history.
    pub fn push(&mut self, t: f64, headway: HeadwayEstimate) {
        if !headway.valid {
            self.samples.clear();
            return;
        }
        self.samples.push_back((t, headway.d));
        while let Some(&(t0, _)) = self.samples.front() {
            if t - t0 > self.window {
                self.samples.pop_front();
            } else {
                break;
            }
        }
    }

    /// Slope in m/s; 0 with fewer than two samples.
    pub fn rate(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let n = n as f64;
        let mean_t = self.samples.iter().map(|s| s.0).sum::<f64>() / n;
        let mean_d = self.samples.iter().map(|s| s.1).sum::<f64>() / n;
        let (num, den) = self.samples.iter().fold((0.0, 0.0), |(num, den), &(t, d)| {
            (num + (t - mean_t) * (d - mean_d), den + (t - mean_t) * (t - mean_t))
        });
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}
