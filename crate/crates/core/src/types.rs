//! Value types shared by every part of the simulator.
//!
//! Units are SI throughout: meters, seconds, radians. Headings grow
//! counterclockwise from +x and a positive steering angle turns left.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::Domain(format!("angle {a} is not finite")));
    }
    if a > -PI && a <= PI {
        return Ok(a);
    }
    let r = a.rem_euclid(2.0 * PI);
    Ok(if r > PI { r - 2.0 * PI } else { r })
}

/// Planar pose of a rear axle center (or a sensor, or a spawn point).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Domain(format!("pose ({x}, {y}) is not finite")));
        }
        Ok(Self {
            x,
            y,
            theta: normalize_angle(theta)?,
        })
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, lx: f64, ly: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.x + c * lx - s * ly, self.y + s * lx + c * ly)
    }

    /// Maps a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (px - self.x, py - self.y);
        (c * dx + s * dy, -s * dx + c * dy)
    }
}

/// Fixed-step simulation time. Never derived from a wall clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTime {
    pub ticks: u64,
    pub step: f64,
}

impl SimTime {
    pub fn new(ticks: u64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParam {
                name: "step",
                reason: format!("must be positive and finite, got {step}"),
            });
        }
        Ok(Self { ticks, step })
    }

    pub fn seconds(&self) -> f64 {
        sim_time_seconds(*self)
    }
}

pub fn sim_time_seconds(t: SimTime) -> f64 {
    t.ticks as f64 * t.step
}

/// Decides whether `tick` is a sampling instant for a periodic process
/// running at `rate` Hz on a grid of `step` seconds.
///
/// A process fires on the ticks where `floor(t * rate)` increments, with
/// `t = tick * step`. Over any whole number of seconds this yields exactly
/// `rate` firings even when `1 / rate` is not a multiple of `step`.
pub fn is_sampling_instant(tick: u64, step: f64, rate: f64) -> bool {
    if tick == 0 {
        return false;
    }
    // Small bias keeps exact products like 40 * 0.001 * 75 = 3 on the right
    // side of the floor.
    const BIAS: f64 = 1e-9;
    let now = (tick as f64 * step * rate + BIAS).floor();
    let before = ((tick - 1) as f64 * step * rate + BIAS).floor();
    now > before
}

/// Velocity-loop gains of the rear-wheel speed controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 2.0,
            ki: 0.5,
            kd: 0.0,
        }
    }
}

/// Geometry and actuator limits of one vehicle.
///
/// The defaults are placeholders sized like a compact SUV; every field can be
/// overridden per vehicle in the world file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Wheelbase.
    pub l: f64,
    /// Track width.
    pub w: f64,
    /// Rear wheel radius.
    pub r_wheel: f64,
    pub v_max: f64,
    /// Acceleration and deceleration clamp.
    pub a_max: f64,
    pub delta_max: f64,
    pub delta_rate_max: f64,
    pub pid: PidGains,
}

impl Default for VehicleParams {
    #[allow(clippy::approx_constant)]
    fn default() -> Self {
        Self {
            l: 2.62,
            w: 1.57,
            r_wheel: 0.36,
            v_max: 15.0,
            a_max: 3.0,
            delta_max: 0.5236,
            delta_rate_max: 0.5,
            pid: PidGains::default(),
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l", self.l),
            ("w", self.w),
            ("r_wheel", self.r_wheel),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("delta_max", self.delta_max),
            ("delta_rate_max", self.delta_rate_max),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be positive and finite, got {value}"),
                });
            }
        }
        if self.delta_max >= PI / 2.0 {
            return Err(Error::InvalidParam {
                name: "delta_max",
                reason: format!("must be below π/2, got {}", self.delta_max),
            });
        }
        let PidGains { kp, ki, kd } = self.pid;
        if !(kp > 0.0) || ki < 0.0 || kd < 0.0 || !(kp + ki + kd).is_finite() {
            return Err(Error::InvalidParam {
                name: "pid",
                reason: format!("gains must be finite with kp > 0, got {kp}/{ki}/{kd}"),
            });
        }
        Ok(())
    }
}

/// The uniform control input: a forward speed setpoint and a bicycle
/// steering angle setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityCommand {
    pub v_set: f64,
    pub delta_set: f64,
}

impl VelocityCommand {
    pub const STOP: Self = Self {
        v_set: 0.0,
        delta_set: 0.0,
    };

    pub fn new(v_set: f64, delta_set: f64) -> Result<Self> {
        let cmd = Self { v_set, delta_set };
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.v_set.is_finite() || !self.delta_set.is_finite() {
            return Err(Error::CommandRejected(format!(
                "non-finite command ({}, {})",
                self.v_set, self.delta_set
            )));
        }
        if self.v_set < 0.0 {
            return Err(Error::CommandRejected(format!(
                "reverse speed {} is not supported",
                self.v_set
            )));
        }
        Ok(())
    }
}

/// Ground-truth kinematic state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub pose: Pose2D,
    /// Longitudinal speed of the rear axle center.
    pub v: f64,
    /// Effective bicycle steering angle.
    pub delta: f64,
    pub delta_left: f64,
    pub delta_right: f64,
    pub omega_left: f64,
    pub omega_right: f64,
    pub t: SimTime,
}

impl VehicleState {
    pub fn at_rest(pose: Pose2D, t: SimTime) -> Self {
        Self {
            pose,
            v: 0.0,
            delta: 0.0,
            delta_left: 0.0,
            delta_right: 0.0,
            omega_left: 0.0,
            omega_right: 0.0,
            t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_normalize(a: f64) -> f64 {
        let mut r = a;
        while r > PI {
            r -= 2.0 * PI;
        }
        while r <= -PI {
            r += 2.0 * PI;
        }
        r
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(0.0).unwrap(), 0.0);
        assert!((normalize_angle(3.0 * PI).unwrap() - PI).abs() < 1e-12);
        let r = normalize_angle(-1.5 * PI).unwrap();
        assert!((r - naive_normalize(-1.5 * PI)).abs() < 1e-12);
        assert!((r - PI / 2.0).abs() < 1e-12);
        assert_eq!(normalize_angle(PI).unwrap(), PI);
        assert_eq!(normalize_angle(-PI).unwrap(), PI);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        assert!(matches!(normalize_angle(f64::NAN), Err(Error::Domain(_))));
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn sim_time_examples() {
        assert_eq!(sim_time_seconds(SimTime::new(0, 0.001).unwrap()), 0.0);
        assert_eq!(sim_time_seconds(SimTime::new(1000, 0.001).unwrap()), 1.0);
        assert_eq!(sim_time_seconds(SimTime::new(75, 1.0 / 75.0).unwrap()), 1.0);
        assert!(SimTime::new(1, 0.0).is_err());
    }

    #[test]
    fn sampling_instants_count_exactly() {
        for (step, rate, secs) in [(0.001, 75.0, 1u64), (0.001, 5.0, 3), (0.001, 50.0, 2), (0.01, 75.0, 4)] {
            let ticks = (secs as f64 / step).round() as u64;
            let n = (1..=ticks).filter(|&k| is_sampling_instant(k, step, rate)).count();
            assert_eq!(n as u64, secs * rate as u64, "step {step} rate {rate}");
        }
        assert!(!is_sampling_instant(0, 0.001, 75.0));
    }

    #[test]
    fn default_params_are_valid() {
        VehicleParams::default().validate().unwrap();
        let bad = VehicleParams {
            delta_max: 1.6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn commands_reject_reverse_and_nan() {
        assert!(VelocityCommand::new(-1.0, 0.0).is_err());
        assert!(VelocityCommand::new(1.0, f64::NAN).is_err());
        assert!(VelocityCommand::new(0.0, 0.2).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn normalize_is_idempotent_and_congruent(a in -1e4f64..1e4) {
            let n = normalize_angle(a).unwrap();
            proptest::prop_assert!(n > -PI && n <= PI);
            proptest::prop_assert_eq!(normalize_angle(n).unwrap(), n);
            let k = ((a - n) / (2.0 * PI)).round();
            proptest::prop_assert!((a - n - k * 2.0 * PI).abs() < 1e-9);
        }
    }
}
