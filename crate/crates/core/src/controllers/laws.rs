//! Stateless control laws: scheduled speed profiles, the proportional
//! follower and the braking-envelope safety filter.

use serde::{Deserialize, Serialize};

use super::headway::HeadwayEstimate;
use crate::error::{Error, Result};
use crate::types::VelocityCommand;

/// One breakpoint of a piecewise-constant schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSegment {
    /// Start time in seconds.
    pub t: f64,
    pub v: f64,
    #[serde(default)]
    pub delta: f64,
}

/// The segment with the largest start time `≤ t`. Before the first
/// breakpoint the vehicle is held stationary.
pub fn constant_profile(schedule: &[ProfileSegment], t: f64) -> Result<VelocityCommand> {
    if schedule.is_empty() {
        return Err(Error::InvalidParam {
            name: "schedule",
            reason: "empty schedule".into(),
        });
    }
    let idx = schedule.partition_point(|s| s.t <= t);
    Ok(match idx {
        0 => VelocityCommand::STOP,
        i => VelocityCommand {
            v_set: schedule[i - 1].v,
            delta_set: schedule[i - 1].delta,
        },
    })
}

pub(crate) fn validate_schedule(schedule: &[ProfileSegment]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::InvalidParam {
            name: "schedule",
            reason: "empty schedule".into(),
        });
    }
    for pair in schedule.windows(2) {
        if !(pair[0].t < pair[1].t) {
            return Err(Error::InvalidParam {
                name: "schedule",
                reason: format!("breakpoints must be strictly increasing ({} then {})", pair[0].t, pair[1].t),
            });
        }
    }
    for s in schedule {
        VelocityCommand::new(s.v, s.delta)?;
    }
    Ok(())
}

fn default_d_target() -> f64 {
    20.0
}
fn default_k_gain() -> f64 {
    0.2
}
fn default_k_rate() -> f64 {
    0.5
}
fn default_v_cap() -> f64 {
    10.0
}
fn default_rate_window() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerParams {
    /// Desired gap to the object ahead.
    #[serde(default = "default_d_target")]
    pub d_target: f64,
    /// Speed correction per meter of gap error, in 1/s.
    #[serde(default = "default_k_gain")]
    pub k_gain: f64,
    /// Speed correction per m/s of gap growth.
    #[serde(default = "default_k_rate")]
    pub k_rate: f64,
    #[serde(default = "default_v_cap")]
    pub v_cap: f64,
    /// Window, in seconds, over which the gap growth rate is fitted.
    #[serde(default = "default_rate_window")]
    pub rate_window: f64,
}

impl Default for FollowerParams {
    fn default() -> Self {
        Self {
            d_target: default_d_target(),
            k_gain: default_k_gain(),
            k_rate: default_k_rate(),
            v_cap: default_v_cap(),
            rate_window: default_rate_window(),
        }
    }
}

impl FollowerParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_target", self.d_target),
            ("k_gain", self.k_gain),
            ("v_cap", self.v_cap),
            ("rate_window", self.rate_window),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if !(self.k_rate >= 0.0 && self.k_rate.is_finite()) {
            return Err(Error::InvalidParam {
                name: "k_rate",
                reason: format!("must be ≥ 0, got {}", self.k_rate),
            });
        }
        Ok(())
    }
}

/// Distance-keeping speed command.
///
/// `v_set = self_v + k_gain·(d − d_target) + k_rate·headway_rate`, clamped to
/// `[0, v_cap]`. With no target in view the vehicle is told to stop.
pub fn follower_step(
    headway: HeadwayEstimate,
    headway_rate: f64,
    self_v: f64,
    params: &FollowerParams,
) -> VelocityCommand {
    let Some(d) = headway.get() else {
        return VelocityCommand::STOP;
    };
    let v = self_v + params.k_gain * (d - params.d_target) + params.k_rate * headway_rate;
    VelocityCommand {
        v_set: v.clamp(0.0, params.v_cap),
        delta_set: 0.0,
    }
}

fn default_reaction_time() -> f64 {
    2.0
}
fn default_d_safe() -> f64 {
    3.0
}
fn default_a_brake() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopperParams {
    #[serde(default = "default_d_safe")]
    pub d_safe: f64,
    #[serde(default = "default_a_brake")]
    pub a_brake: f64,
    /// Lag budget of the speed loop, in seconds. The vehicle is assumed to
    /// hold its speed this long before braking at `a_brake`. With the
    /// default gains a value of `4 / kp` keeps the approach overdamped.
    #[serde(default = "default_reaction_time")]
    pub reaction_time: f64,
    /// Stop when the rangefinder sees nothing, instead of passing through.
    #[serde(default)]
    pub strict: bool,
}

impl Default for StopperParams {
    fn default() -> Self {
        Self {
            d_safe: default_d_safe(),
            a_brake: default_a_brake(),
            reaction_time: default_reaction_time(),
            strict: false,
        }
    }
}

impl StopperParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d_safe", self.d_safe), ("a_brake", self.a_brake)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if !(self.reaction_time >= 0.0 && self.reaction_time.is_finite()) {
            return Err(Error::InvalidParam {
                name: "reaction_time",
                reason: format!("must be ≥ 0, got {}", self.reaction_time),
            });
        }
        Ok(())
    }

    /// Highest speed from which the vehicle can still stop `d_safe` short of
    /// an object `d` ahead.
    pub fn envelope(&self, d: f64) -> f64 {
        let margin = (d - self.d_safe).max(0.0);
        let a = self.a_brake;
        let tau = self.reaction_time;
        if tau == 0.0 {
            (2.0 * a * margin).sqrt()
        } else {
            let lag = a * tau;
            // Rationalized form of -aτ + sqrt(a²τ² + 2a·margin); exact at 0.
            2.0 * a * margin / (lag + (lag * lag + 2.0 * a * margin).sqrt())
        }
    }
}

/// Caps the commanded speed by the braking envelope; steering passes
/// through.
pub fn obstaclestopper_filter(cmd_in: VelocityCommand, headway: HeadwayEstimate, params: &StopperParams) -> VelocityCommand {
    let v_set = match headway.get() {
        Some(d) => cmd_in.v_set.min(params.envelope(d)),
        None if params.strict => 0.0,
        None => cmd_in.v_set,
    };
    VelocityCommand {
        v_set,
        delta_set: cmd_in.delta_set,
    }
}
