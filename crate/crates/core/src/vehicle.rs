//! Kinematic Ackermann plant.
//!
//! The vehicle takes a single bicycle steering angle and a forward speed
//! setpoint. Front wheel angles follow the Ackermann relation, rear wheel
//! speeds follow the circle of curvature, and the rear axle center moves on
//! an exact circular arc each step.

use crate::error::{Error, Result};
use crate::types::{normalize_angle, Pose2D, VehicleParams, VehicleState, VelocityCommand};

/// Achieved actuator outputs, carried between steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuatorState {
    pub v_applied: f64,
    pub delta_applied: f64,
    /// Accumulated speed error times time.
    pub pid_integral: f64,
    pub prev_error: f64,
}

/// Splits a bicycle steering angle into `(inner, outer)` front wheel angles.
///
/// Inner is the wheel on the turn side. Both angles carry the sign of
/// `delta`, and satisfy
///
/// * `cot(outer) - cot(inner) = w / l` (sign flips for right turns),
/// * `cot(delta) = (cot(outer) + cot(inner)) / 2`.
pub fn ackermann_split(delta: f64, params: &VehicleParams) -> Result<(f64, f64)> {
    if !delta.is_finite() || delta.abs() > params.delta_max {
        return Err(Error::CommandRejected(format!(
            "steering angle {delta} outside ±{}",
            params.delta_max
        )));
    }
    if delta == 0.0 {
        return Ok((0.0, 0.0));
    }
    let half = params.w / (2.0 * params.l);
    let cot = 1.0 / delta.abs().tan();
    // atan2 keeps the inner wheel well defined past 90° for very short,
    // wide vehicles.
    let inner = 1.0f64.atan2(cot - half);
    let outer = 1.0f64.atan2(cot + half);
    Ok((inner.copysign(delta), outer.copysign(delta)))
}

/// Left/right front wheel angles for a bicycle steering angle.
pub fn front_wheel_angles(delta: f64, params: &VehicleParams) -> Result<(f64, f64)> {
    let (inner, outer) = ackermann_split(delta, params)?;
    Ok(if delta >= 0.0 {
        (inner, outer)
    } else {
        (outer, inner)
    })
}

/// Rear wheel angular velocities `(left, right)` in rad/s.
///
/// Each wheel's linear speed is proportional to its distance from the
/// instantaneous center of rotation, `R ∓ w/2` with `R = l / tan(delta)`.
pub fn wheel_speed_modifiers(delta: f64, v: f64, params: &VehicleParams) -> (f64, f64) {
    if delta == 0.0 {
        let omega = v / params.r_wheel;
        return (omega, omega);
    }
    let radius = params.l / delta.tan();
    let half_track = params.w / 2.0;
    let v_left = v * (radius - half_track) / radius;
    let v_right = v * (radius + half_track) / radius;
    (v_left / params.r_wheel, v_right / params.r_wheel)
}

/// Advances steering and speed actuators by one step.
///
/// Steering slews toward the clamped setpoint at `delta_rate_max`. Speed is
/// driven by a PID on the speed error whose output is an acceleration
/// request, clamped to `±a_max` and then saturated into `[0, v_max]`. The
/// integral only accumulates on unclamped steps.
pub fn step_actuators(
    state: ActuatorState,
    cmd: VelocityCommand,
    params: &VehicleParams,
    step: f64,
) -> ActuatorState {
    let target = cmd.delta_set.clamp(-params.delta_max, params.delta_max);
    let max_turn = params.delta_rate_max * step;
    let delta_applied = state.delta_applied + (target - state.delta_applied).clamp(-max_turn, max_turn);
    let delta_applied = delta_applied.clamp(-params.delta_max, params.delta_max);

    let error = cmd.v_set - state.v_applied;
    let integral = state.pid_integral + error * step;
    let derivative = (error - state.prev_error) / step;
    let accel = params.pid.kp * error + params.pid.ki * integral + params.pid.kd * derivative;

    let max_dv = params.a_max * step;
    let requested = accel * step;
    let mut clamped = false;
    let dv = if requested > max_dv {
        clamped = true;
        max_dv
    } else if requested < -max_dv {
        clamped = true;
        -max_dv
    } else {
        requested
    };
    let mut v = state.v_applied + dv;
    if v > params.v_max {
        v = params.v_max;
        clamped = true;
    } else if v < 0.0 {
        v = 0.0;
        clamped = true;
    }

    ActuatorState {
        v_applied: v,
        delta_applied,
        pid_integral: if clamped { state.pid_integral } else { integral },
        prev_error: error,
    }
}

/// Moves the rear axle along the arc implied by the applied speed and
/// steering, then refreshes the per-wheel quantities.
pub fn integrate_pose(
    state: &VehicleState,
    actuators: &ActuatorState,
    params: &VehicleParams,
    step: f64,
) -> VehicleState {
    let v = actuators.v_applied;
    let delta = actuators.delta_applied;
    let Pose2D { x, y, theta } = state.pose;
    let distance = v * step;
    let curvature = delta.tan() / params.l;

    let (nx, ny, ntheta) = if distance == 0.0 {
        (x, y, theta)
    } else if curvature == 0.0 {
        let (s, c) = theta.sin_cos();
        (x + distance * c, y + distance * s, theta)
    } else {
        let turn = distance * curvature;
        let end = theta + turn;
        (
            x + (end.sin() - theta.sin()) / curvature,
            y + (theta.cos() - end.cos()) / curvature,
            end,
        )
    };

    // The applied steering is clamped to ±delta_max, so the split cannot fail.
    let (delta_left, delta_right) = front_wheel_angles(delta, params).unwrap_or((0.0, 0.0));
    let (omega_left, omega_right) = wheel_speed_modifiers(delta, v, params);
    let mut t = state.t;
    t.ticks += 1;

    VehicleState {
        pose: Pose2D {
            x: nx,
            y: ny,
            theta: normalize_angle(ntheta).unwrap_or(ntheta),
        },
        v,
        delta,
        delta_left,
        delta_right,
        omega_left,
        omega_right,
        t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SimTime;
    use proptest::prelude::*;

    fn cot(a: f64) -> f64 {
        1.0 / a.tan()
    }

    #[test]
    fn straight_ahead_splits_to_zero() {
        assert_eq!(ackermann_split(0.0, &VehicleParams::default()).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn split_matches_closed_form() {
        let p = VehicleParams::default();
        let (inner, outer) = ackermann_split(0.2, &p).unwrap();
        // Solving the two relations for the individual cotangents.
        let cot_inner = cot(0.2) - p.w / (2.0 * p.l);
        let cot_outer = cot(0.2) + p.w / (2.0 * p.l);
        assert!((cot(inner) - cot_inner).abs() < 1e-9);
        assert!((cot(outer) - cot_outer).abs() < 1e-9);
        assert!((cot(outer) - cot(inner) - p.w / p.l).abs() < 1e-9);
        assert!((cot(0.2) - (cot(outer) + cot(inner)) / 2.0).abs() < 1e-9);
        assert!(inner > 0.2 && outer < 0.2);
    }

    #[test]
    fn split_rejects_oversteer() {
        let p = VehicleParams::default();
        assert!(matches!(ackermann_split(0.6, &p), Err(Error::CommandRejected(_))));
        assert!(ackermann_split(-0.6, &p).is_err());
    }

    #[test]
    fn left_turn_puts_inner_wheel_left() {
        let p = VehicleParams::default();
        let (l, r) = front_wheel_angles(0.3, &p).unwrap();
        assert!(l > r);
        let (l, r) = front_wheel_angles(-0.3, &p).unwrap();
        assert!(l > r && r < -0.3);
    }

    #[test]
    fn straight_wheel_speeds() {
        let p = VehicleParams::default();
        let (l, r) = wheel_speed_modifiers(0.0, 5.0, &p);
        assert_eq!(l, 5.0 / 0.36);
        assert_eq!(l, r);
        assert!((l - 13.888_888_888_888_89).abs() < 1e-9);
    }

    #[test]
    fn wheel_speed_ratio_follows_radii() {
        let p = VehicleParams::default();
        let (l, r) = wheel_speed_modifiers(0.2, 5.0, &p);
        assert!(l < r);
        let radius = 2.62 / 0.2f64.tan();
        let expected = (radius - 1.57 / 2.0) / (radius + 1.57 / 2.0);
        assert!((l / r - expected).abs() < 1e-12);
        let mean_linear = (l + r) / 2.0 * p.r_wheel;
        assert!((mean_linear - 5.0).abs() < 1e-9);
    }

    #[test]
    fn actuators_hold_at_setpoint() {
        let p = VehicleParams::default();
        let s = ActuatorState {
            v_applied: 4.0,
            delta_applied: 0.1,
            ..Default::default()
        };
        let next = step_actuators(s, VelocityCommand::new(4.0, 0.1).unwrap(), &p, 0.001);
        assert_eq!(next.v_applied, 4.0);
        assert_eq!(next.delta_applied, 0.1);
        assert_eq!(next.pid_integral, 0.0);
    }

    #[test]
    fn speed_ramp_is_bounded_by_a_max() {
        let p = VehicleParams {
            a_max: 2.0,
            ..Default::default()
        };
        let cmd = VelocityCommand::new(10.0, 0.0).unwrap();
        let mut s = ActuatorState::default();
        for _ in 0..1000 {
            s = step_actuators(s, cmd, &p, 0.001);
        }
        assert!(s.v_applied <= 2.0 + 1e-9, "{}", s.v_applied);
        assert!(s.v_applied > 1.99);
    }

    #[test]
    fn steering_rate_limit_delays_full_lock() {
        let p = VehicleParams {
            delta_rate_max: 0.5,
            ..Default::default()
        };
        let cmd = VelocityCommand::new(0.0, 0.5).unwrap();
        let mut s = ActuatorState::default();
        let mut reached = None;
        for k in 1..=2000u32 {
            s = step_actuators(s, cmd, &p, 0.001);
            if reached.is_none() && (s.delta_applied - 0.5).abs() < 1e-12 {
                reached = Some(k);
            }
        }
        let k = reached.expect("steering never reached setpoint");
        assert!(k as f64 * 0.001 >= 1.0 - 1e-9, "reached after {k} steps");
        assert!(k <= 1001);
    }

    #[test]
    fn speed_converges_to_setpoint() {
        // A PI loop around an integrator overshoots a little; the slow pole
        // sits at −kp/2 + sqrt(kp²/4 − ki) ≈ −0.29 1/s with default gains.
        let p = VehicleParams::default();
        let cmd = VelocityCommand::new(3.0, 0.0).unwrap();
        let mut s = ActuatorState::default();
        let mut peak: f64 = 0.0;
        for _ in 0..30_000 {
            s = step_actuators(s, cmd, &p, 0.001);
            peak = peak.max(s.v_applied);
        }
        assert!((s.v_applied - 3.0).abs() < 1e-3, "{}", s.v_applied);
        assert!(peak < 3.0 * 1.05, "{peak}");
    }

    #[test]
    fn zero_speed_keeps_pose() {
        let p = VehicleParams::default();
        let st = VehicleState::at_rest(Pose2D::new(1.0, 2.0, 0.3).unwrap(), SimTime::new(0, 0.001).unwrap());
        let act = ActuatorState {
            delta_applied: 0.2,
            ..Default::default()
        };
        let next = integrate_pose(&st, &act, &p, 0.001);
        assert_eq!(next.pose, st.pose);
        assert_eq!(next.t.ticks, 1);
    }

    #[test]
    fn straight_step_is_exact() {
        let p = VehicleParams::default();
        let st = VehicleState::at_rest(Pose2D::default(), SimTime::new(0, 0.001).unwrap());
        let act = ActuatorState {
            v_applied: 5.0,
            ..Default::default()
        };
        let next = integrate_pose(&st, &act, &p, 0.001);
        assert_eq!(next.pose.x, 0.005);
        assert_eq!(next.pose.y, 0.0);
    }

    #[test]
    fn arc_matches_dense_euler() {
        let p = VehicleParams::default();
        let act = ActuatorState {
            v_applied: 5.0,
            delta_applied: 0.2,
            ..Default::default()
        };
        let mut st = VehicleState::at_rest(Pose2D::default(), SimTime::new(0, 0.01).unwrap());
        for _ in 0..300 {
            st = integrate_pose(&st, &act, &p, 0.01);
        }
        // Forward Euler at 1e-5 s over the same 3 s.
        let (mut x, mut y, mut th) = (0.0f64, 0.0f64, 0.0f64);
        let rate = 5.0 * 0.2f64.tan() / p.l;
        for _ in 0..300_000 {
            x += 5.0 * th.cos() * 1e-5;
            y += 5.0 * th.sin() * 1e-5;
            th += rate * 1e-5;
        }
        assert!((st.pose.x - x).abs() < 1e-3 && (st.pose.y - y).abs() < 1e-3);
        assert!((st.pose.theta - normalize_angle(th).unwrap()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn ackermann_identities_hold(delta in -0.5f64..0.5) {
            prop_assume!(delta != 0.0);
            let p = VehicleParams::default();
            let (inner, outer) = ackermann_split(delta, &p).unwrap();
            let gap = cot(outer) - cot(inner);
            prop_assert!((gap.abs() - p.w / p.l).abs() < 1e-9);
            prop_assert!((cot(delta) - (cot(outer) + cot(inner)) / 2.0).abs() < 1e-9);
        }

        #[test]
        fn actuator_slew_bounds(
            v0 in 0.0f64..15.0, d0 in -0.5f64..0.5,
            vs in 0.0f64..20.0, ds in -1.0f64..1.0,
            integral in -5.0f64..5.0,
        ) {
            let p = VehicleParams::default();
            let s = ActuatorState { v_applied: v0, delta_applied: d0, pid_integral: integral, prev_error: 0.0 };
            let n = step_actuators(s, VelocityCommand { v_set: vs, delta_set: ds }, &p, 0.001);
            prop_assert!((n.v_applied - v0).abs() <= p.a_max * 0.001 + 1e-12);
            prop_assert!((n.delta_applied - d0).abs() <= p.delta_rate_max * 0.001 + 1e-12);
            prop_assert!(n.delta_applied.abs() <= p.delta_max);
            prop_assert!(n.v_applied >= 0.0 && n.v_applied <= p.v_max);
        }
    }
}
