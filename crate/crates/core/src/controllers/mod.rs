//! Control nodes: sensor inputs in, one [`VelocityCommand`] per control
//! period out.
//!
//! A [`ControlNode`] owns one vehicle's binding. It tracks the latest
//! inputs from the vehicle's topics, runs its [`Controller`] on the control
//! grid, and passes the result through the optional obstaclestopper filter.

mod fuzzy;
mod headway;
mod laws;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use fuzzy::{fuzzy_decide, fuzzy_distance_error, FuzzyRuleTable, OutputLabel, Triangle, FAR_ERROR, V_FLOOR};
pub use headway::{headway_from_scan, HeadwayEstimate, HeadwayRate};
pub use laws::{
    constant_profile, follower_step, obstaclestopper_filter, FollowerParams, ProfileSegment, StopperParams,
};

use crate::bus::Envelope;
use crate::error::{Error, Result};
use crate::msg::Message;
use crate::sensors::{GpsFix, LaserScan};
use crate::types::{is_sampling_instant, SimTime, VehicleParams, VehicleState, VelocityCommand};

/// Topic names in one vehicle's namespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VehicleTopics {
    pub scan: String,
    pub points: String,
    pub gps: String,
    pub state: String,
    pub teleop: String,
    pub cmd_vel_in: String,
    pub cmd_vel: String,
}

impl VehicleTopics {
    pub fn new(vehicle: &str) -> Self {
        let t = |channel: &str| format!("/{vehicle}/{channel}");
        Self {
            scan: t("scan"),
            points: t("points"),
            gps: t("gps"),
            state: t("state"),
            teleop: t("teleop"),
            cmd_vel_in: t("cmd_vel_in"),
            cmd_vel: t("cmd_vel"),
        }
    }
}

fn default_period() -> f64 {
    0.02
}
fn default_cone() -> f64 {
    FRAC_PI_6
}
fn default_tau_target() -> f64 {
    2.0
}
fn default_fuzzy_v_cap() -> f64 {
    10.0
}

/// Which control law drives the vehicle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[allow(clippy::large_enum_variant)]
pub enum ControlLaw {
    /// No commands; the vehicle stays at rest.
    #[default]
    Idle,
    ConstantProfile { schedule: Vec<ProfileSegment> },
    Follower(FollowerParams),
    FuzzyFollower {
        #[serde(default = "default_tau_target")]
        tau_target: f64,
        #[serde(default = "default_fuzzy_v_cap")]
        v_cap: f64,
        /// `None` uses the shipped rule table.
        #[serde(default)]
        rules: Option<FuzzyRuleTable>,
    },
    /// Commands come from the UI bridge.
    Teleop,
}

/// The controller binding of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    /// Control period in seconds.
    #[serde(default = "default_period")]
    pub period: f64,
    /// Half-width of the forward cone used for headway.
    #[serde(default = "default_cone")]
    pub cone_half_angle: f64,
    #[serde(default)]
    pub law: ControlLaw,
    /// When set, the filter is the only writer of `cmd_vel` and the law
    /// publishes on `cmd_vel_in`.
    #[serde(default)]
    pub obstaclestopper: Option<StopperParams>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            period: default_period(),
            cone_half_angle: default_cone(),
            law: ControlLaw::Idle,
            obstaclestopper: None,
        }
    }
}

impl ControllerConfig {
    pub fn with_law(law: ControlLaw) -> Self {
        Self { law, ..Self::default() }
    }

    pub fn validate(&self, params: &VehicleParams) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidParam {
                name: "period",
                reason: format!("must be positive, got {}", self.period),
            });
        }
        if !(self.cone_half_angle > 0.0 && self.cone_half_angle <= FRAC_PI_2) {
            return Err(Error::InvalidParam {
                name: "cone_half_angle",
                reason: format!("must be in (0, π/2], got {}", self.cone_half_angle),
            });
        }
        if let Some(s) = &self.obstaclestopper {
            s.validate()?;
        }
        match &self.law {
            ControlLaw::Idle | ControlLaw::Teleop => Ok(()),
            ControlLaw::ConstantProfile { schedule } => laws::validate_schedule(schedule),
            ControlLaw::Follower(p) => p.validate(),
            ControlLaw::FuzzyFollower { tau_target, v_cap, rules } => {
                for (name, v) in [("tau_target", *tau_target), ("v_cap", *v_cap)] {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::InvalidParam {
                            name,
                            reason: format!("must be positive, got {v}"),
                        });
                    }
                }
                if !(params.a_max > 0.0) {
                    return Err(Error::InvalidParam {
                        name: "a_max",
                        reason: "fuzzy follower needs a positive a_max".into(),
                    });
                }
                rules.as_ref().map_or(Ok(()), FuzzyRuleTable::validate)
            }
        }
    }

    pub fn is_teleop(&self) -> bool {
        matches!(self.law, ControlLaw::Teleop)
    }
}

/// Latest inputs handed to a controller at a control instant.
#[derive(Debug, Clone, Copy)]
pub struct ControlInputs<'a> {
    pub now: SimTime,
    /// Control period in seconds.
    pub period: f64,
    pub params: &'a VehicleParams,
    pub state: Option<&'a VehicleState>,
    pub scan: Option<&'a LaserScan>,
    pub gps: Option<&'a GpsFix>,
    pub teleop: Option<VelocityCommand>,
    pub headway: HeadwayEstimate,
    /// Headway slope in m/s over the recent window.
    pub headway_rate: f64,
}

impl ControlInputs<'_> {
    pub fn self_v(&self) -> f64 {
        self.state.map_or(0.0, |s| s.v)
    }
}

/// A control law. `Ok(None)` means "publish nothing this period"; an
/// error faults the vehicle.
pub trait Controller: Send {
    fn command(&mut self, inputs: &ControlInputs<'_>) -> Result<Option<VelocityCommand>, String>;
}

struct Idle;

impl Controller for Idle {
    fn command(&mut self, _: &ControlInputs<'_>) -> Result<Option<VelocityCommand>, String> {
        Ok(None)
    }
}

struct Profile(Vec<ProfileSegment>);

impl Controller for Profile {
    fn command(&mut self, inputs: &ControlInputs<'_>) -> Result<Option<VelocityCommand>, String> {
        constant_profile(&self.0, inputs.now.seconds())
            .map(Some)
            .map_err(|e| e.to_string())
    }
}

struct Follower(FollowerParams);

impl Controller for Follower {
    fn command(&mut self, inputs: &ControlInputs<'_>) -> Result<Option<VelocityCommand>, String> {
        Ok(Some(follower_step(inputs.headway, inputs.headway_rate, inputs.self_v(), &self.0)))
    }
}

struct FuzzyFollower {
    tau_target: f64,
    v_cap: f64,
    rules: FuzzyRuleTable,
    v_cmd: Option<f64>,
    prev_error: Option<f64>,
}

impl Controller for FuzzyFollower {
    fn command(&mut self, inputs: &ControlInputs<'_>) -> Result<Option<VelocityCommand>, String> {
        let v = inputs.self_v();
        let error = fuzzy_distance_error(inputs.headway, v, self.tau_target);
        let rate = self.prev_error.map_or(0.0, |p| (error - p) / inputs.period);
        self.prev_error = Some(error);
        let dv = fuzzy_decide(&self.rules, error, rate, inputs.params.a_max, inputs.period);
        let v_cmd = (self.v_cmd.unwrap_or(v) + dv).clamp(0.0, self.v_cap);
        self.v_cmd = Some(v_cmd);
        Ok(Some(VelocityCommand {
            v_set: v_cmd,
            delta_set: 0.0,
        }))
    }
}

struct Teleop;

impl Controller for Teleop {
    fn command(&mut self, inputs: &ControlInputs<'_>) -> Result<Option<VelocityCommand>, String> {
        Ok(Some(inputs.teleop.unwrap_or(VelocityCommand::STOP)))
    }
}

/// Builds the stock controller for a law.
pub fn build_controller(law: &ControlLaw) -> Box<dyn Controller> {
    match law {
        ControlLaw::Idle => Box::new(Idle),
        ControlLaw::ConstantProfile { schedule } => Box::new(Profile(schedule.clone())),
        ControlLaw::Follower(p) => Box::new(Follower(*p)),
        ControlLaw::FuzzyFollower { tau_target, v_cap, rules } => Box::new(FuzzyFollower {
            tau_target: *tau_target,
            v_cap: *v_cap,
            rules: rules.clone().unwrap_or_default(),
            v_cmd: None,
            prev_error: None,
        }),
        ControlLaw::Teleop => Box::new(Teleop),
    }
}

/// What a node produced at one control instant.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeOutput {
    /// The law's command, published on `cmd_vel_in` when a filter is bound.
    pub raw: Option<VelocityCommand>,
    /// The command for `cmd_vel`.
    pub command: Option<VelocityCommand>,
    /// Set on the instant the controller faulted.
    pub fault: Option<String>,
}

/// One vehicle's controller binding plus its input tracking.
pub struct ControlNode {
    vehicle: String,
    config: ControllerConfig,
    params: VehicleParams,
    topics: VehicleTopics,
    controller: Box<dyn Controller>,
    state: Option<VehicleState>,
    scan: Option<LaserScan>,
    gps: Option<GpsFix>,
    teleop: Option<VelocityCommand>,
    headway: HeadwayEstimate,
    rate: HeadwayRate,
    faulted: bool,
}

impl ControlNode {
    pub fn new(vehicle: &str, config: ControllerConfig, params: VehicleParams) -> Result<Self> {
        let controller = build_controller(&config.law);
        Self::with_controller(vehicle, config, params, controller)
    }

    /// Binds a custom controller; `config.law` is then only descriptive.
    pub fn with_controller(
        vehicle: &str,
        config: ControllerConfig,
        params: VehicleParams,
        controller: Box<dyn Controller>,
    ) -> Result<Self> {
        crate::world::validate_name(vehicle)?;
        config.validate(&params)?;
        let window = match &config.law {
            ControlLaw::Follower(p) => p.rate_window,
            _ => FollowerParams::default().rate_window,
        };
        Ok(Self {
            vehicle: vehicle.to_string(),
            topics: VehicleTopics::new(vehicle),
            config,
            params,
            controller,
            state: None,
            scan: None,
            gps: None,
            teleop: None,
            headway: HeadwayEstimate::NONE,
            rate: HeadwayRate::new(window),
            faulted: false,
        })
    }

    pub fn vehicle(&self) -> &str {
        &self.vehicle
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn topics(&self) -> &VehicleTopics {
        &self.topics
    }

    pub fn headway(&self) -> HeadwayEstimate {
        self.headway
    }

    pub fn is_faulted(&self) -> bool {
        self.faulted
    }

    /// Topics whose envelopes [`observe`](Self::observe) consumes.
    pub fn input_topics(&self) -> [&str; 4] {
        [&self.topics.scan, &self.topics.state, &self.topics.gps, &self.topics.teleop]
    }

    /// Feeds one delivered envelope; envelopes on other topics are ignored.
    pub fn observe(&mut self, env: &Envelope) {
        let topic = &*env.topic;
        match &*env.payload {
            Message::LaserScan(scan) if topic == self.topics.scan => {
                self.headway = headway_from_scan(scan, self.config.cone_half_angle);
                self.rate.push(scan.t.seconds(), self.headway);
                self.scan = Some(scan.clone());
            }
            Message::VehicleState(s) if topic == self.topics.state => self.state = Some(*s),
            Message::GpsFix(g) if topic == self.topics.gps => self.gps = Some(*g),
            Message::VelocityCommand(c) if topic == self.topics.teleop => self.teleop = Some(*c),
            _ => {}
        }
    }

    /// Whether tick `tick` is a control instant.
    pub fn is_due(&self, tick: u64, step: f64) -> bool {
        is_sampling_instant(tick, step, 1.0 / self.config.period)
    }

    /// Runs the law and the filter. A faulted node commands a stop forever.
    pub fn step(&mut self, now: SimTime) -> NodeOutput {
        let mut fault = None;
        let raw = if self.faulted {
            Some(VelocityCommand::STOP)
        } else {
            let inputs = ControlInputs {
                now,
                period: self.config.period,
                params: &self.params,
                state: self.state.as_ref(),
                scan: self.scan.as_ref(),
                gps: self.gps.as_ref(),
                teleop: self.teleop,
                headway: self.headway,
                headway_rate: self.rate.rate(),
            };
            let result = self
                .controller
                .command(&inputs)
                .and_then(|c| match c {
                    Some(cmd) if cmd.delta_set.abs() > self.params.delta_max => Err(format!(
                        "steering command {} beyond delta_max {}",
                        cmd.delta_set, self.params.delta_max
                    )),
                    Some(cmd) => cmd.validate().map(|_| Some(cmd)).map_err(|e| e.to_string()),
                    None => Ok(None),
                });
            match result {
                Ok(cmd) => cmd,
                Err(message) => {
                    self.faulted = true;
                    fault = Some(message);
                    Some(VelocityCommand::STOP)
                }
            }
        };
        let command = match (&self.config.obstaclestopper, raw) {
            (Some(p), Some(cmd)) => Some(obstaclestopper_filter(cmd, self.headway, p)),
            (_, cmd) => cmd,
        };
        NodeOutput { raw, command, fault }
    }
}

/// Thread-safe inbound queue for UI teleoperation. Holds at most one
/// pending command per vehicle; newer commands replace older ones.
#[derive(Debug, Clone, Default)]
pub struct TeleopInbox {
    inner: Arc<Mutex<TeleopState>>,
}

#[derive(Debug, Default)]
struct TeleopState {
    bound: BTreeMap<String, VehicleParams>,
    pending: BTreeMap<String, VelocityCommand>,
}

impl TeleopInbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&self, vehicle: &str, params: VehicleParams) {
        self.inner.lock().unwrap().bound.insert(vehicle.to_string(), params);
    }

    pub fn unbind(&self, vehicle: &str) {
        let mut s = self.inner.lock().unwrap();
        s.bound.remove(vehicle);
        s.pending.remove(vehicle);
    }

    /// Teleop-bound vehicles with their limits.
    pub fn bound(&self) -> BTreeMap<String, VehicleParams> {
        self.inner.lock().unwrap().bound.clone()
    }

    /// Queues a command, clamped to the vehicle's limits.
    pub fn submit(&self, vehicle: &str, cmd: VelocityCommand) -> Result<VelocityCommand> {
        cmd.validate()?;
        let mut s = self.inner.lock().unwrap();
        let params = s
            .bound
            .get(vehicle)
            .ok_or_else(|| Error::CommandRejected(format!("`{vehicle}` is not bound to teleop")))?;
        let cmd = VelocityCommand {
            v_set: cmd.v_set.min(params.v_max),
            delta_set: cmd.delta_set.clamp(-params.delta_max, params.delta_max),
        };
        s.pending.insert(vehicle.to_string(), cmd);
        Ok(cmd)
    }

    /// Takes all pending commands in vehicle-name order.
    pub fn drain(&self) -> Vec<(String, VelocityCommand)> {
        std::mem::take(&mut self.inner.lock().unwrap().pending).into_iter().collect()
    }

    pub fn bound_names(&self) -> BTreeSet<String> {
        self.inner.lock().unwrap().bound.keys().cloned().collect()
    }
}
