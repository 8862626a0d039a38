//! The fixed-step scheduler.
//!
//! Each tick runs the same phases in the same order:
//!
//! 1. apply queued spawns and despawns, then deliver last tick's envelopes
//!    (commands to the plants, sensor data to the controllers) and forward
//!    pending teleop input onto the bus;
//! 2. run controllers whose period is due, in vehicle-name order;
//! 3. apply obstaclestopper filters and publish commands;
//! 4. step actuators and integrate poses in vehicle-name order;
//! 5. sample due sensors in (vehicle, sensor) name order;
//! 6. publish ground-truth state and the clock;
//! 7. close the tick on the bus and hand the delivered envelopes to taps.
//!
//! Messages published in tick `k` carry `t = k` and reach their consumers in
//! tick `k + 1`.

mod offline;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

pub use offline::replay_node;

use crate::bus::{Bus, BusTap, Envelope, Publisher};
use crate::controllers::{headway_from_scan, ControlNode, Controller, TeleopInbox, VehicleTopics};
use crate::error::{Error, Result};
use crate::msg::{Diagnostic, Message, Severity, SpawnAction, SpawnRequest, TypeTag};
use crate::pacing::Pacer;
use crate::sensors::{sample_gps, sample_lidar, sample_rangefinder, sensor_rng, SensorMount};
use crate::types::{is_sampling_instant, SimTime, VehicleState, VelocityCommand};
use crate::vehicle::{integrate_pose, step_actuators, ActuatorState};
use crate::world::{solids_overlap, Solid, VehicleSpawn, WorldModel};

pub const CLOCK_TOPIC: &str = "/clock";
pub const SPAWN_TOPIC: &str = "/spawn";
pub const DIAGNOSTICS_TOPIC: &str = "/diagnostics";

/// A world plus run options.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub world: WorldModel,
    /// Simulated seconds; `None` runs until stopped.
    pub duration: Option<f64>,
    pub seed: u64,
    /// Abort on the first controller fault instead of isolating it.
    pub strict: bool,
}

impl Scenario {
    pub fn new(world: WorldModel, duration: Option<f64>, seed: u64) -> Self {
        Self {
            world,
            duration,
            seed,
            strict: false,
        }
    }
}

struct Publishers {
    scan: Publisher,
    points: Publisher,
    gps: Publisher,
    state: Publisher,
    teleop: Publisher,
    cmd_vel_in: Publisher,
    cmd_vel: Publisher,
}

impl Publishers {
    fn advertise(bus: &mut Bus, t: &VehicleTopics) -> Result<Self> {
        Ok(Self {
            scan: bus.advertise(&t.scan, TypeTag::LaserScan)?,
            points: bus.advertise(&t.points, TypeTag::PointCloud)?,
            gps: bus.advertise(&t.gps, TypeTag::GpsFix)?,
            state: bus.advertise(&t.state, TypeTag::VehicleState)?,
            teleop: bus.advertise(&t.teleop, TypeTag::VelocityCommand)?,
            cmd_vel_in: bus.advertise(&t.cmd_vel_in, TypeTag::VelocityCommand)?,
            cmd_vel: bus.advertise(&t.cmd_vel, TypeTag::VelocityCommand)?,
        })
    }
}

struct Rngs {
    gps: ChaCha8Rng,
    lidar: ChaCha8Rng,
    rangefinder: ChaCha8Rng,
}

struct Vehicle {
    spec: VehicleSpawn,
    state: VehicleState,
    actuators: ActuatorState,
    /// Latest command delivered on `cmd_vel`.
    command: VelocityCommand,
    node: ControlNode,
    pubs: Publishers,
    rngs: Rngs,
    rangefinder_mount: SensorMount,
    lidar_mount: SensorMount,
    headway: Option<f64>,
    min_headway: Option<f64>,
}

impl Vehicle {
    fn body(&self) -> Solid {
        self.spec.footprint.solid(&self.state.pose, &self.spec.params)
    }
}

/// A contact between two bodies, reported once when it begins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collision {
    pub tick: u64,
    pub vehicle: String,
    /// Another vehicle's name or an obstacle id.
    pub other: String,
}

/// What a run produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub ticks: u64,
    pub sim_seconds: f64,
    pub wall_seconds: f64,
    pub topic_counts: BTreeMap<String, u64>,
    /// Smallest rangefinder headway seen per vehicle; absent if nothing
    /// was ever in its forward cone.
    pub min_headway: BTreeMap<String, f64>,
    pub collisions: Vec<Collision>,
    /// Vehicles whose controller faulted, with the fault message.
    pub faults: Vec<(String, String)>,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "ticks: {}  sim: {:.3} s  wall: {:.3} s",
            self.ticks, self.sim_seconds, self.wall_seconds
        )?;
        writeln!(f, "messages:")?;
        for (topic, n) in &self.topic_counts {
            writeln!(f, "  {topic:<24} {n}")?;
        }
        if !self.min_headway.is_empty() {
            writeln!(f, "min headway:")?;
            for (v, d) in &self.min_headway {
                writeln!(f, "  {v:<24} {d:.2} m")?;
            }
        }
        for c in &self.collisions {
            writeln!(f, "collision at tick {}: {} with {}", c.tick, c.vehicle, c.other)?;
        }
        for (v, m) in &self.faults {
            writeln!(f, "controller fault: {v}: {m}")?;
        }
        Ok(())
    }
}

/// Run options for [`Engine::run`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Simulated seconds; `None` runs until `stop` is raised.
    pub duration: Option<f64>,
    /// Simulated seconds per wall second; 0 runs unpaced.
    pub real_time_factor: f64,
    pub stop: Option<&'a AtomicBool>,
}

pub struct Engine {
    world: WorldModel,
    seed: u64,
    strict: bool,
    tick: u64,
    bus: Bus,
    vehicles: BTreeMap<String, Vehicle>,
    queued: Vec<SpawnRequest>,
    teleop: TeleopInbox,
    clock: Publisher,
    spawn: Publisher,
    diagnostics: Publisher,
    /// Envelopes closed at the end of the previous tick.
    inbox: Vec<Envelope>,
    contacts: BTreeSet<(String, String)>,
    summary: RunSummary,
    fault: Option<Error>,
}

impl Engine {
    /// Validates `world` and places its vehicles, ready for tick 1.
    pub fn new(world: WorldModel, seed: u64) -> Result<Self> {
        world.validate()?;
        let mut bus = Bus::new();
        let clock = bus.advertise(CLOCK_TOPIC, TypeTag::Clock)?;
        let spawn = bus.advertise(SPAWN_TOPIC, TypeTag::SpawnRequest)?;
        let diagnostics = bus.advertise(DIAGNOSTICS_TOPIC, TypeTag::Diagnostic)?;
        let mut engine = Self {
            seed,
            strict: false,
            tick: 0,
            bus,
            vehicles: BTreeMap::new(),
            queued: Vec::new(),
            teleop: TeleopInbox::new(),
            clock,
            spawn,
            diagnostics,
            inbox: Vec::new(),
            contacts: BTreeSet::new(),
            summary: RunSummary::default(),
            fault: None,
            world: WorldModel {
                vehicles: Vec::new(),
                ..world.clone()
            },
        };
        for spec in world.vehicles {
            engine.insert_vehicle(spec)?;
        }
        Ok(engine)
    }

    pub fn from_scenario(scenario: &Scenario) -> Result<Self> {
        let mut e = Self::new(scenario.world.clone(), scenario.seed)?;
        e.strict = scenario.strict;
        Ok(e)
    }

    pub fn set_strict(&mut self, strict: bool) {
        self.strict = strict;
    }

    pub fn step(&self) -> f64 {
        self.world.step
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of completed ticks.
    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> SimTime {
        SimTime {
            ticks: self.tick,
            step: self.world.step,
        }
    }

    /// Static obstacles (the world without its vehicles).
    pub fn world(&self) -> &WorldModel {
        &self.world
    }

    pub fn vehicle_names(&self) -> impl Iterator<Item = &str> {
        self.vehicles.keys().map(String::as_str)
    }

    pub fn vehicle_state(&self, name: &str) -> Option<&VehicleState> {
        self.vehicles.get(name).map(|v| &v.state)
    }

    pub fn vehicle_spec(&self, name: &str) -> Option<&VehicleSpawn> {
        self.vehicles.get(name).map(|v| &v.spec)
    }

    /// Latest rangefinder headway of `name`.
    pub fn headway(&self, name: &str) -> Option<f64> {
        self.vehicles.get(name).and_then(|v| v.headway)
    }

    /// Handle for UI threads to submit teleop commands.
    pub fn teleop_inbox(&self) -> TeleopInbox {
        self.teleop.clone()
    }

    pub fn bus_mut(&mut self) -> &mut Bus {
        &mut self.bus
    }

    pub fn summary(&self) -> &RunSummary {
        &self.summary
    }

    fn insert_vehicle(&mut self, spec: VehicleSpawn) -> Result<()> {
        spec.validate()?;
        if self.vehicles.contains_key(&spec.name) {
            return Err(Error::DuplicateVehicle(spec.name));
        }
        let topics = VehicleTopics::new(&spec.name);
        let pubs = Publishers::advertise(&mut self.bus, &topics)?;
        let node = ControlNode::new(&spec.name, spec.controller.clone(), spec.params)?;
        if spec.controller.is_teleop() {
            self.teleop.bind(&spec.name, spec.params);
        }
        let rngs = Rngs {
            gps: sensor_rng(self.seed, &spec.name, "gps"),
            lidar: sensor_rng(self.seed, &spec.name, "lidar"),
            rangefinder: sensor_rng(self.seed, &spec.name, "rangefinder"),
        };
        let vehicle = Vehicle {
            state: VehicleState::at_rest(spec.pose, self.time()),
            actuators: ActuatorState::default(),
            command: VelocityCommand::STOP,
            node,
            pubs,
            rngs,
            rangefinder_mount: spec
                .sensors
                .rangefinder
                .mount
                .unwrap_or_else(|| SensorMount::front_bumper(&spec.params, &spec.footprint)),
            lidar_mount: spec.sensors.lidar.mount.unwrap_or_else(|| SensorMount::roof(&spec.params)),
            headway: None,
            min_headway: None,
            spec,
        };
        self.vehicles.insert(vehicle.spec.name.clone(), vehicle);
        Ok(())
    }

    /// Replaces the controller of a live vehicle, keeping its binding
    /// parameters (period, cone, filter).
    pub fn bind_controller(&mut self, name: &str, controller: Box<dyn Controller>) -> Result<()> {
        let v = self
            .vehicles
            .get_mut(name)
            .ok_or_else(|| Error::UnknownVehicle(name.to_string()))?;
        v.node = ControlNode::with_controller(name, v.spec.controller.clone(), v.spec.params, controller)?;
        Ok(())
    }

    /// Queues a spawn or despawn for the start of the next tick.
    pub fn request(&mut self, req: SpawnRequest) -> Result<()> {
        let mut live: BTreeSet<&str> = self.vehicles.keys().map(String::as_str).collect();
        for q in &self.queued {
            match &q.action {
                SpawnAction::Spawn(s) => live.insert(&s.name),
                SpawnAction::Despawn(n) => live.remove(n.as_str()),
            };
        }
        match &req.action {
            SpawnAction::Spawn(spec) => {
                if live.contains(spec.name.as_str()) {
                    return Err(Error::DuplicateVehicle(spec.name.clone()));
                }
                spec.validate()?;
            }
            SpawnAction::Despawn(name) => {
                if !live.contains(name.as_str()) {
                    return Err(Error::UnknownVehicle(name.clone()));
                }
            }
        }
        self.queued.push(req);
        Ok(())
    }

    pub fn spawn(&mut self, spec: VehicleSpawn) -> Result<()> {
        self.request(SpawnRequest::spawn(spec))
    }

    pub fn despawn(&mut self, name: &str) -> Result<()> {
        self.request(SpawnRequest::despawn(name))
    }

    /// Runs one tick and returns the envelopes it closed.
    pub fn tick(&mut self) -> Result<Vec<Envelope>> {
        let k = self.tick + 1;
        let step = self.world.step;
        let now = SimTime { ticks: k, step };

        // Phase 1.
        for req in std::mem::take(&mut self.queued) {
            match &req.action {
                SpawnAction::Spawn(spec) => self.insert_vehicle((**spec).clone())?,
                SpawnAction::Despawn(name) => {
                    self.vehicles.remove(name);
                    self.teleop.unbind(name);
                    self.contacts.retain(|(a, b)| a != name && b != name);
                }
            }
            self.bus.publish(&self.spawn, Message::SpawnRequest(req), k)?;
        }
        for env in std::mem::take(&mut self.inbox) {
            let Some(name) = env.topic.split('/').nth(1) else { continue };
            let Some(v) = self.vehicles.get_mut(name) else { continue };
            if *env.topic == *v.node.topics().cmd_vel {
                if let Message::VelocityCommand(c) = &*env.payload {
                    v.command = *c;
                }
            } else {
                v.node.observe(&env);
            }
        }
        for (name, cmd) in self.teleop.drain() {
            if let Some(v) = self.vehicles.get(&name) {
                self.bus.publish(&v.pubs.teleop, Message::VelocityCommand(cmd), k)?;
            }
        }

        // Phases 2 and 3.
        for (name, v) in self.vehicles.iter_mut() {
            if !v.node.is_due(k, step) {
                continue;
            }
            let out = v.node.step(now);
            if v.spec.controller.obstaclestopper.is_some() {
                if let Some(raw) = out.raw {
                    self.bus.publish(&v.pubs.cmd_vel_in, Message::VelocityCommand(raw), k)?;
                }
            }
            if let Some(cmd) = out.command {
                self.bus.publish(&v.pubs.cmd_vel, Message::VelocityCommand(cmd), k)?;
            }
            if let Some(message) = out.fault {
                let diag = Diagnostic {
                    severity: Severity::Error,
                    source: name.clone(),
                    message: format!("controller fault, holding zero command: {message}"),
                };
                self.bus.publish(&self.diagnostics, Message::Diagnostic(diag), k)?;
                self.summary.faults.push((name.clone(), message.clone()));
                if self.strict && self.fault.is_none() {
                    self.fault = Some(Error::ControllerFault {
                        vehicle: name.clone(),
                        message,
                    });
                }
            }
        }

        // Phase 4.
        for v in self.vehicles.values_mut() {
            v.actuators = step_actuators(v.actuators, v.command, &v.spec.params, step);
            v.state = integrate_pose(&v.state, &v.actuators, &v.spec.params, step);
        }
        self.detect_collisions(k)?;

        // Phase 5.
        let bodies: Vec<(String, Solid)> = self.vehicles.iter().map(|(n, v)| (n.clone(), v.body())).collect();
        for (name, v) in self.vehicles.iter_mut() {
            let others: Vec<Solid> = bodies.iter().filter(|(n, _)| n != name).map(|(_, s)| *s).collect();
            let sensors = v.spec.sensors;
            if sensors.gps.enabled && is_sampling_instant(k, step, sensors.gps.rate) {
                let fix = sample_gps(&v.state, sensors.gps.sigma, &mut v.rngs.gps, now);
                self.bus.publish(&v.pubs.gps, Message::GpsFix(fix), k)?;
            }
            if sensors.lidar.enabled && is_sampling_instant(k, step, sensors.lidar.rate) {
                let noise = Some((sensors.lidar.range_noise, &mut v.rngs.lidar));
                let cloud = sample_lidar(&self.world, &others, &v.state.pose, &v.lidar_mount, now, noise);
                self.bus.publish(&v.pubs.points, Message::PointCloud(cloud), k)?;
            }
            if sensors.rangefinder.enabled && is_sampling_instant(k, step, sensors.rangefinder.rate) {
                let noise = Some((sensors.rangefinder.range_noise, &mut v.rngs.rangefinder));
                let scan = sample_rangefinder(&self.world, &others, &v.state.pose, &v.rangefinder_mount, now, noise);
                v.headway = headway_from_scan(&scan, v.spec.controller.cone_half_angle).get();
                if let Some(d) = v.headway {
                    v.min_headway = Some(v.min_headway.map_or(d, |m: f64| m.min(d)));
                }
                self.bus.publish(&v.pubs.scan, Message::LaserScan(scan), k)?;
            }
        }

        // Phase 6.
        for v in self.vehicles.values() {
            self.bus.publish(&v.pubs.state, Message::VehicleState(v.state), k)?;
        }
        self.bus.publish(&self.clock, Message::Clock(now), k)?;

        // Phase 7.
        let delivered = self.bus.drain_tick(k);
        for env in &delivered {
            *self.summary.topic_counts.entry(env.topic.to_string()).or_default() += 1;
        }
        self.inbox = delivered.clone();
        self.tick = k;
        self.summary.ticks = k;
        self.summary.sim_seconds = now.seconds();
        for (name, v) in &self.vehicles {
            if let Some(d) = v.min_headway {
                self.summary.min_headway.insert(name.clone(), d);
            }
        }
        if let Some(err) = self.fault.take() {
            return Err(err);
        }
        Ok(delivered)
    }

    fn detect_collisions(&mut self, k: u64) -> Result<()> {
        let bodies: Vec<(&String, Solid)> = self.vehicles.iter().map(|(n, v)| (n, v.body())).collect();
        let mut touching = BTreeSet::new();
        for (i, (a, sa)) in bodies.iter().enumerate() {
            for (b, sb) in &bodies[i + 1..] {
                if solids_overlap(sa, sb) {
                    touching.insert(((*a).clone(), (*b).clone()));
                }
            }
            for o in &self.world.obstacles {
                if solids_overlap(sa, &o.shape) {
                    touching.insert(((*a).clone(), o.id.clone()));
                }
            }
        }
        for pair in touching.difference(&self.contacts) {
            self.summary.collisions.push(Collision {
                tick: k,
                vehicle: pair.0.clone(),
                other: pair.1.clone(),
            });
            let diag = Diagnostic {
                severity: Severity::Warn,
                source: pair.0.clone(),
                message: format!("collision with {}", pair.1),
            };
            self.bus.publish(&self.diagnostics, Message::Diagnostic(diag), k)?;
        }
        self.contacts = touching;
        Ok(())
    }

    /// Ticks until the duration elapses or `stop` is raised, pacing against
    /// the wall clock when a real-time factor is set. Every tick's
    /// envelopes go to each tap.
    pub fn run(&mut self, opts: RunOptions<'_>, taps: &mut [&mut dyn BusTap]) -> Result<RunSummary> {
        if !(opts.real_time_factor >= 0.0 && opts.real_time_factor.is_finite()) {
            return Err(Error::InvalidParam {
                name: "real_time_factor",
                reason: format!("must be ≥ 0, got {}", opts.real_time_factor),
            });
        }
        let target = match opts.duration {
            Some(d) if !(d >= 0.0 && d.is_finite()) => {
                return Err(Error::InvalidParam {
                    name: "duration",
                    reason: format!("must be ≥ 0, got {d}"),
                })
            }
            Some(d) => Some(self.tick + (d / self.world.step).round() as u64),
            None => None,
        };
        let start_tick = self.tick;
        let wall = Instant::now();
        let pacer = Pacer::new(opts.real_time_factor);
        loop {
            if target.is_some_and(|t| self.tick >= t) {
                break;
            }
            if opts.stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
                break;
            }
            let result = self.tick();
            let delivered = match result {
                Ok(d) => d,
                Err(e) => {
                    // The faulting tick still reaches the taps.
                    let delivered = std::mem::take(&mut self.inbox);
                    for tap in taps.iter_mut() {
                        tap.on_tick(self.tick, &delivered);
                    }
                    self.inbox = delivered;
                    self.summary.wall_seconds = wall.elapsed().as_secs_f64();
                    return Err(e);
                }
            };
            for tap in taps.iter_mut() {
                tap.on_tick(self.tick, &delivered);
            }
            pacer.wait((self.tick - start_tick) as f64 * self.world.step);
        }
        self.summary.wall_seconds = wall.elapsed().as_secs_f64();
        Ok(self.summary.clone())
    }

    /// Runs `scenario` to completion without pacing or taps.
    pub fn run_scenario(scenario: &Scenario, taps: &mut [&mut dyn BusTap]) -> Result<RunSummary> {
        let mut engine = Self::from_scenario(scenario)?;
        let rtf = scenario.world.real_time_factor;
        engine.run(
            RunOptions {
                duration: scenario.duration,
                real_time_factor: rtf,
                stop: None,
            },
            taps,
        )
    }
}

/// A tap that keeps every delivered envelope; handy in tests.
#[derive(Debug, Default)]
pub struct CollectTap {
    pub envelopes: Vec<Envelope>,
}

impl BusTap for CollectTap {
    fn on_tick(&mut self, _tick: u64, delivered: &[Envelope]) {
        self.envelopes.extend_from_slice(delivered);
    }
}

impl CollectTap {
    pub fn on(&self, topic: &str) -> impl Iterator<Item = &Envelope> {
        let topic: Arc<str> = Arc::from(topic);
        self.envelopes.iter().filter(move |e| e.topic == topic)
    }
}

#[cfg(test)]
mod tests;
