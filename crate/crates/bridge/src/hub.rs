use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use catsim_core::bus::{BusTap, Envelope};
use catsim_core::controllers::headway_from_scan;
use catsim_core::engine::{Engine, SPAWN_TOPIC};
use catsim_core::msg::{Message, SpawnAction};
use catsim_core::sensors::SensorMount;
use catsim_core::world::{Obstacle, VehicleSpawn};

use crate::protocol::{decimate_scan, RosterEntry, ServerMessage, UiFrame, UiVehicle, MAX_UI_BEAMS, PROTOCOL_VERSION};

#[derive(Debug, Default)]
struct HubState {
    step: f64,
    obstacles: Vec<Obstacle>,
    roster: Vec<RosterEntry>,
    roster_version: u64,
    frame: Option<(u64, Arc<str>)>,
    ended: Option<u64>,
}

/// Latest-wins mailbox between the engine thread and socket threads.
///
/// Holds at most one frame. A client that falls behind skips frames rather
/// than queueing them.
#[derive(Debug, Clone, Default)]
pub struct UiHub {
    inner: Arc<(Mutex<HubState>, Condvar)>,
}

/// What changed since a client last looked.
#[derive(Debug, Default)]
pub struct HubUpdate {
    pub roster: Option<(u64, String)>,
    pub frame: Option<(u64, Arc<str>)>,
    pub ended: Option<u64>,
}

impl UiHub {
    pub fn new() -> Self {
        Self::default()
    }

    /// The `hello` message for a new connection, with the full obstacle set.
    pub fn hello(&self) -> String {
        let s = self.inner.0.lock().unwrap();
        to_json(&ServerMessage::Hello {
            protocol: PROTOCOL_VERSION,
            step: s.step,
            obstacles: s.obstacles.clone(),
            vehicles: s.roster.clone(),
        })
    }

    pub fn roster_version(&self) -> u64 {
        self.inner.0.lock().unwrap().roster_version
    }

    pub fn is_ended(&self) -> bool {
        self.inner.0.lock().unwrap().ended.is_some()
    }

    /// Waits up to `timeout` for anything newer than the given versions.
    pub fn wait_update(&self, roster_seen: u64, frame_seen: u64, timeout: Duration) -> HubUpdate {
        let (lock, cv) = &*self.inner;
        let fresh = |s: &HubState| {
            s.roster_version > roster_seen || s.frame.as_ref().is_some_and(|f| f.0 > frame_seen) || s.ended.is_some()
        };
        let guard = lock.lock().unwrap();
        let (s, _) = cv.wait_timeout_while(guard, timeout, |s| !fresh(s)).unwrap();
        HubUpdate {
            roster: (s.roster_version > roster_seen).then(|| {
                (
                    s.roster_version,
                    to_json(&ServerMessage::Roster {
                        vehicles: s.roster.clone(),
                    }),
                )
            }),
            frame: s.frame.clone().filter(|f| f.0 > frame_seen),
            ended: s.ended,
        }
    }

    /// Marks the run as over. Connected clients get an `end` message.
    pub fn end(&self, tick: u64) {
        let (lock, cv) = &*self.inner;
        lock.lock().unwrap().ended = Some(tick);
        cv.notify_all();
    }

    fn update(&self, f: impl FnOnce(&mut HubState)) {
        let (lock, cv) = &*self.inner;
        f(&mut lock.lock().unwrap());
        cv.notify_all();
    }
}

fn to_json(m: &ServerMessage) -> String {
    serde_json::to_string(m).expect("protocol messages serialize")
}

#[derive(Debug)]
struct Track {
    spec: VehicleSpawn,
    mount: SensorMount,
    state: Option<Arc<Message>>,
    scan: Option<Arc<Message>>,
    cmd: Option<Arc<Message>>,
    cmd_raw: Option<Arc<Message>>,
}

impl Track {
    fn new(spec: VehicleSpawn) -> Self {
        let mount = spec
            .sensors
            .rangefinder
            .mount
            .unwrap_or_else(|| SensorMount::front_bumper(&spec.params, &spec.footprint));
        Self {
            spec,
            mount,
            state: None,
            scan: None,
            cmd: None,
            cmd_raw: None,
        }
    }

    fn ui(&self, name: &str) -> Option<UiVehicle> {
        let Some(Message::VehicleState(st)) = self.state.as_deref() else {
            return None;
        };
        let command = |m: &Option<Arc<Message>>| match m.as_deref() {
            Some(Message::VelocityCommand(c)) => Some(*c),
            _ => None,
        };
        let cmd = command(&self.cmd);
        let scan = match self.scan.as_deref() {
            Some(Message::LaserScan(s)) => Some(s),
            _ => None,
        };
        Some(UiVehicle {
            name: name.to_string(),
            x: st.pose.x,
            y: st.pose.y,
            theta: st.pose.theta,
            v: st.v,
            delta: st.delta,
            headway: scan.and_then(|s| headway_from_scan(s, self.spec.controller.cone_half_angle).get()),
            cmd,
            cmd_raw: if self.spec.controller.obstaclestopper.is_some() {
                command(&self.cmd_raw)
            } else {
                cmd
            },
            scan: scan.map(|s| decimate_scan(s, self.mount.world_pose(&st.pose).0, MAX_UI_BEAMS)),
        })
    }

    fn roster_entry(&self) -> RosterEntry {
        RosterEntry {
            name: self.spec.name.clone(),
            v_max: self.spec.params.v_max,
            delta_max: self.spec.params.delta_max,
            teleop: self.spec.controller.is_teleop(),
        }
    }
}

/// Bus tap that feeds a [`UiHub`].
///
/// It only reads the envelopes it is handed, so attaching it changes
/// nothing in the simulation or in a recording made alongside it. Frames
/// are built at most once per `interval` of wall time.
pub struct UiTap {
    hub: UiHub,
    interval: Duration,
    step: f64,
    last_frame: Option<Instant>,
    seq: u64,
    tick: u64,
    tracks: BTreeMap<String, Track>,
}

impl UiTap {
    pub const DEFAULT_INTERVAL: Duration = Duration::from_millis(33);

    /// Snapshots the engine's obstacles and vehicles into `hub`.
    pub fn new(engine: &Engine, hub: UiHub) -> Self {
        Self::with_interval(engine, hub, Self::DEFAULT_INTERVAL)
    }

    pub fn with_interval(engine: &Engine, hub: UiHub, interval: Duration) -> Self {
        let tracks: BTreeMap<_, _> = engine
            .vehicle_names()
            .filter_map(|n| engine.vehicle_spec(n))
            .map(|spec| (spec.name.clone(), Track::new(spec.clone())))
            .collect();
        let step = engine.step();
        let roster = tracks.values().map(Track::roster_entry).collect();
        hub.update(|s| {
            s.step = step;
            s.obstacles = engine.world().obstacles.clone();
            s.roster = roster;
            s.roster_version += 1;
            s.ended = None;
        });
        Self {
            hub,
            interval,
            step,
            last_frame: None,
            seq: 0,
            tick: engine.tick_count(),
            tracks,
        }
    }

    pub fn hub(&self) -> &UiHub {
        &self.hub
    }

    fn absorb(&mut self, env: &Envelope) -> bool {
        if &*env.topic == SPAWN_TOPIC {
            if let Message::SpawnRequest(req) = &*env.payload {
                match &req.action {
                    SpawnAction::Spawn(spec) => {
                        self.tracks.insert(spec.name.clone(), Track::new((**spec).clone()));
                    }
                    SpawnAction::Despawn(name) => {
                        self.tracks.remove(name);
                    }
                }
                return true;
            }
            return false;
        }
        let mut parts = env.topic.splitn(3, '/').skip(1);
        let (Some(vehicle), Some(leaf)) = (parts.next(), parts.next()) else {
            return false;
        };
        let Some(track) = self.tracks.get_mut(vehicle) else {
            return false;
        };
        let slot = match leaf {
            "state" => &mut track.state,
            "scan" => &mut track.scan,
            "cmd_vel" => &mut track.cmd,
            "cmd_vel_in" => &mut track.cmd_raw,
            _ => return false,
        };
        *slot = Some(env.payload.clone());
        false
    }

    fn publish_frame(&mut self) {
        self.seq += 1;
        let frame = UiFrame {
            seq: self.seq,
            tick: self.tick,
            t: self.tick as f64 * self.step,
            vehicles: self.tracks.iter().filter_map(|(n, t)| t.ui(n)).collect(),
        };
        let json: Arc<str> = to_json(&ServerMessage::Frame(frame)).into();
        let seq = self.seq;
        self.hub.update(|s| s.frame = Some((seq, json)));
    }
}

impl BusTap for UiTap {
    fn on_tick(&mut self, tick: u64, delivered: &[Envelope]) {
        self.tick = tick;
        let mut roster_changed = false;
        for env in delivered {
            roster_changed |= self.absorb(env);
        }
        if roster_changed {
            let roster = self.tracks.values().map(Track::roster_entry).collect();
            self.hub.update(|s| {
                s.roster = roster;
                s.roster_version += 1;
            });
        }
        let now = Instant::now();
        if self.last_frame.is_none_or(|last| now - last >= self.interval) {
            self.last_frame = Some(now);
            self.publish_frame();
        }
    }
}

impl Drop for UiTap {
    fn drop(&mut self) {
        self.publish_frame();
        self.hub.end(self.tick);
    }
}
