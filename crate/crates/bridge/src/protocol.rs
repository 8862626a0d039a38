//! JSON messages exchanged on `/live`. Every message is a text frame holding
//! one object with a `"type"` field.

use serde::{Deserialize, Serialize};

use catsim_core::sensors::LaserScan;
use catsim_core::types::{Pose2D, VelocityCommand};
use catsim_core::world::Obstacle;

pub const PROTOCOL_VERSION: u32 = 1;
/// Upper bound on beams per scan in a frame.
pub const MAX_UI_BEAMS: usize = 60;

/// Static limits of one vehicle, as the client needs them for teleop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub name: String,
    pub v_max: f64,
    pub delta_max: f64,
    /// Accepts `teleop` input.
    pub teleop: bool,
}

/// A rangefinder scan reduced for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiScan {
    /// World pose of the sensor when the scan was taken.
    pub origin: Pose2D,
    /// Bearing of the first beam relative to `origin.theta`.
    pub bearing_min: f64,
    pub bearing_increment: f64,
    /// `null` is a beam with no return.
    pub ranges: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiVehicle {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub delta: f64,
    pub headway: Option<f64>,
    /// Command reaching the plant.
    pub cmd: Option<VelocityCommand>,
    /// Controller output before the obstaclestopper. Equal to `cmd` when no
    /// stopper is configured.
    pub cmd_raw: Option<VelocityCommand>,
    pub scan: Option<UiScan>,
}

/// Latest state of every vehicle at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiFrame {
    /// Increases by at least one per frame sent; gaps mean frames were
    /// dropped.
    pub seq: u64,
    pub tick: u64,
    /// Simulated seconds.
    pub t: f64,
    pub vehicles: Vec<UiVehicle>,
}

/// Client request to drive a teleop-bound vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleopInput {
    pub vehicle: String,
    pub v_set: f64,
    pub delta_set: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// First message on every connection.
    Hello {
        protocol: u32,
        step: f64,
        obstacles: Vec<Obstacle>,
        vehicles: Vec<RosterEntry>,
    },
    /// Sent when vehicles spawn or despawn.
    Roster { vehicles: Vec<RosterEntry> },
    Frame(UiFrame),
    /// The command was queued, after clamping to the vehicle's limits.
    Ack {
        vehicle: String,
        v_set: f64,
        delta_set: f64,
    },
    Rejected { vehicle: String, reason: String },
    /// The message could not be parsed.
    Error { reason: String },
    /// The run is over; the server closes the socket next.
    End { tick: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Teleop(TeleopInput),
}

/// Keeps every `k`-th beam, with the smallest `k` that leaves at most
/// `max_beams`.
pub fn decimate_scan(scan: &LaserScan, origin: Pose2D, max_beams: usize) -> UiScan {
    let n = scan.ranges.len();
    let stride = n.div_ceil(max_beams.max(1)).max(1);
    UiScan {
        origin,
        bearing_min: scan.bearing(0),
        bearing_increment: scan.angle_increment * stride as f64,
        ranges: scan.ranges.iter().step_by(stride).copied().collect(),
    }
}
