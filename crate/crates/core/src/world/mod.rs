//! Static world description, world-file parsing, and ray casting.
//!
//! World files are JSON documents:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "step": 0.001,
//!   "real_time_factor": 0,
//!   "obstacles": [
//!     { "id": "cone", "shape": { "type": "cylinder", "cx": 20, "cy": 0, "radius": 0.2, "height": 0.7 } }
//!   ],
//!   "vehicles": [
//!     { "name": "car1", "pose": { "x": 0, "y": 0, "theta": 0 } }
//!   ]
//! }
//! ```
//!
//! Unknown keys are rejected. Omitted vehicle fields take their defaults, and
//! [`WorldModel::to_canonical_json`] writes every field out explicitly.

mod geometry;

pub use geometry::{solids_overlap, Ray, Solid};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::controllers::ControllerConfig;
use crate::error::{Error, Result};
use crate::sensors::SensorSuite;
use crate::types::{Pose2D, VehicleParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub id: String,
    pub shape: Solid,
}

/// Collision outline of a vehicle, relative to its rear axle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Footprint {
    /// Body length ahead of the front axle.
    pub front_overhang: f64,
    /// Body length behind the rear axle.
    pub rear_overhang: f64,
    /// Added to the track width to get the body width.
    pub width_margin: f64,
    pub height: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Self {
            front_overhang: 0.9,
            rear_overhang: 0.9,
            width_margin: 0.3,
            height: 1.5,
        }
    }
}

impl Footprint {
    /// Distance from the rear axle to the front bumper.
    pub fn front_offset(&self, params: &VehicleParams) -> f64 {
        params.l + self.front_overhang
    }

    /// The oriented box occupied by a vehicle at `pose`.
    pub fn solid(&self, pose: &Pose2D, params: &VehicleParams) -> Solid {
        let length = params.l + self.front_overhang + self.rear_overhang;
        let center_offset = (params.l + self.front_overhang - self.rear_overhang) / 2.0;
        let (cx, cy) = pose.transform_point(center_offset, 0.0);
        Solid::Box {
            cx,
            cy,
            yaw: pose.theta,
            sx: length,
            sy: params.w + self.width_margin,
            height: self.height,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.front_overhang < 0.0 || self.rear_overhang < 0.0 || self.width_margin < 0.0 || !(self.height > 0.0) {
            return Err(Error::WorldSemantic(format!("invalid footprint {self:?}")));
        }
        Ok(())
    }
}

/// One vehicle to create, either at start-up or through a spawn request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpawn {
    pub name: String,
    pub pose: Pose2D,
    #[serde(default)]
    pub params: VehicleParams,
    #[serde(default)]
    pub footprint: Footprint,
    #[serde(default)]
    pub sensors: SensorSuite,
    #[serde(default)]
    pub controller: ControllerConfig,
}

impl VehicleSpawn {
    pub fn new(name: impl Into<String>, pose: Pose2D) -> Self {
        Self {
            name: name.into(),
            pose,
            params: VehicleParams::default(),
            footprint: Footprint::default(),
            sensors: SensorSuite::default(),
            controller: ControllerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_name(&self.name)?;
        Pose2D::new(self.pose.x, self.pose.y, self.pose.theta)
            .map_err(|e| Error::WorldSemantic(format!("vehicle `{}`: {e}", self.name)))?;
        self.params
            .validate()
            .map_err(|e| Error::WorldSemantic(format!("vehicle `{}`: {e}", self.name)))?;
        self.footprint.validate()?;
        self.sensors
            .validate()
            .map_err(|e| Error::WorldSemantic(format!("vehicle `{}`: {e}", self.name)))?;
        self.controller
            .validate(&self.params)
            .map_err(|e| Error::WorldSemantic(format!("vehicle `{}`: {e}", self.name)))?;
        Ok(())
    }
}

/// Vehicle names double as topic namespace segments.
pub fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(Error::WorldSemantic(format!(
            "vehicle name `{name}` must be nonempty and use only [A-Za-z0-9_]"
        )));
    }
    Ok(())
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldModel {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub step: f64,
    /// Simulated seconds per wall second; 0 runs unpaced.
    #[serde(default)]
    pub real_time_factor: f64,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpawn>,
}

impl WorldModel {
    pub fn empty(step: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            step,
            real_time_factor: 0.0,
            obstacles: Vec::new(),
            vehicles: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::WorldSemantic(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::WorldSemantic(format!("step must be positive, got {}", self.step)));
        }
        if !(self.real_time_factor >= 0.0 && self.real_time_factor.is_finite()) {
            return Err(Error::WorldSemantic(format!(
                "real_time_factor must be ≥ 0, got {}",
                self.real_time_factor
            )));
        }
        let mut ids = BTreeSet::new();
        for o in &self.obstacles {
            if !ids.insert(o.id.as_str()) {
                return Err(Error::WorldSemantic(format!("duplicate obstacle id `{}`", o.id)));
            }
            o.shape
                .validate()
                .map_err(|e| Error::WorldSemantic(format!("obstacle `{}`: {e}", o.id)))?;
        }
        let mut names = BTreeSet::new();
        for v in &self.vehicles {
            if !names.insert(v.name.as_str()) {
                return Err(Error::WorldSemantic(format!("duplicate vehicle name `{}`", v.name)));
            }
            v.validate()?;
        }
        Ok(())
    }

    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("world model serializes");
        s.push('\n');
        s
    }

    /// Nearest return along `ray` among the static obstacles and `bodies`.
    pub fn raycast(&self, bodies: &[Solid], ray: &Ray, max_range: f64) -> Option<f64> {
        raycast(self, bodies, ray, max_range)
    }
}

/// Parses and validates a world document.
pub fn parse_world(text: &str) -> Result<WorldModel> {
    let world: WorldModel = serde_json::from_str(text).map_err(|e| Error::WorldSyntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    world.validate()?;
    Ok(world)
}

/// Smallest positive hit distance within `max_range`, or `None`.
///
/// `bodies` holds the footprints of every vehicle except the sensing one.
pub fn raycast(world: &WorldModel, bodies: &[Solid], ray: &Ray, max_range: f64) -> Option<f64> {
    world
        .obstacles
        .iter()
        .map(|o| &o.shape)
        .chain(bodies)
        .filter_map(|s| s.intersect(ray))
        .filter(|&t| t <= max_range)
        .min_by(f64::total_cmp)
}
