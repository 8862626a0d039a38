//! Deterministic multi-vehicle Ackermann testbed.
//!
//! The crate simulates car-like vehicles on a fixed time step, with raycast
//! sensors, a tick-synchronous message bus, pluggable controllers and a
//! bit-exact record/replay format. The same controller code runs against
//! the live simulation or against a recorded bag.
//!
//! ```
//! use catsim_core::prelude::*;
//!
//! let world = parse_world(r#"{
//!     "step": 0.001,
//!     "vehicles": [{
//!         "name": "car1",
//!         "pose": { "x": 0, "y": 0 },
//!         "controller": { "law": { "kind": "constant_profile", "schedule": [{ "t": 0, "v": 5 }] } }
//!     }]
//! }"#).unwrap();
//! let mut engine = Engine::new(world, 42).unwrap();
//! let summary = engine.run(RunOptions { duration: Some(2.0), ..Default::default() }, &mut []).unwrap();
//! assert_eq!(summary.ticks, 2000);
//! assert_eq!(summary.topic_counts["/car1/scan"], 150);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bag;
pub mod bus;
pub mod controllers;
pub mod engine;
pub mod error;
pub mod msg;
pub mod pacing;
pub mod sensors;
pub mod types;
pub mod vehicle;
pub mod world;

pub use error::{Error, Result};

/// The names most programs need.
pub mod prelude {
    pub use crate::bag::{diff, play, Bag, BagRecorder, BagStatus, DiffReport};
    pub use crate::bus::{Bus, BusTap, Envelope};
    pub use crate::controllers::{ControlLaw, ControlNode, ControllerConfig, FollowerParams, StopperParams};
    pub use crate::engine::{CollectTap, Engine, RunOptions, RunSummary, Scenario};
    pub use crate::error::{Error, Result};
    pub use crate::msg::{Message, SpawnRequest, TypeTag};
    pub use crate::types::{Pose2D, SimTime, VehicleParams, VehicleState, VelocityCommand};
    pub use crate::world::{parse_world, Obstacle, Solid, VehicleSpawn, WorldModel};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/ticks.md")]
    struct Ticks;
    #[doc = include_str!("../../../book/src/vehicle.md")]
    struct Vehicle;
    #[doc = include_str!("../../../book/src/sensors.md")]
    struct Sensors;
    #[doc = include_str!("../../../book/src/bus.md")]
    struct Bus;
    #[doc = include_str!("../../../book/src/controllers.md")]
    struct Controllers;
    #[doc = include_str!("../../../book/src/record-replay.md")]
    struct RecordReplay;
}
