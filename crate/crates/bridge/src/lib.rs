//! Live view and teleop over WebSocket.
//!
//! A [`UiTap`] rides along with the engine as a bus tap and keeps the latest
//! state of each vehicle. At most every few tens of milliseconds it renders
//! a [`UiFrame`] into a [`UiHub`], which holds a single frame. A
//! [`UiServer`] serves static files at `/` and streams the hub to each
//! client on `/live`, dropping frames a client is too slow to take.
//!
//! ```no_run
//! use catsim_bridge::{ServerConfig, UiHub, UiServer, UiTap};
//! use catsim_core::prelude::*;
//!
//! let world = parse_world(&std::fs::read_to_string("worlds/leader_follower.json")?)?;
//! let mut engine = Engine::new(world, 42)?;
//! let hub = UiHub::new();
//! let server = UiServer::bind("127.0.0.1:8080", hub.clone(), engine.teleop_inbox(), ServerConfig::default())?;
//! let mut tap = UiTap::new(&engine, hub);
//! engine.run(RunOptions { duration: Some(60.0), real_time_factor: 1.0, stop: None }, &mut [&mut tap])?;
//! drop(tap);
//! server.shutdown();
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! The message schema is described in `docs/ui-protocol.md`.

mod hub;
pub mod protocol;
mod server;

pub use hub::{HubUpdate, UiHub, UiTap};
pub use protocol::{ClientMessage, RosterEntry, ServerMessage, TeleopInput, UiFrame, UiScan, UiVehicle};
pub use server::{ServerConfig, UiServer, LIVE_PATH};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/live-view.md")]
struct LiveViewGuide;
