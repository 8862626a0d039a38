use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use catsim_bridge::{ServerConfig, ServerMessage, UiHub, UiServer, UiTap};
use catsim_core::bag::{BagRecorder, BagStatus};
use catsim_core::controllers::{ControlLaw, ControllerConfig, FollowerParams};
use catsim_core::engine::{Engine, RunOptions};
use catsim_core::types::Pose2D;
use catsim_core::world::{parse_world, Obstacle, Solid, VehicleSpawn, WorldModel};
use tungstenite::{Message, WebSocket};

type Client = WebSocket<TcpStream>;

fn world() -> WorldModel {
    let mut w = WorldModel::empty(0.001);
    w.obstacles.push(Obstacle {
        id: "cone".into(),
        shape: Solid::Cylinder {
            cx: 60.0,
            cy: 0.0,
            radius: 0.2,
            height: 0.7,
        },
    });
    let mut lead = VehicleSpawn::new("lead", Pose2D { x: 25.0, y: 0.0, theta: 0.0 });
    lead.controller = ControllerConfig::with_law(ControlLaw::Teleop);
    let mut tail = VehicleSpawn::new("tail", Pose2D::default());
    tail.controller = ControllerConfig::with_law(ControlLaw::Follower(FollowerParams::default()));
    w.vehicles = vec![lead, tail];
    w
}

fn paced(seconds: f64) -> RunOptions<'static> {
    RunOptions {
        duration: Some(seconds),
        real_time_factor: 1.0,
        stop: None,
    }
}

fn connect(addr: SocketAddr) -> Client {
    let stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let (ws, _) = tungstenite::client(format!("ws://{addr}/live"), stream).unwrap();
    ws
}

fn next(ws: &mut Client) -> Option<ServerMessage> {
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => return Some(serde_json::from_str(t.as_str()).unwrap()),
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => {}
        }
    }
}

fn send(ws: &mut Client, text: &str) {
    ws.send(Message::text(text.to_string())).unwrap();
}

fn http_get(addr: SocketAddr, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\n\r\n").unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

fn serve(engine: &Engine) -> (UiHub, UiServer) {
    let hub = UiHub::new();
    let server = UiServer::bind("127.0.0.1:0", hub.clone(), engine.teleop_inbox(), ServerConfig::default()).unwrap();
    (hub, server)
}

#[test]
fn static_root_and_errors() {
    let engine = Engine::new(world(), 1).unwrap();
    let (_hub, server) = serve(&engine);
    let addr = server.local_addr();
    let root = http_get(addr, "/");
    assert!(root.starts_with("HTTP/1.1 200"), "{root}");
    assert!(root.contains("text/html"));
    assert!(root.contains("/live"));
    assert!(http_get(addr, "/missing.js").starts_with("HTTP/1.1 404"));
    assert!(http_get(addr, "/live").starts_with("HTTP/1.1 426"));
    server.shutdown();
}

#[test]
fn stream_sustains_ten_frames_per_second() {
    let mut engine = Engine::new(world(), 1).unwrap();
    let (hub, server) = serve(&engine);
    let mut tap = UiTap::new(&engine, hub);
    let mut ws = connect(server.local_addr());
    let reader = thread::spawn(move || {
        let mut frames = Vec::new();
        let mut hello = None;
        while let Some(m) = next(&mut ws) {
            match m {
                ServerMessage::Hello { obstacles, vehicles, .. } => hello = Some((obstacles, vehicles)),
                ServerMessage::Frame(f) => frames.push(f),
                ServerMessage::End { .. } => break,
                _ => {}
            }
        }
        (hello, frames)
    });
    engine.run(paced(2.0), &mut [&mut tap]).unwrap();
    drop(tap);
    let (hello, frames) = reader.join().unwrap();
    let (obstacles, roster) = hello.expect("no hello");
    assert_eq!(obstacles.len(), 1);
    assert_eq!(roster.len(), 2);
    assert!(roster.iter().any(|r| r.name == "lead" && r.teleop));
    assert!(frames.len() >= 20, "{} frames", frames.len());
    assert!(frames.windows(2).all(|w| w[0].seq < w[1].seq && w[0].t <= w[1].t));
    let last = frames.last().unwrap();
    assert_eq!(last.tick, 2000);
    for f in &frames {
        for v in &f.vehicles {
            if let Some(s) = &v.scan {
                assert!(s.ranges.len() <= 60);
            }
        }
    }
    let tail = last.vehicles.iter().find(|v| v.name == "tail").unwrap();
    assert!(tail.headway.is_some());
    assert_eq!(tail.cmd, tail.cmd_raw);
    server.shutdown();
}

#[test]
fn teleop_drives_and_rejects() {
    let mut engine = Engine::new(world(), 1).unwrap();
    let (hub, server) = serve(&engine);
    let mut tap = UiTap::new(&engine, hub);
    let mut ws = connect(server.local_addr());
    let driver = thread::spawn(move || {
        let mut replies = Vec::new();
        send(&mut ws, r#"{"type":"teleop","vehicle":"tail","v_set":3,"delta_set":0}"#);
        send(&mut ws, r#"{"type":"teleop","vehicle":"lead","v_set":3,"delta_set":0}"#);
        send(&mut ws, r#"{"type":"steer"}"#);
        let start = Instant::now();
        let mut peak = 0.0f64;
        let mut released = false;
        while let Some(m) = next(&mut ws) {
            match m {
                ServerMessage::Frame(f) => {
                    let lead = f.vehicles.iter().find(|v| v.name == "lead").unwrap();
                    peak = peak.max(lead.v);
                    if !released && start.elapsed() > Duration::from_millis(1500) {
                        released = true;
                        send(&mut ws, r#"{"type":"teleop","vehicle":"lead","v_set":0,"delta_set":0}"#);
                    }
                }
                ServerMessage::End { .. } => break,
                ServerMessage::Hello { .. } | ServerMessage::Roster { .. } => {}
                m => replies.push(m),
            }
        }
        (replies, peak)
    });
    engine.run(paced(4.0), &mut [&mut tap]).unwrap();
    drop(tap);
    let (replies, peak) = driver.join().unwrap();
    assert!(matches!(&replies[0], ServerMessage::Rejected { vehicle, .. } if vehicle == "tail"), "{replies:?}");
    assert!(matches!(&replies[1], ServerMessage::Ack { vehicle, v_set, .. } if vehicle == "lead" && *v_set == 3.0));
    assert!(matches!(&replies[2], ServerMessage::Error { .. }));
    assert!(matches!(&replies[3], ServerMessage::Ack { v_set, .. } if *v_set == 0.0));
    // Accelerated under the a_max clamp, then stopped after release.
    assert!(peak > 1.5 && peak < 3.3, "peak {peak}");
    assert!(engine.vehicle_state("lead").unwrap().v < 0.05);
    assert_eq!(engine.summary().topic_counts.get("/lead/teleop"), Some(&2));
    server.shutdown();
}

#[test]
fn reconnect_resends_obstacles() {
    let engine = Engine::new(world(), 1).unwrap();
    let (hub, server) = serve(&engine);
    let _tap = UiTap::new(&engine, hub);
    for _ in 0..2 {
        let mut ws = connect(server.local_addr());
        match next(&mut ws) {
            Some(ServerMessage::Hello { obstacles, .. }) => assert_eq!(obstacles.len(), 1),
            other => panic!("{other:?}"),
        }
        ws.close(None).unwrap();
    }
    server.shutdown();
}

#[test]
fn attaching_the_ui_leaves_the_bag_unchanged() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../worlds/leader_follower.json")).unwrap();
    let world = parse_world(&text).unwrap();
    let record = |with_ui: bool| {
        let mut engine = Engine::new(world.clone(), 42).unwrap();
        let mut rec = BagRecorder::spawn(42, world.step, &[]).unwrap();
        let opts = RunOptions {
            duration: Some(3.0),
            ..Default::default()
        };
        if with_ui {
            let (hub, server) = serve(&engine);
            let mut tap = UiTap::with_interval(&engine, hub, Duration::ZERO);
            let mut ws = connect(server.local_addr());
            let reader = thread::spawn(move || while !matches!(next(&mut ws), Some(ServerMessage::End { .. }) | None) {});
            engine.run(opts, &mut [&mut tap, &mut rec]).unwrap();
            drop(tap);
            reader.join().unwrap();
            server.shutdown();
        } else {
            engine.run(opts, &mut [&mut rec]).unwrap();
        }
        rec.finish(BagStatus::Complete).unwrap().to_bytes()
    };
    assert_eq!(record(false), record(true));
}
