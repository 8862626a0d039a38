use std::time::Instant;

use super::*;
use crate::controllers::{ControlInputs, ControlLaw, ControllerConfig, FollowerParams, ProfileSegment, StopperParams};
use crate::types::{Pose2D, VehicleParams};
use crate::world::Obstacle;

fn cruiser(name: &str, x: f64, v: f64) -> VehicleSpawn {
    let mut s = VehicleSpawn::new(name, Pose2D { x, y: 0.0, theta: 0.0 });
    s.controller = ControllerConfig::with_law(ControlLaw::ConstantProfile {
        schedule: vec![ProfileSegment { t: 0.0, v, delta: 0.0 }],
    });
    s
}

fn follower(name: &str, x: f64) -> VehicleSpawn {
    let mut s = VehicleSpawn::new(name, Pose2D { x, y: 0.0, theta: 0.0 });
    s.controller = ControllerConfig::with_law(ControlLaw::Follower(FollowerParams::default()));
    s
}

fn world(vehicles: Vec<VehicleSpawn>) -> WorldModel {
    let mut w = WorldModel::empty(0.001);
    w.vehicles = vehicles;
    w
}

fn run_for(engine: &mut Engine, seconds: f64) -> CollectTap {
    let mut tap = CollectTap::default();
    engine
        .run(
            RunOptions {
                duration: Some(seconds),
                ..Default::default()
            },
            &mut [&mut tap],
        )
        .unwrap();
    tap
}

#[test]
fn empty_world_only_ticks_the_clock() {
    let mut e = Engine::new(WorldModel::empty(0.001), 1).unwrap();
    let tap = run_for(&mut e, 0.1);
    assert_eq!(e.tick_count(), 100);
    assert_eq!(tap.envelopes.len(), 100);
    assert!(tap.envelopes.iter().all(|env| &*env.topic == CLOCK_TOPIC));
    let last = tap.envelopes.last().unwrap();
    assert_eq!(*last.payload, Message::Clock(SimTime { ticks: 100, step: 0.001 }));
}

#[test]
fn one_second_of_topics() {
    let mut e = Engine::new(world(vec![cruiser("car1", 0.0, 2.0)]), 1).unwrap();
    let s = run_for(&mut e, 1.0);
    let count = |t: &str| s.on(t).count();
    assert_eq!(count("/car1/scan"), 75);
    assert_eq!(count("/car1/points"), 5);
    assert_eq!(count("/car1/gps"), 10);
    assert_eq!(count("/car1/state"), 1000);
    assert_eq!(count("/car1/cmd_vel"), 50);
    assert_eq!(count("/car1/cmd_vel_in"), 0);
    assert_eq!(count("/clock"), 1000);
}

#[test]
fn constant_speed_displacement() {
    let mut e = Engine::new(world(vec![cruiser("car1", 0.0, 5.0)]), 1).unwrap();
    run_for(&mut e, 10.0);
    let x = e.vehicle_state("car1").unwrap().pose.x;
    // Oracle: the speed loop alone, fed from tick 21 on (first control
    // instant at tick 20, one tick of bus latency), summed along a line.
    let params = VehicleParams::default();
    let cmd = VelocityCommand { v_set: 5.0, delta_set: 0.0 };
    let mut act = ActuatorState::default();
    let mut expected = 0.0;
    for k in 1..=10_000 {
        let c = if k > 20 { cmd } else { VelocityCommand::STOP };
        act = step_actuators(act, c, &params, 0.001);
        expected += act.v_applied * 0.001;
    }
    assert!((x - expected).abs() < 1e-9, "{x} vs {expected}");
    // The rise costs a few metres against an instant start.
    assert!(x < 50.0 && x > 44.0, "{x}");
}

#[test]
fn commands_take_one_tick_to_reach_the_plant() {
    let mut e = Engine::new(world(vec![cruiser("car1", 0.0, 5.0)]), 1).unwrap();
    for _ in 0..20 {
        e.tick().unwrap();
    }
    // The first command is published at tick 20 and applied from tick 21.
    assert_eq!(e.vehicle_state("car1").unwrap().v, 0.0);
    e.tick().unwrap();
    assert!(e.vehicle_state("car1").unwrap().v > 0.0);
}

type Seen = std::sync::Arc<std::sync::Mutex<Vec<(u64, Option<u64>)>>>;

struct Probe {
    seen: Seen,
}

impl Controller for Probe {
    fn command(&mut self, inputs: &ControlInputs<'_>) -> Result<Option<VelocityCommand>, String> {
        self.seen
            .lock()
            .unwrap()
            .push((inputs.now.ticks, inputs.scan.map(|s| s.t.ticks)));
        Ok(None)
    }
}

#[test]
fn controllers_never_see_same_tick_sensor_data() {
    let mut spec = VehicleSpawn::new("p", Pose2D::default());
    // Control at every tick so each sensor sample is observable.
    spec.controller.period = 0.001;
    let mut e = Engine::new(world(vec![spec]), 1).unwrap();
    let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
    e.bind_controller("p", Box::new(Probe { seen: seen.clone() })).unwrap();
    for _ in 0..100 {
        e.tick().unwrap();
    }
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 100);
    for &(now, scan) in seen.iter() {
        if let Some(t) = scan {
            assert!(t < now, "scan from tick {t} seen at tick {now}");
        }
    }
    // The first scan (tick 14) is visible from tick 15.
    assert_eq!(seen[13].1, None);
    assert_eq!(seen[14].1, Some(14));
}

#[test]
fn spawn_and_despawn_take_effect_next_tick() {
    let mut e = Engine::new(WorldModel::empty(0.001), 1).unwrap();
    e.tick().unwrap();
    e.spawn(cruiser("a", 0.0, 1.0)).unwrap();
    assert!(e.vehicle_state("a").is_none());
    assert!(matches!(e.spawn(cruiser("a", 5.0, 1.0)), Err(Error::DuplicateVehicle(_))));
    let delivered = e.tick().unwrap();
    assert!(e.vehicle_state("a").is_some());
    assert!(delivered.iter().any(|env| &*env.topic == SPAWN_TOPIC));
    assert!(delivered.iter().any(|env| &*env.topic == "/a/state"));
    assert!(matches!(e.spawn(cruiser("a", 5.0, 1.0)), Err(Error::DuplicateVehicle(_))));
    assert!(matches!(e.despawn("ghost"), Err(Error::UnknownVehicle(_))));
    e.despawn("a").unwrap();
    e.tick().unwrap();
    assert!(e.vehicle_state("a").is_none());
    assert_eq!(e.vehicle_names().count(), 0);
}

#[test]
fn follower_spawned_mid_run_acquires_headway() {
    let mut e = Engine::new(WorldModel::empty(0.001), 1).unwrap();
    for _ in 0..500 {
        e.tick().unwrap();
    }
    e.spawn(cruiser("lead", 30.0, 3.0)).unwrap();
    e.spawn(follower("tail", 0.0)).unwrap();
    let spawned_at = e.tick_count() + 1;
    let mut acquired = None;
    for _ in 0..100 {
        e.tick().unwrap();
        if e.headway("tail").is_some() {
            acquired = Some(e.tick_count());
            break;
        }
    }
    let k = acquired.expect("no headway");
    // One rangefinder period at 75 Hz is at most 14 ticks.
    assert!(k - spawned_at < 14, "acquired after {} ticks", k - spawned_at);
    let d = e.headway("tail").unwrap();
    let expected = 30.0 - VehicleSpawn::new("x", Pose2D::default()).footprint.front_offset(&Default::default()) - 0.9;
    assert!((d - expected).abs() < 0.02, "{d} vs {expected}");
}

#[test]
fn same_seed_same_traffic_and_seed_moves_gps() {
    let w = world(vec![cruiser("lead", 20.0, 3.0), follower("tail", 0.0)]);
    let a = run_for(&mut Engine::new(w.clone(), 42).unwrap(), 2.0);
    let b = run_for(&mut Engine::new(w.clone(), 42).unwrap(), 2.0);
    assert_eq!(a.envelopes, b.envelopes);
    let c = run_for(&mut Engine::new(w, 43).unwrap(), 2.0);
    let gps = |t: &CollectTap| t.on("/tail/gps").map(|e| e.payload.encode()).collect::<Vec<_>>();
    assert_ne!(gps(&a), gps(&c));
    let states = |t: &CollectTap| t.on("/tail/state").map(|e| e.payload.encode()).collect::<Vec<_>>();
    assert_eq!(states(&a), states(&c));
}

#[test]
fn spawn_order_does_not_change_trajectories() {
    let forward = world(vec![cruiser("a", 0.0, 3.0), cruiser("b", 0.0, 4.0)]);
    let mut reversed = forward.clone();
    reversed.vehicles.reverse();
    reversed.vehicles[0].pose.y = 10.0;
    let mut forward = forward;
    forward.vehicles[1].pose.y = 10.0;
    let x = run_for(&mut Engine::new(forward, 9).unwrap(), 1.0);
    let y = run_for(&mut Engine::new(reversed, 9).unwrap(), 1.0);
    assert_eq!(x.envelopes, y.envelopes);
}

struct Failing;

impl Controller for Failing {
    fn command(&mut self, _: &ControlInputs<'_>) -> Result<Option<VelocityCommand>, String> {
        Err("boom".into())
    }
}

#[test]
fn controller_fault_is_isolated() {
    let mut good = cruiser("good", 0.0, 3.0);
    good.pose.y = 10.0;
    let mut e = Engine::new(world(vec![cruiser("bad", 0.0, 3.0), good]), 1).unwrap();
    e.bind_controller("bad", Box::new(Failing)).unwrap();
    let tap = run_for(&mut e, 2.0);
    let diags: Vec<_> = tap.on(DIAGNOSTICS_TOPIC).collect();
    assert_eq!(diags.len(), 1);
    match &*diags[0].payload {
        Message::Diagnostic(d) => {
            assert_eq!(d.source, "bad");
            assert!(d.message.contains("boom"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(e.vehicle_state("bad").unwrap().v, 0.0);
    assert!(e.vehicle_state("good").unwrap().v > 1.0);
    assert_eq!(e.summary().faults.len(), 1);
}

#[test]
fn strict_mode_aborts_on_fault() {
    let mut e = Engine::new(world(vec![cruiser("bad", 0.0, 3.0)]), 1).unwrap();
    e.set_strict(true);
    e.bind_controller("bad", Box::new(Failing)).unwrap();
    let mut tap = CollectTap::default();
    let err = e
        .run(
            RunOptions {
                duration: Some(1.0),
                ..Default::default()
            },
            &mut [&mut tap],
        )
        .unwrap_err();
    assert!(matches!(err, Error::ControllerFault { .. }));
    assert_eq!(e.tick_count(), 20);
    // The faulting tick still reached the tap.
    assert_eq!(tap.on(DIAGNOSTICS_TOPIC).count(), 1);
}

#[test]
fn driving_into_a_wall_is_a_collision() {
    let mut w = world(vec![cruiser("car", 0.0, 5.0)]);
    w.obstacles.push(Obstacle {
        id: "wall".into(),
        shape: Solid::Box {
            cx: 20.0,
            cy: 0.0,
            yaw: 0.0,
            sx: 1.0,
            sy: 10.0,
            height: 2.0,
        },
    });
    let mut e = Engine::new(w, 1).unwrap();
    let tap = run_for(&mut e, 8.0);
    assert_eq!(e.summary().collisions.len(), 1);
    assert_eq!(e.summary().collisions[0].other, "wall");
    assert!(tap.on(DIAGNOSTICS_TOPIC).count() >= 1);
}

#[test]
fn stopper_publishes_raw_and_filtered() {
    let mut spec = cruiser("car", 0.0, 10.0);
    spec.controller.obstaclestopper = Some(StopperParams::default());
    let mut w = world(vec![spec]);
    w.obstacles.push(Obstacle {
        id: "wall".into(),
        shape: Solid::Box {
            cx: 40.0 + 3.52 + 0.5,
            cy: 0.0,
            yaw: 0.0,
            sx: 1.0,
            sy: 10.0,
            height: 2.0,
        },
    });
    let mut e = Engine::new(w, 1).unwrap();
    let tap = run_for(&mut e, 30.0);
    let raw: Vec<_> = tap.on("/car/cmd_vel_in").collect();
    let out: Vec<_> = tap.on("/car/cmd_vel").collect();
    assert_eq!(raw.len(), out.len());
    for (r, o) in raw.iter().zip(&out) {
        assert_eq!(r.t, o.t);
        match (&*r.payload, &*o.payload) {
            (Message::VelocityCommand(r), Message::VelocityCommand(o)) => assert!(o.v_set <= r.v_set),
            other => panic!("{other:?}"),
        }
    }
    assert!(e.summary().collisions.is_empty());
    let st = e.vehicle_state("car").unwrap();
    // Near d_safe the envelope shrinks with the margin, so the last
    // centimetre is a crawl.
    assert!(st.v < 0.01, "v = {} x = {} headway = {:?}", st.v, st.pose.x, e.headway("car"));
    assert!(e.headway("car").unwrap() >= 3.0 - 0.01);
}

#[test]
fn teleop_input_drives_the_vehicle() {
    let mut spec = VehicleSpawn::new("lead", Pose2D::default());
    spec.controller = ControllerConfig::with_law(ControlLaw::Teleop);
    let mut e = Engine::new(world(vec![spec, follower("tail", -30.0)]), 1).unwrap();
    let inbox = e.teleop_inbox();
    assert!(inbox.submit("tail", VelocityCommand { v_set: 3.0, delta_set: 0.0 }).is_err());
    inbox.submit("lead", VelocityCommand { v_set: 3.0, delta_set: 0.0 }).unwrap();
    let tap = run_for(&mut e, 1.0);
    assert_eq!(tap.on("/lead/teleop").count(), 1);
    let v = e.vehicle_state("lead").unwrap().v;
    assert!(v > 0.5 && v <= 3.0 * 0.98, "{v}");
}

#[test]
fn real_time_pacing() {
    let mut e = Engine::new(world(vec![cruiser("car", 0.0, 3.0)]), 1).unwrap();
    let start = Instant::now();
    e.run(
        RunOptions {
            duration: Some(1.0),
            real_time_factor: 1.0,
            stop: None,
        },
        &mut [],
    )
    .unwrap();
    let wall = start.elapsed().as_secs_f64();
    assert!((wall - 1.0).abs() < 0.1, "{wall}");
}

#[test]
fn stop_flag_ends_unbounded_run() {
    let stop = AtomicBool::new(true);
    let mut e = Engine::new(WorldModel::empty(0.001), 1).unwrap();
    let s = e
        .run(
            RunOptions {
                duration: None,
                real_time_factor: 0.0,
                stop: Some(&stop),
            },
            &mut [],
        )
        .unwrap();
    assert_eq!(s.ticks, 0);
}

#[test]
fn replaying_recorded_inputs_reproduces_commands() {
    let w = world(vec![cruiser("lead", 25.0, 3.0), follower("tail", 0.0)]);
    let mut e = Engine::new(w.clone(), 7).unwrap();
    let mut rec = crate::bag::BagRecorder::spawn(7, 0.001, &["/tail/scan", "/tail/state", "/tail/cmd_vel"]).unwrap();
    e.run(
        RunOptions {
            duration: Some(5.0),
            ..Default::default()
        },
        &mut [&mut rec],
    )
    .unwrap();
    let bag = rec.finish(crate::bag::BagStatus::Complete).unwrap();
    let spec = &w.vehicles[1];
    let mut node = ControlNode::new("tail", spec.controller.clone(), spec.params).unwrap();
    let replayed = replay_node(&bag, &mut node, 5000).unwrap();
    let recorded: Vec<(u64, VelocityCommand)> = bag
        .envelopes()
        .unwrap()
        .into_iter()
        .filter(|e| &*e.topic == "/tail/cmd_vel")
        .map(|e| match &*e.payload {
            Message::VelocityCommand(c) => (e.t, *c),
            other => panic!("{other:?}"),
        })
        .collect();
    assert_eq!(recorded.len(), 250);
    assert_eq!(replayed.len(), recorded.len());
    for (a, b) in replayed.iter().zip(&recorded) {
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.v_set.to_bits(), b.1.v_set.to_bits());
        assert_eq!(a.1.delta_set.to_bits(), b.1.delta_set.to_bits());
    }
}
