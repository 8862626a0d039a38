use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};

use catsim_bridge::{ServerConfig, UiHub, UiServer, UiTap};
use catsim_core::bag::{diff, play, Bag, BagRecorder, BagStatus};
use catsim_core::bus::{Bus, BusTap};
use catsim_core::engine::{Engine, RunOptions};
use catsim_core::msg::Message;
use catsim_core::world::{parse_world, WorldModel};
use catsim_core::Error;

const USAGE: u8 = 1;
const PARSE: u8 = 2;
const RUNTIME: u8 = 3;
const DIFFERENT: u8 = 4;

/// Multi-vehicle Ackermann testbed simulator.
#[derive(Debug, Parser)]
#[command(name = "catsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a world file.
    Run {
        world: PathBuf,
        /// Simulated seconds. Without it the run lasts until Ctrl-C.
        #[arg(long)]
        duration: Option<f64>,
        /// Real-time factor; 0 runs as fast as possible. Defaults to the
        /// world file's value.
        #[arg(long)]
        rtf: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write a .catbag recording.
        #[arg(long, value_name = "OUT")]
        record: Option<PathBuf>,
        /// Topic patterns to record (`+` matches one segment). All topics
        /// by default.
        #[arg(long = "topic", value_name = "PATTERN", requires = "record")]
        topics: Vec<String>,
        /// Serve the live view on this port.
        #[arg(long, value_name = "PORT")]
        ui_port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1", requires = "ui_port")]
        ui_host: String,
        /// Serve static UI files from this directory instead of the
        /// built-in page.
        #[arg(long, value_name = "DIR", requires = "ui_port")]
        ui_assets: Option<PathBuf>,
        /// Abort on the first controller fault.
        #[arg(long)]
        strict: bool,
    },
    /// Re-publish a recording.
    Play {
        bag: PathBuf,
        /// Playback speed; 0 plays as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        /// Print each record.
        #[arg(long)]
        echo: bool,
    },
    /// Report the first record where two recordings differ.
    Diff { a: PathBuf, b: PathBuf },
    /// Validate a world file.
    Check {
        world: PathBuf,
        /// Print the world with every default filled in.
        #[arg(long)]
        canonical: bool,
    },
    /// Summarize a recording.
    Info { bag: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Run {
            world,
            duration,
            rtf,
            seed,
            record,
            topics,
            ui_port,
            ui_host,
            ui_assets,
            strict,
        } => run(RunArgs {
            world,
            duration,
            rtf,
            seed,
            record,
            topics,
            ui: ui_port.map(|port| (ui_host, port, ui_assets)),
            strict,
        }),
        Command::Play { bag, rate, echo } => play_bag(&bag, rate, echo),
        Command::Diff { a, b } => diff_bags(&a, &b),
        Command::Check { world, canonical } => check(&world, canonical),
        Command::Info { bag } => info(&bag),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("catsim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_world(path: &Path) -> Result<WorldModel, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::new(PARSE, format!("{}: {e}", path.display())))?;
    parse_world(&text).map_err(|e| Failure::new(PARSE, format!("{}: {e}", path.display())))
}

fn load_bag(path: &Path) -> Result<Bag, Failure> {
    Bag::read(path).map_err(|e| Failure::new(PARSE, format!("{}: {e}", path.display())))
}

struct RunArgs {
    world: PathBuf,
    duration: Option<f64>,
    rtf: Option<f64>,
    seed: u64,
    record: Option<PathBuf>,
    topics: Vec<String>,
    ui: Option<(String, u16, Option<PathBuf>)>,
    strict: bool,
}

fn run(args: RunArgs) -> Outcome {
    let world = load_world(&args.world)?;
    let step = world.step;
    let rtf = args.rtf.unwrap_or(world.real_time_factor);
    for (name, v) in [("--rtf", Some(rtf)), ("--duration", args.duration)] {
        if v.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
            return Err(Failure::new(USAGE, format!("{name} must be a finite number ≥ 0")));
        }
    }
    let mut engine = Engine::new(world, args.seed).map_err(|e| Failure::new(PARSE, e.to_string()))?;
    engine.set_strict(args.strict);

    // Open the output before running so a bad path fails fast.
    let mut out = match &args.record {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure::new(PARSE, format!("{}: {e}", path.display())))?;
            let patterns: Vec<&str> = args.topics.iter().map(String::as_str).collect();
            let recorder =
                BagRecorder::spawn(args.seed, step, &patterns).map_err(|e| Failure::new(PARSE, e.to_string()))?;
            Some((path.clone(), file, recorder))
        }
        None => None,
    };
    let mut ui = match &args.ui {
        Some((host, port, assets)) => {
            let hub = UiHub::new();
            let config = ServerConfig { assets: assets.clone() };
            let server = UiServer::bind((host.as_str(), *port), hub.clone(), engine.teleop_inbox(), config)
                .map_err(|e| Failure::new(PARSE, format!("cannot listen on {host}:{port}: {e}")))?;
            eprintln!("live view at http://{}/", server.local_addr());
            Some((server, UiTap::new(&engine, hub)))
        }
        None => None,
    };

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        // Only fails if a handler is already installed.
        let _ = ctrlc::set_handler(move || stop.store(true, Ordering::Relaxed));
    }
    let opts = RunOptions {
        duration: args.duration,
        real_time_factor: rtf,
        stop: Some(&stop),
    };
    let result = {
        let mut taps: Vec<&mut dyn BusTap> = Vec::new();
        if let Some((_, _, rec)) = out.as_mut() {
            taps.push(rec);
        }
        if let Some((_, tap)) = ui.as_mut() {
            taps.push(tap);
        }
        engine.run(opts, &mut taps)
    };
    if let Some((server, tap)) = ui {
        drop(tap);
        server.shutdown();
    }

    let status = if result.is_ok() {
        BagStatus::Complete
    } else {
        BagStatus::Partial
    };
    if let Some((path, mut file, recorder)) = out {
        let bag = recorder
            .finish(status)
            .map_err(|e| Failure::new(RUNTIME, format!("recorder failed: {e}")))?;
        file.write_all(&bag.to_bytes())
            .and_then(|_| file.sync_all())
            .map_err(|e| Failure::new(RUNTIME, format!("{}: {e}", path.display())))?;
        eprintln!("wrote {} records to {} ({:?})", bag.records.len(), path.display(), status);
    }
    match result {
        Ok(summary) => {
            print!("{summary}");
            Ok(())
        }
        Err(e @ Error::ControllerFault { .. }) => Err(Failure::new(RUNTIME, e.to_string())),
        Err(e @ Error::InvalidParam { .. }) => Err(Failure::new(USAGE, e.to_string())),
        Err(e) => Err(Failure::new(RUNTIME, e.to_string())),
    }
}

fn describe(msg: &Message) -> String {
    match msg {
        Message::LaserScan(s) => format!("{} beams, {} returns", s.ranges.len(), s.ranges.iter().flatten().count()),
        Message::PointCloud(c) => format!("{} points", c.points.len()),
        Message::VehicleState(s) => format!(
            "x {:.3} y {:.3} theta {:.4} v {:.3} delta {:.4}",
            s.pose.x, s.pose.y, s.pose.theta, s.v, s.delta
        ),
        Message::VelocityCommand(c) => format!("v_set {} delta_set {}", c.v_set, c.delta_set),
        Message::GpsFix(g) => format!("x {:.3} y {:.3}", g.x, g.y),
        Message::Clock(t) => format!("{:.3} s", t.seconds()),
        Message::SpawnRequest(r) => format!("{:?}", r.action),
        Message::Diagnostic(d) => format!("{:?} {}: {}", d.severity, d.source, d.message),
    }
}

fn play_bag(path: &Path, rate: f64, echo: bool) -> Outcome {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Failure::new(USAGE, "--rate must be a finite number ≥ 0"));
    }
    let bag = load_bag(path)?;
    let step = bag.step;
    let mut bus = Bus::new();
    let start = Instant::now();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let n = play(&bag, rate, &mut bus, |_, delivered| {
        if echo {
            for env in delivered {
                let _ = writeln!(
                    lock,
                    "{:>10.3} {:<24} {}",
                    env.t as f64 * step,
                    env.topic,
                    describe(&env.payload)
                );
            }
        }
    })
    .map_err(|e| Failure::new(PARSE, format!("{}: {e}", path.display())))?;
    drop(lock);
    let info = bag.info();
    println!(
        "played {n} records, {:.3} s simulated, in {:.3} s",
        info.last_tick as f64 * step,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn diff_bags(a: &Path, b: &Path) -> Outcome {
    let (a, b) = (load_bag(a)?, load_bag(b)?);
    let report = diff(&a, &b);
    println!("{report}");
    if report.is_equal() {
        Ok(())
    } else {
        Err(Failure::new(DIFFERENT, "recordings differ"))
    }
}

fn check(path: &Path, canonical: bool) -> Outcome {
    let world = load_world(path)?;
    if canonical {
        println!("{}", world.to_canonical_json());
    } else {
        let count = |n: usize, noun: &str| format!("{n} {noun}{}", if n == 1 { "" } else { "s" });
        println!(
            "ok: step {} s, {}, {}",
            world.step,
            count(world.vehicles.len(), "vehicle"),
            count(world.obstacles.len(), "obstacle")
        );
    }
    Ok(())
}

fn info(path: &Path) -> Outcome {
    let bytes = std::fs::read(path).map_err(|e| Failure::new(PARSE, format!("{}: {e}", path.display())))?;
    let (bag, damage) = Bag::recover(&bytes).map_err(|e| Failure::new(PARSE, format!("{}: {e}", path.display())))?;
    print!("{}", bag.info());
    match damage {
        None => Ok(()),
        Some(e) => Err(Failure::new(PARSE, format!("{}: {e}", path.display()))),
    }
}
