//! Bus message payloads and their canonical binary layouts.
//!
//! All integers are little-endian, all floats are raw IEEE-754 bit patterns
//! (`f64::to_le_bytes`), and strings are UTF-8 prefixed by a `u32` length.
//! Timestamps are stored as tick counts; the step length lives in the bag
//! header, so decoding takes it as an argument.

use serde::{Deserialize, Serialize};

use crate::sensors::{GpsFix, LaserScan, PointCloud};
use crate::types::{Pose2D, SimTime, VehicleState, VelocityCommand};
use crate::world::VehicleSpawn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum TypeTag {
    VelocityCommand = 0,
    VehicleState = 1,
    LaserScan = 2,
    PointCloud = 3,
    GpsFix = 4,
    SpawnRequest = 5,
    Clock = 6,
    Diagnostic = 7,
}

impl TypeTag {
    pub fn from_u8(b: u8) -> Option<Self> {
        use TypeTag::*;
        Some(match b {
            0 => VelocityCommand,
            1 => VehicleState,
            2 => LaserScan,
            3 => PointCloud,
            4 => GpsFix,
            5 => SpawnRequest,
            6 => Clock,
            7 => Diagnostic,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpawnAction {
    Spawn(Box<VehicleSpawn>),
    Despawn(String),
}

/// Runtime vehicle creation or removal, as published on `/spawn`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpawnRequest {
    pub action: SpawnAction,
}

impl SpawnRequest {
    pub fn spawn(spec: VehicleSpawn) -> Self {
        Self {
            action: SpawnAction::Spawn(Box::new(spec)),
        }
    }

    pub fn despawn(name: impl Into<String>) -> Self {
        Self {
            action: SpawnAction::Despawn(name.into()),
        }
    }

    pub fn vehicle_name(&self) -> &str {
        match &self.action {
            SpawnAction::Spawn(s) => &s.name,
            SpawnAction::Despawn(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(u8)]
pub enum Severity {
    Info = 0,
    Warn = 1,
    Error = 2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub source: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    VelocityCommand(VelocityCommand),
    VehicleState(VehicleState),
    LaserScan(LaserScan),
    PointCloud(PointCloud),
    GpsFix(GpsFix),
    SpawnRequest(SpawnRequest),
    Clock(SimTime),
    Diagnostic(Diagnostic),
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DecodeError {
    #[error("payload ended after {0} bytes")]
    Truncated(usize),
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("invalid payload: {0}")]
    Invalid(String),
}

struct Writer(Vec<u8>);

impl Writer {
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::Truncated(self.buf.len()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn str(&mut self) -> Result<String, DecodeError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| DecodeError::Invalid(e.to_string()))
    }
    fn finish(self) -> Result<(), DecodeError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

/// No-return beams are stored as +∞.
fn encode_range(r: Option<f64>) -> f64 {
    r.unwrap_or(f64::INFINITY)
}

fn decode_range(r: f64) -> Option<f64> {
    r.is_finite().then_some(r)
}

impl Message {
    pub fn type_tag(&self) -> TypeTag {
        match self {
            Message::VelocityCommand(_) => TypeTag::VelocityCommand,
            Message::VehicleState(_) => TypeTag::VehicleState,
            Message::LaserScan(_) => TypeTag::LaserScan,
            Message::PointCloud(_) => TypeTag::PointCloud,
            Message::GpsFix(_) => TypeTag::GpsFix,
            Message::SpawnRequest(_) => TypeTag::SpawnRequest,
            Message::Clock(_) => TypeTag::Clock,
            Message::Diagnostic(_) => TypeTag::Diagnostic,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        match self {
            Message::VelocityCommand(c) => {
                w.f64(c.v_set);
                w.f64(c.delta_set);
            }
            Message::VehicleState(s) => {
                w.u64(s.t.ticks);
                for v in [
                    s.pose.x,
                    s.pose.y,
                    s.pose.theta,
                    s.v,
                    s.delta,
                    s.delta_left,
                    s.delta_right,
                    s.omega_left,
                    s.omega_right,
                ] {
                    w.f64(v);
                }
            }
            Message::LaserScan(s) => {
                w.u64(s.t.ticks);
                w.f64(s.angle_min);
                w.f64(s.angle_max);
                w.f64(s.angle_increment);
                w.f64(s.range_max);
                w.u32(s.ranges.len() as u32);
                for r in &s.ranges {
                    w.f64(encode_range(*r));
                }
            }
            Message::PointCloud(c) => {
                w.u64(c.t.ticks);
                w.u32(c.points.len() as u32);
                for p in &c.points {
                    for v in p {
                        w.f64(*v);
                    }
                }
            }
            Message::GpsFix(g) => {
                w.u64(g.t.ticks);
                w.f64(g.x);
                w.f64(g.y);
                w.f64(g.sigma);
            }
            Message::SpawnRequest(r) => match &r.action {
                SpawnAction::Spawn(spec) => {
                    w.u8(0);
                    w.str(&serde_json::to_string(spec).expect("spawn spec serializes"));
                }
                SpawnAction::Despawn(name) => {
                    w.u8(1);
                    w.str(name);
                }
            },
            Message::Clock(t) => {
                w.u64(t.ticks);
                w.f64(t.step);
            }
            Message::Diagnostic(d) => {
                w.u8(d.severity as u8);
                w.str(&d.source);
                w.str(&d.message);
            }
        }
        w.0
    }

    pub fn decode(tag: TypeTag, bytes: &[u8], step: f64) -> Result<Message, DecodeError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let time = |ticks| SimTime { ticks, step };
        let msg = match tag {
            TypeTag::VelocityCommand => Message::VelocityCommand(VelocityCommand {
                v_set: r.f64()?,
                delta_set: r.f64()?,
            }),
            TypeTag::VehicleState => {
                let t = time(r.u64()?);
                let mut v = [0.0; 9];
                for slot in &mut v {
                    *slot = r.f64()?;
                }
                Message::VehicleState(VehicleState {
                    pose: Pose2D { x: v[0], y: v[1], theta: v[2] },
                    v: v[3],
                    delta: v[4],
                    delta_left: v[5],
                    delta_right: v[6],
                    omega_left: v[7],
                    omega_right: v[8],
                    t,
                })
            }
            TypeTag::LaserScan => {
                let t = time(r.u64()?);
                let (angle_min, angle_max, angle_increment, range_max) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
                let n = r.u32()? as usize;
                let ranges = (0..n).map(|_| r.f64().map(decode_range)).collect::<Result<_, _>>()?;
                Message::LaserScan(LaserScan {
                    t,
                    angle_min,
                    angle_max,
                    angle_increment,
                    range_max,
                    ranges,
                })
            }
            TypeTag::PointCloud => {
                let t = time(r.u64()?);
                let n = r.u32()? as usize;
                let points = (0..n)
                    .map(|_| Ok([r.f64()?, r.f64()?, r.f64()?]))
                    .collect::<Result<_, DecodeError>>()?;
                Message::PointCloud(PointCloud { t, points })
            }
            TypeTag::GpsFix => Message::GpsFix(GpsFix {
                t: time(r.u64()?),
                x: r.f64()?,
                y: r.f64()?,
                sigma: r.f64()?,
            }),
            TypeTag::SpawnRequest => {
                let action = match r.u8()? {
                    0 => {
                        let json = r.str()?;
                        let spec: VehicleSpawn =
                            serde_json::from_str(&json).map_err(|e| DecodeError::Invalid(e.to_string()))?;
                        SpawnAction::Spawn(Box::new(spec))
                    }
                    1 => SpawnAction::Despawn(r.str()?),
                    other => return Err(DecodeError::Invalid(format!("spawn action {other}"))),
                };
                Message::SpawnRequest(SpawnRequest { action })
            }
            TypeTag::Clock => Message::Clock(SimTime {
                ticks: r.u64()?,
                step: r.f64()?,
            }),
            TypeTag::Diagnostic => {
                let severity = match r.u8()? {
                    0 => Severity::Info,
                    1 => Severity::Warn,
                    2 => Severity::Error,
                    other => return Err(DecodeError::Invalid(format!("severity {other}"))),
                };
                Message::Diagnostic(Diagnostic {
                    severity,
                    source: r.str()?,
                    message: r.str()?,
                })
            }
        };
        r.finish()?;
        Ok(msg)
    }
}
