//! Simulated perception: a planar front rangefinder, a multi-beam lidar and
//! a noisy GPS. Range sensors are noise-free by default; their outputs are
//! quantized to the device resolution.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{Pose2D, SimTime, VehicleState};
use crate::world::{raycast, Footprint, Ray, Solid, WorldModel};
use crate::types::VehicleParams;

pub const RANGEFINDER_BEAMS: usize = 180;
pub const RANGEFINDER_INCREMENT: f64 = 0.0175;
pub const RANGEFINDER_RANGE_MAX: f64 = 80.0;
/// Inverse of the 0.01 m range resolution.
pub const RANGEFINDER_STEPS_PER_METER: f64 = 100.0;
pub const RANGEFINDER_RATE: f64 = 75.0;
pub const RANGEFINDER_HEIGHT: f64 = 0.75;

pub const LIDAR_H_BEAMS: usize = 100;
pub const LIDAR_V_BEAMS: usize = 20;
pub const LIDAR_H_MIN: f64 = -0.4;
pub const LIDAR_H_MAX: f64 = 0.4;
pub const LIDAR_V_MIN: f64 = -0.034906585;
pub const LIDAR_V_MAX: f64 = 0.326;
pub const LIDAR_RANGE_MAX: f64 = 50.0;
/// Inverse of the 0.02 m range resolution.
pub const LIDAR_STEPS_PER_METER: f64 = 50.0;
pub const LIDAR_RATE: f64 = 5.0;
pub const LIDAR_HEIGHT: f64 = 1.5;

pub const GPS_RATE: f64 = 10.0;
pub const GPS_SIGMA_SINGLE_POINT: f64 = 1.5;
pub const GPS_SIGMA_SBAS: f64 = 0.6;
pub const GPS_SIGMA_DGPS: f64 = 0.4;

/// One planar range scan. Beam `k` points at `angle_min + k * angle_increment`
/// measured from the sensor's right (−y) toward its left (+y), so the
/// straight-ahead bearing is `π/2` on that scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserScan {
    pub t: SimTime,
    pub angle_min: f64,
    pub angle_max: f64,
    pub angle_increment: f64,
    pub range_max: f64,
    /// `None` is a beam with no return.
    pub ranges: Vec<Option<f64>>,
}

impl LaserScan {
    /// Bearing of beam `k` relative to the sensor's forward axis,
    /// counterclockwise positive.
    pub fn bearing(&self, k: usize) -> f64 {
        self.angle_min + k as f64 * self.angle_increment - FRAC_PI_2
    }
}

/// Lidar returns as sensor-frame points, in beam order (vertical rows outer,
/// horizontal columns inner). Beams without a return are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub t: SimTime,
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub t: SimTime,
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

/// Placement of a sensor in its vehicle's rear-axle frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorMount {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(default)]
    pub yaw: f64,
}

impl SensorMount {
    /// Front bumper center at the usual rangefinder height.
    pub fn front_bumper(params: &VehicleParams, footprint: &Footprint) -> Self {
        Self {
            x: footprint.front_offset(params),
            y: 0.0,
            z: RANGEFINDER_HEIGHT,
            yaw: 0.0,
        }
    }

    /// Roof center.
    pub fn roof(params: &VehicleParams) -> Self {
        Self {
            x: params.l / 2.0,
            y: 0.0,
            z: LIDAR_HEIGHT,
            yaw: 0.0,
        }
    }

    /// World pose of the sensor when its vehicle is at `vehicle`.
    pub fn world_pose(&self, vehicle: &Pose2D) -> (Pose2D, f64) {
        let (x, y) = vehicle.transform_point(self.x, self.y);
        (
            Pose2D {
                x,
                y,
                theta: vehicle.theta + self.yaw,
            },
            self.z,
        )
    }
}

fn default_true() -> bool {
    true
}
fn default_rangefinder_rate() -> f64 {
    RANGEFINDER_RATE
}
fn default_lidar_rate() -> f64 {
    LIDAR_RATE
}
fn default_gps_rate() -> f64 {
    GPS_RATE
}
fn default_gps_sigma() -> f64 {
    GPS_SIGMA_DGPS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangefinderConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// `None` mounts on the front bumper.
    #[serde(default)]
    pub mount: Option<SensorMount>,
    #[serde(default = "default_rangefinder_rate")]
    pub rate: f64,
    /// Standard deviation of additive range noise; 0 disables it.
    #[serde(default)]
    pub range_noise: f64,
}

impl Default for RangefinderConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            mount: None,
            rate: RANGEFINDER_RATE,
            range_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// `None` mounts on the roof center.
    #[serde(default)]
    pub mount: Option<SensorMount>,
    #[serde(default = "default_lidar_rate")]
    pub rate: f64,
    #[serde(default)]
    pub range_noise: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            mount: None,
            rate: LIDAR_RATE,
            range_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpsConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_gps_rate")]
    pub rate: f64,
    #[serde(default = "default_gps_sigma")]
    pub sigma: f64,
}

impl Default for GpsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            rate: GPS_RATE,
            sigma: GPS_SIGMA_DGPS,
        }
    }
}

/// Per-vehicle sensor configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSuite {
    pub rangefinder: RangefinderConfig,
    pub lidar: LidarConfig,
    pub gps: GpsConfig,
}

impl SensorSuite {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("rangefinder.rate", self.rangefinder.rate),
            ("lidar.rate", self.lidar.rate),
            ("gps.rate", self.gps.rate),
        ];
        for (name, rate) in rates {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be positive, got {rate}"),
                });
            }
        }
        let noises = [
            ("rangefinder.range_noise", self.rangefinder.range_noise),
            ("lidar.range_noise", self.lidar.range_noise),
            ("gps.sigma", self.gps.sigma),
        ];
        for (name, sigma) in noises {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be ≥ 0, got {sigma}"),
                });
            }
        }
        Ok(())
    }
}

/// Independent random stream for one sensor instance, keyed by the global
/// seed and the vehicle and sensor names.
pub fn sensor_rng(seed: u64, vehicle: &str, sensor: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((vehicle.len() as u64).to_le_bytes());
    h.update(vehicle.as_bytes());
    h.update(sensor.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Rounds a range to the nearest multiple of `1 / steps_per_meter`, never
/// to zero.
pub fn quantize_range(r: f64, steps_per_meter: f64) -> f64 {
    (r * steps_per_meter).round().max(1.0) / steps_per_meter
}

fn measure(
    raw: Option<f64>,
    range_max: f64,
    steps_per_meter: f64,
    noise: Option<(f64, &mut ChaCha8Rng)>,
) -> Option<f64> {
    let mut r = raw?;
    if let Some((sigma, rng)) = noise {
        if sigma > 0.0 {
            r += Normal::new(0.0, sigma).expect("sigma validated").sample(rng);
        }
    }
    let q = quantize_range(r, steps_per_meter);
    (q <= range_max).then_some(q)
}

/// Samples the front rangefinder.
///
/// `bodies` must exclude the sensing vehicle. `noise` is only consulted when
/// the configured range noise is positive.
pub fn sample_rangefinder(
    world: &WorldModel,
    bodies: &[Solid],
    vehicle: &Pose2D,
    mount: &SensorMount,
    t: SimTime,
    mut noise: Option<(f64, &mut ChaCha8Rng)>,
) -> LaserScan {
    let (pose, z) = mount.world_pose(vehicle);
    let origin = [pose.x, pose.y, z];
    let ranges = (0..RANGEFINDER_BEAMS)
        .map(|k| {
            let heading = pose.theta - FRAC_PI_2 + k as f64 * RANGEFINDER_INCREMENT;
            let raw = raycast(world, bodies, &Ray::from_angles(origin, heading, 0.0), RANGEFINDER_RANGE_MAX);
            let noise = noise.as_mut().map(|(s, rng)| (*s, &mut **rng));
            measure(raw, RANGEFINDER_RANGE_MAX, RANGEFINDER_STEPS_PER_METER, noise)
        })
        .collect();
    LaserScan {
        t,
        angle_min: 0.0,
        angle_max: PI,
        angle_increment: RANGEFINDER_INCREMENT,
        range_max: RANGEFINDER_RANGE_MAX,
        ranges,
    }
}

/// Horizontal beam angles of the lidar, endpoints included.
pub fn lidar_horizontal_angles() -> impl Iterator<Item = f64> {
    let span = LIDAR_H_MAX - LIDAR_H_MIN;
    (0..LIDAR_H_BEAMS).map(move |i| LIDAR_H_MIN + span * i as f64 / (LIDAR_H_BEAMS - 1) as f64)
}

/// Vertical beam angles of the lidar, endpoints included.
pub fn lidar_vertical_angles() -> impl Iterator<Item = f64> {
    let span = LIDAR_V_MAX - LIDAR_V_MIN;
    (0..LIDAR_V_BEAMS).map(move |j| LIDAR_V_MIN + span * j as f64 / (LIDAR_V_BEAMS - 1) as f64)
}

pub fn sample_lidar(
    world: &WorldModel,
    bodies: &[Solid],
    vehicle: &Pose2D,
    mount: &SensorMount,
    t: SimTime,
    mut noise: Option<(f64, &mut ChaCha8Rng)>,
) -> PointCloud {
    let (pose, z) = mount.world_pose(vehicle);
    let origin = [pose.x, pose.y, z];
    let mut points = Vec::new();
    for elevation in lidar_vertical_angles() {
        let (se, ce) = elevation.sin_cos();
        for azimuth in lidar_horizontal_angles() {
            let ray = Ray::from_angles(origin, pose.theta + azimuth, elevation);
            let raw = raycast(world, bodies, &ray, LIDAR_RANGE_MAX);
            let noise = noise.as_mut().map(|(s, rng)| (*s, &mut **rng));
            if let Some(r) = measure(raw, LIDAR_RANGE_MAX, LIDAR_STEPS_PER_METER, noise) {
                let (sa, ca) = azimuth.sin_cos();
                points.push([r * ce * ca, r * ce * sa, r * se]);
            }
        }
    }
    PointCloud { t, points }
}

/// Ground-truth rear axle position plus independent Gaussian noise on each
/// axis.
pub fn sample_gps(state: &VehicleState, sigma: f64, rng: &mut ChaCha8Rng, t: SimTime) -> GpsFix {
    let (x, y) = if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("sigma validated");
        (state.pose.x + n.sample(rng), state.pose.y + n.sample(rng))
    } else {
        (state.pose.x, state.pose.y)
    };
    GpsFix { t, x, y, sigma }
}
