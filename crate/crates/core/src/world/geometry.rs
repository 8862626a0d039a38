//! Solids, rays, and the intersection kernel used by every range sensor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Pose2D;

/// Returns closer than this are treated as grazing the ray origin.
const T_EPS: f64 = 1e-9;

/// A vertical prism standing on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Solid {
    /// Oriented box; `sx` and `sy` are full side lengths along its own axes.
    Box {
        cx: f64,
        cy: f64,
        #[serde(default)]
        yaw: f64,
        sx: f64,
        sy: f64,
        height: f64,
    },
    Cylinder {
        cx: f64,
        cy: f64,
        radius: f64,
        height: f64,
    },
}

impl Solid {
    pub fn validate(&self) -> Result<()> {
        let extents: &[(&str, f64)] = match self {
            Solid::Box { sx, sy, height, .. } => &[("sx", *sx), ("sy", *sy), ("height", *height)],
            Solid::Cylinder { radius, height, .. } => &[("radius", *radius), ("height", *height)],
        };
        for (name, v) in extents {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::WorldSemantic(format!("extent `{name}` must be positive, got {v}")));
            }
        }
        let (cx, cy) = self.center();
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::WorldSemantic("solid center is not finite".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        match *self {
            Solid::Box { cx, cy, .. } | Solid::Cylinder { cx, cy, .. } => (cx, cy),
        }
    }

    pub fn height(&self) -> f64 {
        match *self {
            Solid::Box { height, .. } | Solid::Cylinder { height, .. } => height,
        }
    }

    /// The same solid after a rotation by `angle` about the world origin
    /// followed by a translation.
    pub fn transformed(&self, angle: f64, tx: f64, ty: f64) -> Solid {
        let frame = Pose2D { x: tx, y: ty, theta: angle };
        match *self {
            Solid::Box { cx, cy, yaw, sx, sy, height } => {
                let (cx, cy) = frame.transform_point(cx, cy);
                Solid::Box { cx, cy, yaw: yaw + angle, sx, sy, height }
            }
            Solid::Cylinder { cx, cy, radius, height } => {
                let (cx, cy) = frame.transform_point(cx, cy);
                Solid::Cylinder { cx, cy, radius, height }
            }
        }
    }

    /// Distance along `ray` to the first boundary crossing in front of the
    /// origin, if any.
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        match *self {
            Solid::Box { cx, cy, yaw, sx, sy, height } => {
                let frame = Pose2D { x: cx, y: cy, theta: yaw };
                let (ox, oy) = frame.inverse_transform_point(ray.origin[0], ray.origin[1]);
                let (s, c) = yaw.sin_cos();
                let [dx, dy, dz] = ray.direction;
                let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
                slab_hit(
                    [ox, oy, ray.origin[2]],
                    [lx, ly, dz],
                    [-sx / 2.0, -sy / 2.0, 0.0],
                    [sx / 2.0, sy / 2.0, height],
                )
            }
            Solid::Cylinder { cx, cy, radius, height } => {
                cylinder_hit(ray, cx, cy, radius, height)
            }
        }
    }
}

fn first_forward(t_near: f64, t_far: f64) -> Option<f64> {
    if t_near > t_far {
        None
    } else if t_near > T_EPS {
        Some(t_near)
    } else if t_far > T_EPS {
        Some(t_far)
    } else {
        None
    }
}

fn slab_hit(origin: [f64; 3], dir: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        if dir[axis] == 0.0 {
            if origin[axis] < lo[axis] || origin[axis] > hi[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[axis];
        let (mut a, mut b) = ((lo[axis] - origin[axis]) * inv, (hi[axis] - origin[axis]) * inv);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t_near = t_near.max(a);
        t_far = t_far.min(b);
    }
    first_forward(t_near, t_far)
}

fn cylinder_hit(ray: &Ray, cx: f64, cy: f64, radius: f64, height: f64) -> Option<f64> {
    let [ox, oy, oz] = ray.origin;
    let [dx, dy, dz] = ray.direction;
    let (px, py) = (ox - cx, oy - cy);

    // Interval of t where the ray is inside the infinite cylinder.
    let a = dx * dx + dy * dy;
    let c = px * px + py * py - radius * radius;
    let (side_near, side_far) = if a == 0.0 {
        if c > 0.0 {
            return None;
        }
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let b = px * dx + py * dy;
        let disc = b * b - a * c;
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        // Numerically stable pair of roots.
        let q = -(b + root.copysign(b));
        if q == 0.0 {
            (0.0, 0.0)
        } else {
            let (t1, t2) = (q / a, c / q);
            (t1.min(t2), t1.max(t2))
        }
    };

    // Interval of t where the ray is between the caps.
    let (cap_near, cap_far) = if dz == 0.0 {
        if oz < 0.0 || oz > height {
            return None;
        }
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let (t0, t1) = (-oz / dz, (height - oz) / dz);
        (t0.min(t1), t0.max(t1))
    };

    first_forward(side_near.max(cap_near), side_far.min(cap_far))
}

/// A half-line in 3D. `direction` is unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: [f64; 3], direction: [f64; 3]) -> Result<Self> {
        let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) || origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Domain(format!("degenerate ray {origin:?} → {direction:?}")));
        }
        Ok(Self {
            origin,
            direction: direction.map(|d| d / norm),
        })
    }

    /// Ray from `origin` with the given heading (from +x, CCW) and elevation
    /// (above the horizontal plane).
    pub fn from_angles(origin: [f64; 3], heading: f64, elevation: f64) -> Self {
        let (sh, ch) = heading.sin_cos();
        let (se, ce) = elevation.sin_cos();
        Self {
            origin,
            direction: [ce * ch, ce * sh, se],
        }
    }

    pub fn point_at(&self, t: f64) -> [f64; 3] {
        [
            self.origin[0] + t * self.direction[0],
            self.origin[1] + t * self.direction[1],
            self.origin[2] + t * self.direction[2],
        ]
    }
}

/// Planar outline of a solid, used for contact checks.
#[derive(Debug, Clone, Copy)]
enum Outline {
    Rect { center: (f64, f64), yaw: f64, half: (f64, f64) },
    Disc { center: (f64, f64), radius: f64 },
}

fn outline(s: &Solid) -> Outline {
    match *s {
        Solid::Box { cx, cy, yaw, sx, sy, .. } => Outline::Rect {
            center: (cx, cy),
            yaw,
            half: (sx / 2.0, sy / 2.0),
        },
        Solid::Cylinder { cx, cy, radius, .. } => Outline::Disc { center: (cx, cy), radius },
    }
}

fn rect_corners(center: (f64, f64), yaw: f64, half: (f64, f64)) -> [(f64, f64); 4] {
    let frame = Pose2D { x: center.0, y: center.1, theta: yaw };
    [
        frame.transform_point(half.0, half.1),
        frame.transform_point(-half.0, half.1),
        frame.transform_point(-half.0, -half.1),
        frame.transform_point(half.0, -half.1),
    ]
}

fn rects_overlap(a: [(f64, f64); 4], ya: f64, b: [(f64, f64); 4], yb: f64) -> bool {
    let axes = [ya, ya + std::f64::consts::FRAC_PI_2, yb, yb + std::f64::consts::FRAC_PI_2];
    axes.iter().all(|&ang| {
        let (s, c) = ang.sin_cos();
        let proj = |pts: &[(f64, f64); 4]| {
            pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let d = p.0 * c + p.1 * s;
                (lo.min(d), hi.max(d))
            })
        };
        let (alo, ahi) = proj(&a);
        let (blo, bhi) = proj(&b);
        ahi >= blo && bhi >= alo
    })
}

/// Whether the ground outlines of two solids touch or overlap.
pub fn solids_overlap(a: &Solid, b: &Solid) -> bool {
    match (outline(a), outline(b)) {
        (Outline::Rect { center: ca, yaw: ya, half: ha }, Outline::Rect { center: cb, yaw: yb, half: hb }) => {
            rects_overlap(rect_corners(ca, ya, ha), ya, rect_corners(cb, yb, hb), yb)
        }
        (Outline::Disc { center: ca, radius: ra }, Outline::Disc { center: cb, radius: rb }) => {
            let (dx, dy) = (ca.0 - cb.0, ca.1 - cb.1);
            dx * dx + dy * dy <= (ra + rb) * (ra + rb)
        }
        (Outline::Rect { center, yaw, half }, Outline::Disc { center: dc, radius })
        | (Outline::Disc { center: dc, radius }, Outline::Rect { center, yaw, half }) => {
            let frame = Pose2D { x: center.0, y: center.1, theta: yaw };
            let (lx, ly) = frame.inverse_transform_point(dc.0, dc.1);
            let qx = lx.clamp(-half.0, half.0) - lx;
            let qy = ly.clamp(-half.1, half.1) - ly;
            qx * qx + qy * qy <= radius * radius
        }
    }
}
