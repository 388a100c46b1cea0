//! Whole-frame similarity transforms applied after insertion.

use rand::Rng;

use super::config::GlobalAugParams;
use crate::geometry::{normalize_angle, Box3D, Point, PointCloud};
use crate::manifest::GlobalTransform;

/// Draws rotation, then flip, then scale; always consumes the same number
/// of random values so later draws do not depend on the parameters.
pub fn draw<R: Rng + ?Sized>(params: &GlobalAugParams, rng: &mut R) -> GlobalTransform {
    let u_rot: f64 = rng.gen();
    let u_flip: f64 = rng.gen();
    let u_scale: f64 = rng.gen();
    if !params.enabled {
        return GlobalTransform::IDENTITY;
    }
    let (lo, hi) = params.scale_range;
    GlobalTransform {
        rotation: (2.0 * u_rot - 1.0) * params.rotation_range,
        flip: u_flip < params.flip_probability,
        scale: lo + (hi - lo) * u_scale,
    }
}

pub fn apply_point(t: &GlobalTransform, p: &Point) -> Point {
    let (s, c) = t.rotation.sin_cos();
    let x = c * p.x - s * p.y;
    let mut y = s * p.x + c * p.y;
    if t.flip {
        y = -y;
    }
    Point::new(x * t.scale, y * t.scale, p.z * t.scale, p.intensity)
}

pub fn apply_box(t: &GlobalTransform, b: &Box3D) -> Box3D {
    let c = apply_point(t, &Point::new(b.cx, b.cy, b.cz, 0.0));
    let yaw = b.yaw + t.rotation;
    Box3D {
        cx: c.x,
        cy: c.y,
        cz: c.z,
        length: b.length * t.scale,
        width: b.width * t.scale,
        height: b.height * t.scale,
        yaw: normalize_angle(if t.flip { -yaw } else { yaw }),
        ..*b
    }
}

pub fn apply_cloud(t: &GlobalTransform, cloud: &PointCloud) -> PointCloud {
    if *t == GlobalTransform::IDENTITY {
        return cloud.clone();
    }
    let mut out = cloud.clone();
    for p in out.points_mut() {
        *p = apply_point(t, p);
    }
    out
}

/// Undoes `apply_point`: unscale, unflip, unrotate.
pub fn invert_point(t: &GlobalTransform, p: &Point) -> Point {
    let x = p.x / t.scale;
    let mut y = p.y / t.scale;
    if t.flip {
        y = -y;
    }
    let (s, c) = t.rotation.sin_cos();
    Point::new(c * x + s * y, -s * x + c * y, p.z / t.scale, p.intensity)
}
