//! Brute-force oracles and generators shared by the integration suites.
//! Oracles deliberately avoid the library's own helpers.

#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use caaug::geometry::{bev_corners, Box3D, LidarSpec, ObjectClass, Point, PointCloud};
use rand::Rng;

pub fn small_spec() -> LidarSpec {
    LidarSpec::from_degrees(512, 32, 2.0, -24.8)
}

/// Column of a point computed directly from the projection formula.
pub fn column_oracle(p: &Point, spec: &LidarSpec) -> usize {
    let w = spec.width as f64;
    let u = (0.5 * (1.0 - p.y.atan2(p.x) / PI) * w).floor() as i64;
    u.rem_euclid(spec.width as i64) as usize
}

/// Pixel of a point, `None` when out of the vertical field of view.
pub fn pixel_oracle(p: &Point, spec: &LidarSpec) -> Option<(usize, usize)> {
    let r = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
    let f = spec.fov_up - spec.fov_down;
    let v = (1.0 - ((p.z / r).asin() - spec.fov_down) / f) * spec.height as f64;
    (v >= 0.0 && v < spec.height as f64).then(|| (column_oracle(p, spec), v.floor() as usize))
}

/// Obstacle flags by grouping points into d x d cells through a sort.
pub fn partition_oracle(cloud: &PointCloud, d: f64, sigma: f64) -> Vec<bool> {
    let key = |p: &Point| ((p.x / d).floor() as i64, (p.y / d).floor() as i64);
    let mut idx: Vec<usize> = (0..cloud.len()).collect();
    idx.sort_by_key(|&i| key(&cloud.points()[i]));
    let mut obstacle = vec![false; cloud.len()];
    let mut s = 0;
    while s < idx.len() {
        let k = key(&cloud.points()[idx[s]]);
        let mut e = s;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        while e < idx.len() && key(&cloud.points()[idx[e]]) == k {
            let z = cloud.points()[idx[e]].z;
            lo = lo.min(z);
            hi = hi.max(z);
            e += 1;
        }
        if hi - lo > sigma {
            for &i in &idx[s..e] {
                obstacle[i] = true;
            }
        }
        s = e;
    }
    obstacle
}

/// Per-column minimum range over flagged points.
pub fn validspace_oracle(cloud: &PointCloud, obstacle: &[bool], spec: &LidarSpec) -> Vec<f64> {
    let mut v = vec![f64::INFINITY; spec.width];
    for (p, &o) in cloud.points().iter().zip(obstacle) {
        let r = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
        if o && r > 0.0 {
            let c = column_oracle(p, spec);
            v[c] = v[c].min(r);
        }
    }
    v
}

/// Nearest point per pixel, lowest index on ties.
pub fn zbuffer_oracle(cloud: &PointCloud, spec: &LidarSpec) -> HashMap<(usize, usize), usize> {
    let mut best: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    for (i, p) in cloud.points().iter().enumerate() {
        if let Some(px) = pixel_oracle(p, spec) {
            let r = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
            let e = best.entry(px).or_insert((r, i));
            if r < e.0 || (r == e.0 && i < e.1) {
                *e = (r, i);
            }
        }
    }
    best.into_iter().map(|(k, (_, i))| (k, i)).collect()
}

/// Inside test by half-planes of the corner polygon, whatever its winding.
pub fn half_plane_inside(q: [f64; 2], b: &Box3D, eps: f64) -> bool {
    let c = bev_corners(b);
    let mut sign = 0.0f64;
    for i in 0..4 {
        let (p, r) = (c[i], c[(i + 1) % 4]);
        let edge = [r[0] - p[0], r[1] - p[1]];
        let cross = edge[0] * (q[1] - p[1]) - edge[1] * (q[0] - p[0]);
        let len = edge[0].hypot(edge[1]);
        if cross.abs() <= eps * len {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let on = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    let (d1, d2, d3, d4) = (orient(c, d, a), orient(c, d, b), orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on(c, d, a)) || (d2 == 0.0 && on(c, d, b)) || (d3 == 0.0 && on(a, b, c)) || (d4 == 0.0 && on(a, b, d))
}

/// Rectangle overlap by edge crossings plus containment.
pub fn polygon_overlap_oracle(a: &Box3D, b: &Box3D) -> bool {
    let (ca, cb) = (bev_corners(a), bev_corners(b));
    for i in 0..4 {
        for j in 0..4 {
            if segments_cross(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]) {
                return true;
            }
        }
    }
    half_plane_inside(ca[0], b, 0.0) || half_plane_inside(cb[0], a, 0.0)
}

pub fn random_box<R: Rng + ?Sized>(rng: &mut R, extent: f64) -> Box3D {
    Box3D::new(
        [rng.gen_range(-extent..extent), rng.gen_range(-extent..extent), rng.gen_range(-2.0..1.0)],
        [rng.gen_range(0.3..6.0), rng.gen_range(0.3..3.0), rng.gen_range(0.5..2.5)],
        rng.gen_range(-PI..PI),
        ObjectClass::Car,
    )
}

/// Uniform points in a box-shaped region around the sensor.
pub fn random_cloud<R: Rng + ?Sized>(rng: &mut R, n: usize, extent: f64) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| {
                Point::new(
                    rng.gen_range(-extent..extent),
                    rng.gen_range(-extent..extent),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect(),
    )
}

/// Point on the center ray of pixel (u, v) at `range`.
pub fn at_pixel(spec: &LidarSpec, u: usize, v: usize, range: f64) -> Point {
    let a = spec.column_center_azimuth(u);
    let e = spec.row_center_elevation(v);
    Point::new(range * e.cos() * a.cos(), range * e.cos() * a.sin(), range * e.sin(), 0.5)
}

/// Upper tail of Binomial(n, 1/2): P(X >= k).
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut total = 0.0;
    for i in wins..=n {
        let mut c = 1.0f64;
        for j in 0..i {
            c *= (n - j) as f64 / (j + 1) as f64;
        }
        total += c;
    }
    total / 2f64.powi(n as i32)
}
