//! Ray-cast synthetic scenes with exactly known provenance.
//!
//! One ray is cast through the center of every range-image pixel, so each
//! generated point projects back to the pixel that produced it and each
//! pixel holds at most one point. Surfaces: a flat ground plane, spherical
//! "shell" walls at a constant range over a column interval, thin vertical
//! rods, and solid boxes (parked objects).

use rand::Rng;

use crate::database::{DatabaseBuilder, GtDatabase};
use crate::geometry::{Box3D, LidarSpec, ObjectClass, Point, PointCloud, Provenance};
use crate::kitti::{lidar_box_to_label, Calib, FrameBundle, KittiLabel, LabelType};

pub const SENSOR_HEIGHT: f64 = 1.73;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ground {
    /// Ground plane height in the lidar frame.
    pub z: f64,
    /// Ground is only sampled up to this planar distance.
    pub extent: f64,
    /// Uniform height noise amplitude; keep well below the partition sigma.
    pub noise: f64,
}

impl Default for Ground {
    fn default() -> Self {
        Self { z: -SENSOR_HEIGHT, extent: 60.0, noise: 0.02 }
    }
}

/// Surface at constant 3D range over an inclusive column interval. The
/// interval wraps when `cols.0 > cols.1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellWall {
    pub range: f64,
    pub cols: (usize, usize),
    pub z: (f64, f64),
}

impl ShellWall {
    pub fn covers(&self, u: usize) -> bool {
        let (a, b) = self.cols;
        if a <= b {
            (a..=b).contains(&u)
        } else {
            u >= a || u <= b
        }
    }
}

/// Vertical cylinder from `z.0` to `z.1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rod {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub z: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDescriptor {
    pub spec: LidarSpec,
    pub ground: Option<Ground>,
    pub walls: Vec<ShellWall>,
    pub rods: Vec<Rod>,
    /// Solid objects that are also the frame's annotations.
    pub parked: Vec<Box3D>,
}

impl SceneDescriptor {
    pub fn empty(spec: LidarSpec) -> Self {
        Self { spec, ground: None, walls: Vec::new(), rods: Vec::new(), parked: Vec::new() }
    }

    pub fn with_ground(spec: LidarSpec) -> Self {
        Self { ground: Some(Ground::default()), ..Self::empty(spec) }
    }
}

/// Unit direction through the center of pixel (u, v).
pub fn ray(spec: &LidarSpec, u: usize, v: usize) -> [f64; 3] {
    let a = spec.column_center_azimuth(u);
    let e = spec.row_center_elevation(v);
    [e.cos() * a.cos(), e.cos() * a.sin(), e.sin()]
}

fn hit_rod(d: [f64; 3], rod: &Rod) -> Option<f64> {
    let a = d[0] * d[0] + d[1] * d[1];
    if a == 0.0 {
        return None;
    }
    let b = d[0] * rod.x + d[1] * rod.y;
    let c = rod.x * rod.x + rod.y * rod.y - rod.radius * rod.radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (b - disc.sqrt()) / a;
    let z = t * d[2];
    (t > 0.0 && z >= rod.z.0 && z <= rod.z.1).then_some(t)
}

/// Slab intersection with an oriented box.
pub fn hit_box(d: [f64; 3], b: &Box3D) -> Option<f64> {
    let (s, c) = b.yaw.sin_cos();
    let o = [-b.cx, -b.cy, -b.cz];
    let lo = [c * o[0] + s * o[1], -s * o[0] + c * o[1], o[2]];
    let ld = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]];
    let half = [b.length / 2.0, b.width / 2.0, b.height / 2.0];
    let (mut near, mut far) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if ld[k].abs() < 1e-15 {
            if lo[k].abs() > half[k] {
                return None;
            }
            continue;
        }
        let t1 = (-half[k] - lo[k]) / ld[k];
        let t2 = (half[k] - lo[k]) / ld[k];
        near = near.max(t1.min(t2));
        far = far.min(t1.max(t2));
    }
    (near <= far && near > 0.0).then_some(near)
}

/// Casts every pixel ray; returns points tagged `Ground` or `Obstacle`.
pub fn ray_cast<R: Rng + ?Sized>(desc: &SceneDescriptor, rng: &mut R) -> PointCloud {
    let spec = &desc.spec;
    let mut points = Vec::new();
    let mut tags = Vec::new();
    for u in 0..spec.width {
        for v in 0..spec.height {
            let d = ray(spec, u, v);
            let mut best: Option<(f64, Provenance)> = None;
            let mut offer = |t: f64, tag: Provenance| {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, tag));
                }
            };
            if let Some(g) = &desc.ground {
                if d[2] < 0.0 {
                    let t = g.z / d[2];
                    if t * (d[0] * d[0] + d[1] * d[1]).sqrt() <= g.extent {
                        offer(t, Provenance::Ground);
                    }
                }
            }
            for w in &desc.walls {
                let z = w.range * d[2];
                if w.covers(u) && z >= w.z.0 && z <= w.z.1 {
                    offer(w.range, Provenance::Obstacle);
                }
            }
            for r in &desc.rods {
                if let Some(t) = hit_rod(d, r) {
                    offer(t, Provenance::Obstacle);
                }
            }
            for b in &desc.parked {
                if let Some(t) = hit_box(d, b) {
                    offer(t, Provenance::Obstacle);
                }
            }
            let Some((t, tag)) = best else { continue };
            let mut p = Point::new(t * d[0], t * d[1], t * d[2], 0.0);
            match (tag, &desc.ground) {
                (Provenance::Ground, Some(g)) => {
                    if g.noise > 0.0 {
                        p.z += rng.gen_range(-g.noise..=g.noise);
                    }
                    p.intensity = rng.gen_range(0.0..0.2);
                }
                _ => p.intensity = rng.gen_range(0.2..1.0),
            }
            points.push(p);
            tags.push(tag);
        }
    }
    PointCloud::with_tags(points, tags)
}

/// Scene as a frame: the cloud keeps its exact provenance tags, and the
/// parked boxes become the annotations under the axis-permutation calib.
pub fn generate_synthetic_scene<R: Rng + ?Sized>(frame_id: &str, desc: &SceneDescriptor, rng: &mut R) -> FrameBundle {
    let cloud = ray_cast(desc, rng);
    let calib = Calib::axis_permutation();
    let labels = desc
        .parked
        .iter()
        .map(|b| lidar_box_to_label(b, &calib, &KittiLabel::sentinel(LabelType::from_class(b.class))))
        .collect();
    FrameBundle {
        frame_id: frame_id.to_string(),
        cloud,
        boxes: desc.parked.clone(),
        labels,
        dont_care: Vec::new(),
        calib,
    }
}

/// Typical (length, width, height) per class.
pub fn class_dims(class: ObjectClass) -> [f64; 3] {
    match class {
        ObjectClass::Car => [3.9, 1.6, 1.56],
        ObjectClass::Pedestrian => [0.8, 0.6, 1.73],
        ObjectClass::Cyclist => [1.76, 0.6, 1.73],
        ObjectClass::Other => [1.0, 1.0, 1.0],
    }
}

/// Box of `class` resting on the default ground at planar `range` and
/// `azimuth`, heading `yaw`.
pub fn object_box(class: ObjectClass, range: f64, azimuth: f64, yaw: f64) -> Box3D {
    let [l, w, h] = class_dims(class);
    Box3D::new([range * azimuth.cos(), range * azimuth.sin(), -SENSOR_HEIGHT + h / 2.0], [l, w, h], yaw, class)
}

/// Planar distance and azimuth bounds used when drawing random objects and
/// scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub range: (f64, f64),
    pub azimuth: (f64, f64),
}

impl Region {
    /// Forward quarter, where KITTI annotates objects.
    pub const FRONT: Region = Region { range: (6.0, 40.0), azimuth: (-std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4) };

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        (rng.gen_range(self.range.0..self.range.1), rng.gen_range(self.azimuth.0..self.azimuth.1))
    }
}

/// Database of `per_class` ray-cast objects of each insertable class.
pub fn synthetic_database<R: Rng + ?Sized>(spec: LidarSpec, per_class: usize, region: Region, rng: &mut R) -> GtDatabase {
    let mut builder = DatabaseBuilder::new(spec);
    for class in ObjectClass::INSERTABLE {
        for i in 0..per_class {
            let (range, az) = region.draw(rng);
            let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let b = object_box(class, range, az, yaw);
            let desc = SceneDescriptor { parked: vec![b], ..SceneDescriptor::empty(spec) };
            let cloud = ray_cast(&desc, rng);
            builder.add_frame(&format!("synth-{}-{i:04}", class.as_str().to_lowercase()), &cloud, &[b]);
        }
    }
    builder.finish()
}

/// Ground plus a frontal shell wall and a few rods and parked cars, all
/// drawn from `rng`. The wall covers a random arc of the forward quarter.
pub fn random_wall_scene<R: Rng + ?Sized>(spec: LidarSpec, rng: &mut R) -> SceneDescriptor {
    let mut desc = SceneDescriptor::with_ground(spec);
    let w = spec.width;
    let (flo, fhi) = spec.kitti_front_window();
    let arc = rng.gen_range(w / 16..=w / 6);
    let start = rng.gen_range(flo..=fhi.saturating_sub(arc).max(flo));
    desc.walls.push(ShellWall {
        range: rng.gen_range(5.0..12.0),
        cols: (start, (start + arc).min(w - 1)),
        z: (-SENSOR_HEIGHT + 0.05, rng.gen_range(0.5..2.5)),
    });
    for _ in 0..rng.gen_range(0..4) {
        let (r, a) = Region { range: (4.0, 30.0), azimuth: (-1.2, 1.2) }.draw(rng);
        desc.rods.push(Rod { x: r * a.cos(), y: r * a.sin(), radius: rng.gen_range(0.05..0.2), z: (-SENSOR_HEIGHT, 1.5) });
    }
    for _ in 0..rng.gen_range(0..3) {
        let (r, a) = Region { range: (6.0, 35.0), azimuth: (-2.5, 2.5) }.draw(rng);
        let b = object_box(ObjectClass::Car, r, a, rng.gen_range(-3.1..3.1));
        if !desc.parked.iter().any(|p| crate::placement::bev_overlap(p, &b)) {
            desc.parked.push(b);
        }
    }
    desc
}
