//! Points, oriented boxes, z-axis rotations and the spherical range-image
//! projection shared by every other module.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack applied to inside-box tests so that points constructed on a box
/// boundary (e.g. from its own corners) still count as inside.
pub const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point at the sensor origin has no direction")]
    ZeroRange,
    #[error("invalid lidar spec: {0}")]
    InvalidSpec(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
}

/// Lidar-frame point: x forward, y left, z up, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    /// Euclidean distance from the sensor.
    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn planar_range(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }

    pub fn rotated_z(&self, dtheta: f64) -> Self {
        let (s, c) = dtheta.sin_cos();
        Self { x: c * self.x - s * self.y, y: s * self.x + c * self.y, ..*self }
    }
}

/// Where a point in a merged frame came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Ground,
    Obstacle,
    /// Point of an inserted database object; the payload is the frame-local
    /// insertion id.
    Inserted(u32),
}

impl Provenance {
    pub fn is_background(self) -> bool {
        !matches!(self, Provenance::Inserted(_))
    }

    pub fn inserted_id(self) -> Option<u32> {
        match self {
            Provenance::Inserted(id) => Some(id),
            _ => None,
        }
    }
}

/// Ordered point set with optional per-point provenance tags. When tags are
/// present there is exactly one per point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point>,
    tags: Option<Vec<Provenance>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points, tags: None }
    }

    /// Panics when the tag count differs from the point count.
    pub fn with_tags(points: Vec<Point>, tags: Vec<Provenance>) -> Self {
        assert_eq!(points.len(), tags.len(), "provenance tags must cover all points");
        Self { points, tags: Some(tags) }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [Point] {
        &mut self.points
    }

    pub fn tags(&self) -> Option<&[Provenance]> {
        self.tags.as_deref()
    }

    pub fn tag(&self, i: usize) -> Option<Provenance> {
        self.tags.as_ref().map(|t| t[i])
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn into_parts(self) -> (Vec<Point>, Option<Vec<Provenance>>) {
        (self.points, self.tags)
    }

    /// Drops provenance, keeping the points.
    pub fn strip_tags(mut self) -> Self {
        self.tags = None;
        self
    }

    /// Tags every point with the same provenance.
    pub fn tagged_all(self, tag: Provenance) -> Self {
        let n = self.points.len();
        Self { points: self.points, tags: Some(vec![tag; n]) }
    }

    /// Appends `other`. Both clouds must agree on whether they carry tags;
    /// an untagged cloud can only be appended to an empty one.
    pub fn extend(&mut self, other: &PointCloud) {
        match (&mut self.tags, &other.tags) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            (None, None) => {}
            (None, Some(b)) if self.points.is_empty() => self.tags = Some(b.clone()),
            _ => panic!("cannot merge tagged and untagged point clouds"),
        }
        self.points.extend_from_slice(&other.points);
    }

    /// Keeps the points whose mask entry is true, preserving order.
    pub fn select(&self, keep: &[bool]) -> Self {
        assert_eq!(keep.len(), self.points.len());
        let points = self
            .points
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(p, _)| *p)
            .collect();
        let tags = self.tags.as_ref().map(|t| {
            t.iter().zip(keep).filter(|(_, &k)| k).map(|(t, _)| *t).collect()
        });
        Self { points, tags }
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            tags: self.tags.as_ref().map(|t| indices.iter().map(|&i| t[i]).collect()),
        }
    }

    pub fn rotated_z(&self, dtheta: f64) -> Self {
        let (s, c) = dtheta.sin_cos();
        let points = self
            .points
            .iter()
            .map(|p| Point { x: c * p.x - s * p.y, y: s * p.x + c * p.y, ..*p })
            .collect();
        Self { points, tags: self.tags.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectClass {
    Car,
    Pedestrian,
    Cyclist,
    /// Annotated but not an insertion class (Van, Truck, Tram, ...). Still
    /// an obstacle for collision checks.
    Other,
}

impl ObjectClass {
    /// Classes the database stores and samples from.
    pub const INSERTABLE: [ObjectClass; 3] =
        [ObjectClass::Car, ObjectClass::Pedestrian, ObjectClass::Cyclist];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Car => "Car",
            ObjectClass::Pedestrian => "Pedestrian",
            ObjectClass::Cyclist => "Cyclist",
            ObjectClass::Other => "Other",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ObjectClass::Car,
            1 => ObjectClass::Pedestrian,
            2 => ObjectClass::Cyclist,
            3 => ObjectClass::Other,
            _ => return None,
        })
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "car" => Ok(ObjectClass::Car),
            "pedestrian" => Ok(ObjectClass::Pedestrian),
            "cyclist" => Ok(ObjectClass::Cyclist),
            "other" => Ok(ObjectClass::Other),
            _ => Err(format!("unknown object class `{s}`")),
        }
    }
}

/// KITTI difficulty bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    #[default]
    Unknown,
}

impl Difficulty {
    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Difficulty::Easy,
            1 => Difficulty::Moderate,
            2 => Difficulty::Hard,
            3 => Difficulty::Unknown,
            _ => return None,
        })
    }
}

/// Maps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Oriented 3D box in the lidar frame. `length` runs along the heading,
/// `yaw` is the heading about +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
    pub class: ObjectClass,
    pub difficulty: Difficulty,
}

impl Box3D {
    pub fn new(center: [f64; 3], dims: [f64; 3], yaw: f64, class: ObjectClass) -> Self {
        Self {
            cx: center[0],
            cy: center[1],
            cz: center[2],
            length: dims[0],
            width: dims[1],
            height: dims[2],
            yaw: normalize_angle(yaw),
            class,
            difficulty: Difficulty::Unknown,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let vals = [self.cx, self.cy, self.cz, self.length, self.width, self.height, self.yaw];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidBox("non-finite field".into()));
        }
        if self.length <= 0.0 || self.width <= 0.0 || self.height <= 0.0 {
            return Err(GeometryError::InvalidBox(format!(
                "dimensions must be positive, got {}x{}x{}",
                self.length, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Planar distance of the center from the sensor.
    pub fn center_range(&self) -> f64 {
        self.cx.hypot(self.cy)
    }

    pub fn rotated_z(&self, dtheta: f64) -> Self {
        let (s, c) = dtheta.sin_cos();
        Self {
            cx: c * self.cx - s * self.cy,
            cy: s * self.cx + c * self.cy,
            yaw: normalize_angle(self.yaw + dtheta),
            ..*self
        }
    }
}

/// Rigidly rotates an object's points and its box about the sensor z axis.
pub fn rotate_z(cloud: &PointCloud, bbox: &Box3D, dtheta: f64) -> (PointCloud, Box3D) {
    (cloud.rotated_z(dtheta), bbox.rotated_z(dtheta))
}

/// Bird's-eye-view corners, clockwise starting at front-left:
/// (+l/2, +w/2), (+l/2, -w/2), (-l/2, -w/2), (-l/2, +w/2) in the box frame.
pub fn bev_corners(b: &Box3D) -> [[f64; 2]; 4] {
    let (s, c) = b.yaw.sin_cos();
    let hl = b.length / 2.0;
    let hw = b.width / 2.0;
    [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)]
        .map(|(lx, ly)| [b.cx + c * lx - s * ly, b.cy + s * lx + c * ly])
}

fn to_box_frame(q: [f64; 2], b: &Box3D) -> [f64; 2] {
    let (s, c) = b.yaw.sin_cos();
    let dx = q[0] - b.cx;
    let dy = q[1] - b.cy;
    [c * dx + s * dy, -s * dx + c * dy]
}

/// Whether a planar point lies in the box footprint. Boundary counts as inside.
pub fn point_in_bev_box(q: [f64; 2], b: &Box3D) -> bool {
    let [lx, ly] = to_box_frame(q, b);
    lx.abs() <= b.length / 2.0 + BOUNDARY_EPS && ly.abs() <= b.width / 2.0 + BOUNDARY_EPS
}

/// Indices of the cloud points inside the box volume.
pub fn points_in_box_3d(cloud: &PointCloud, b: &Box3D) -> Vec<usize> {
    let half_h = b.height / 2.0 + BOUNDARY_EPS;
    cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| (p.z - b.cz).abs() <= half_h && point_in_bev_box([p.x, p.y], b))
        .map(|(i, _)| i)
        .collect()
}

/// Range-image geometry: `width` azimuth columns, `height` elevation rows and
/// the vertical field of view in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarSpec {
    pub width: usize,
    pub height: usize,
    pub fov_up: f64,
    pub fov_down: f64,
}

impl Default for LidarSpec {
    /// Velodyne HDL-64E as mounted on the KITTI car.
    fn default() -> Self {
        Self::from_degrees(2048, 64, 2.0, -24.8)
    }
}

impl LidarSpec {
    pub fn from_degrees(width: usize, height: usize, up_deg: f64, down_deg: f64) -> Self {
        Self { width, height, fov_up: up_deg.to_radians(), fov_down: down_deg.to_radians() }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidSpec("image size must be positive".into()));
        }
        if self.width > u32::MAX as usize || self.height > u32::MAX as usize {
            return Err(GeometryError::InvalidSpec("image size too large".into()));
        }
        if !(self.fov_up.is_finite() && self.fov_down.is_finite()) || self.fov_up <= self.fov_down {
            return Err(GeometryError::InvalidSpec("fov_up must exceed fov_down".into()));
        }
        Ok(())
    }

    /// Vertical field of view.
    pub fn fov(&self) -> f64 {
        self.fov_up - self.fov_down
    }

    /// Azimuth covered by one column.
    pub fn column_angle(&self) -> f64 {
        TAU / self.width as f64
    }

    /// Azimuth column of a point, ignoring elevation.
    pub fn column(&self, p: &Point) -> Result<usize, GeometryError> {
        if p.range() == 0.0 {
            return Err(GeometryError::ZeroRange);
        }
        Ok(self.column_of_azimuth(p.y.atan2(p.x)))
    }

    fn column_of_azimuth(&self, azimuth: f64) -> usize {
        let w = self.width as f64;
        let u = (0.5 * (1.0 - azimuth / PI) * w).floor();
        // u is in [0, W]; the W case is azimuth -pi which wraps to column 0
        (u as i64).rem_euclid(self.width as i64) as usize
    }

    /// Center azimuth of a column, inverse of the projection.
    pub fn column_center_azimuth(&self, u: usize) -> f64 {
        PI * (1.0 - 2.0 * (u as f64 + 0.5) / self.width as f64)
    }

    /// Center elevation of a row.
    pub fn row_center_elevation(&self, v: usize) -> f64 {
        self.fov_down + (1.0 - (v as f64 + 0.5) / self.height as f64) * self.fov()
    }

    /// Forward-facing column interval covering +/-45 degrees of azimuth, the
    /// camera field of view in which KITTI annotates objects.
    pub fn kitti_front_window(&self) -> (usize, usize) {
        (3 * self.width / 8, 5 * self.width / 8 - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub u: usize,
    pub v: usize,
}

/// Result of projecting a point into the range image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    InFov(Pixel),
    /// Elevation outside the vertical field of view; the column is still
    /// well defined.
    OutOfFov { u: usize },
}

impl Projection {
    pub fn column(&self) -> usize {
        match *self {
            Projection::InFov(px) => px.u,
            Projection::OutOfFov { u } => u,
        }
    }

    pub fn pixel(&self) -> Option<Pixel> {
        match *self {
            Projection::InFov(px) => Some(px),
            Projection::OutOfFov { .. } => None,
        }
    }
}

/// Spherical projection of a point into range-image pixel coordinates.
pub fn spherical_project(p: &Point, spec: &LidarSpec) -> Result<Projection, GeometryError> {
    let r = p.range();
    if r == 0.0 {
        return Err(GeometryError::ZeroRange);
    }
    let u = spec.column_of_azimuth(p.y.atan2(p.x));
    let elevation = (p.z / r).clamp(-1.0, 1.0).asin();
    let v = (1.0 - (elevation - spec.fov_down) / spec.fov()) * spec.height as f64;
    if (0.0..spec.height as f64).contains(&v) {
        Ok(Projection::InFov(Pixel { u, v: v.floor() as usize }))
    } else {
        Ok(Projection::OutOfFov { u })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, SQRT_2};

    fn kitti() -> LidarSpec {
        LidarSpec::default()
    }

    fn assert_close(a: [f64; 2], b: [f64; 2], tol: f64) {
        assert!((a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn forward_point_projects_to_center_column() {
        let p = Point::new(10.0, 0.0, 0.0, 0.0);
        let proj = spherical_project(&p, &kitti()).unwrap();
        assert_eq!(proj, Projection::InFov(Pixel { u: 1024, v: 4 }));
    }

    #[test]
    fn backward_point_projects_to_column_zero() {
        let p = Point::new(-10.0, -0.0, 0.0, 0.0);
        assert_eq!(spherical_project(&p, &kitti()).unwrap().column(), 0);
        // just past the seam on the negative side is the last column
        let p = Point::new(-10.0, -1e-12, 0.0, 0.0);
        assert_eq!(spherical_project(&p, &kitti()).unwrap().column(), 2047);
        let p = Point::new(-10.0, 1e-12, 0.0, 0.0);
        assert_eq!(spherical_project(&p, &kitti()).unwrap().column(), 0);
    }

    #[test]
    fn zero_range_is_an_error() {
        let p = Point::default();
        assert_eq!(spherical_project(&p, &kitti()), Err(GeometryError::ZeroRange));
    }

    #[test]
    fn steep_points_are_out_of_fov() {
        let up = Point::new(1.0, 0.0, 5.0, 0.0);
        let down = Point::new(1.0, 0.0, -5.0, 0.0);
        assert_eq!(spherical_project(&up, &kitti()).unwrap(), Projection::OutOfFov { u: 1024 });
        assert_eq!(spherical_project(&down, &kitti()).unwrap(), Projection::OutOfFov { u: 1024 });
    }

    #[test]
    fn column_centers_invert_projection() {
        let spec = kitti();
        for u in [0, 1, 511, 1023, 1024, 2047] {
            let a = spec.column_center_azimuth(u);
            let p = Point::new(a.cos(), a.sin(), 0.0, 0.0);
            assert_eq!(spec.column(&p).unwrap(), u);
        }
        for v in 0..spec.height {
            let e = spec.row_center_elevation(v);
            let p = Point::new(e.cos(), 0.0, e.sin(), 0.0);
            assert_eq!(spherical_project(&p, &spec).unwrap().pixel().unwrap().v, v);
        }
    }

    #[test]
    fn rotate_identity_and_quarter_turn() {
        let cloud = PointCloud::new(vec![Point::new(1.0, 0.0, 0.0, 0.3)]);
        let b = Box3D::new([1.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0, ObjectClass::Car);
        let (c0, b0) = rotate_z(&cloud, &b, 0.0);
        assert_eq!(c0, cloud);
        assert_eq!(b0, b);
        let (c1, b1) = rotate_z(&cloud, &b, FRAC_PI_2);
        let p = c1.points()[0];
        assert!(p.x.abs() < 1e-15 && (p.y - 1.0).abs() < 1e-15 && p.z == 0.0);
        assert!((b1.yaw - FRAC_PI_2).abs() < 1e-15);
        assert!((b1.cy - 1.0).abs() < 1e-15);
    }

    #[test]
    fn yaw_is_normalized_after_rotation() {
        let b = Box3D::new([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 3.0, ObjectClass::Car);
        let r = b.rotated_z(1.0);
        assert!((r.yaw - (4.0 - TAU)).abs() < 1e-12);
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
    }

    #[test]
    fn corners_axis_aligned() {
        let b = Box3D::new([0.0, 0.0, 0.0], [2.0, 2.0, 1.0], 0.0, ObjectClass::Car);
        assert_eq!(bev_corners(&b), [[1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn corners_quarter_turn_swap_extent() {
        let b = Box3D::new([0.0, 0.0, 0.0], [4.0, 2.0, 1.0], FRAC_PI_2, ObjectClass::Car);
        let cs = bev_corners(&b);
        let max_x = cs.iter().map(|c| c[0].abs()).fold(0.0, f64::max);
        let max_y = cs.iter().map(|c| c[1].abs()).fold(0.0, f64::max);
        assert!((max_x - 1.0).abs() < 1e-12 && (max_y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn corners_diamond() {
        let b = Box3D::new([1.0, 1.0, 0.0], [2.0, 2.0, 1.0], FRAC_PI_4, ObjectClass::Car);
        let cs = bev_corners(&b);
        let expected = [[1.0, 1.0 + SQRT_2], [1.0 + SQRT_2, 1.0], [1.0, 1.0 - SQRT_2], [1.0 - SQRT_2, 1.0]];
        for c in cs {
            assert!(expected.iter().any(|e| (e[0] - c[0]).abs() < 1e-12 && (e[1] - c[1]).abs() < 1e-12));
        }
        // clockwise winding: signed area negative
        let area: f64 = (0..4)
            .map(|i| {
                let (a, b) = (cs[i], cs[(i + 1) % 4]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum();
        assert!((area / 2.0 + 4.0).abs() < 1e-12);
    }

    #[test]
    fn point_in_box_cases() {
        let b = Box3D::new([3.0, -2.0, 0.0], [4.0, 1.5, 1.0], FRAC_PI_3, ObjectClass::Car);
        assert!(point_in_bev_box([b.cx, b.cy], &b));
        assert!(!point_in_bev_box([b.cx + b.length + b.width, b.cy], &b));
        let cs = bev_corners(&b);
        for i in 0..4 {
            let (a, c) = (cs[i], cs[(i + 1) % 4]);
            let mid = [(a[0] + c[0]) / 2.0, (a[1] + c[1]) / 2.0];
            assert!(point_in_bev_box(mid, &b), "edge {i} midpoint");
        }
        assert_close(cs[0], cs[0], 0.0);
    }

    #[test]
    fn points_in_box_vertical_bound() {
        let b = Box3D::new([5.0, 0.0, 0.0], [2.0, 2.0, 1.0], 0.3, ObjectClass::Pedestrian);
        let cloud = PointCloud::new(vec![
            Point::new(5.0, 0.0, 0.0, 0.0),
            Point::new(5.0, 0.0, 2.0, 0.0),
            Point::new(5.0, 0.0, 0.5, 0.0),
        ]);
        assert_eq!(points_in_box_3d(&cloud, &b), vec![0, 2]);
    }

    #[test]
    fn invalid_specs_and_boxes_rejected() {
        assert!(LidarSpec { width: 0, ..kitti() }.validate().is_err());
        assert!(LidarSpec::from_degrees(10, 10, -5.0, 2.0).validate().is_err());
        assert!(kitti().validate().is_ok());
        let b = Box3D::new([0.0; 3], [0.0, 1.0, 1.0], 0.0, ObjectClass::Car);
        assert!(b.validate().is_err());
    }

    #[test]
    fn select_keeps_tags_aligned() {
        let cloud = PointCloud::with_tags(
            vec![Point::new(1.0, 0.0, 0.0, 0.0), Point::new(2.0, 0.0, 0.0, 0.0)],
            vec![Provenance::Ground, Provenance::Inserted(4)],
        );
        let s = cloud.select(&[false, true]);
        assert_eq!(s.len(), 1);
        assert_eq!(s.tag(0), Some(Provenance::Inserted(4)));
    }
}
