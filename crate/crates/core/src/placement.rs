//! Location search for inserted objects: per-column feasibility against the
//! scene's obstacle ranges, rotation about the sensor axis to a feasible
//! column, and bird's-eye-view collision avoidance.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::database::GtObject;
use crate::geometry::{bev_corners, point_in_bev_box, Box3D, LidarSpec, PointCloud, BOUNDARY_EPS};
use crate::partition::Validspace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("validspace has {validspace} columns but objects were binned with {objects}")]
    SpecMismatch { validspace: usize, objects: usize },
    #[error("invalid placement config: {0}")]
    InvalidConfig(String),
}

/// Which side of the far edge an obstacle must be on for a column to count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OcclusionTest {
    /// Column counts when its nearest obstacle lies beyond the box far edge,
    /// i.e. r_j is the unoccluded point fraction.
    #[default]
    Unoccluded,
    /// Column counts when the nearest obstacle is nearer than the far edge.
    Literal,
}

/// How candidate start columns are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScanMode {
    /// Every column, windows wrapping around the seam.
    #[default]
    Circular,
    /// Start columns 0..=W-l_g only; no window crosses the seam.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CollisionMode {
    /// Corner-in-box test applied in both directions.
    #[default]
    PaperCorners,
    /// Exact convex-polygon overlap via separating axes.
    StrictPolygon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PlacementStrategy {
    /// Rotate each object to a randomly drawn feasible column.
    #[default]
    Rotate,
    /// Keep the original pose, but only if it is feasible.
    FilterInPlace,
    /// Keep the original pose unconditionally (collisions still rejected).
    OriginalPose,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $(<$ty>::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok(<$ty>::$variant),)+
                    _ => Err(format!("unknown value `{s}`")),
                }
            }
        }
    };
}

text_enum!(OcclusionTest { Unoccluded => "unoccluded", Literal => "literal" });
text_enum!(ScanMode { Circular => "circular", Linear => "linear" });
text_enum!(CollisionMode { PaperCorners => "paper-corners", StrictPolygon => "strict-polygon" });
text_enum!(PlacementStrategy { Rotate => "rotate", FilterInPlace => "filter", OriginalPose => "original" });

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementConfig {
    /// Feasibility threshold; a column is feasible when r_j > threshold.
    pub threshold: f64,
    /// Collision tests allowed per object before giving up; `None` tries
    /// every feasible column.
    pub max_angle_retries: Option<usize>,
    /// Inclusive column interval the whole object must fall in.
    pub window: Option<(usize, usize)>,
    /// Lower the covered columns to the placed center range after each
    /// acceptance. Implies near-to-far ordering.
    pub update_validspace: bool,
    pub near_to_far: bool,
    pub scan: ScanMode,
    pub occlusion_test: OcclusionTest,
    pub collision: CollisionMode,
    pub strategy: PlacementStrategy,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            threshold: 0.8,
            max_angle_retries: None,
            window: None,
            update_validspace: false,
            near_to_far: false,
            scan: ScanMode::Circular,
            occlusion_test: OcclusionTest::Unoccluded,
            collision: CollisionMode::PaperCorners,
            strategy: PlacementStrategy::Rotate,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self, spec: &LidarSpec) -> Result<(), PlacementError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(PlacementError::InvalidConfig(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if let Some((lo, hi)) = self.window {
            if lo > hi || hi >= spec.width {
                return Err(PlacementError::InvalidConfig(format!(
                    "window [{lo}, {hi}] not inside [0, {})",
                    spec.width
                )));
            }
        }
        Ok(())
    }
}

/// Planar center range plus half the box length: the farthest the object
/// reaches from the sensor along its heading.
pub fn far_edge(b: &Box3D) -> f64 {
    b.center_range() + b.length / 2.0
}

fn column_mask(vs: &Validspace, edge: f64, test: OcclusionTest) -> Vec<bool> {
    vs.ranges
        .iter()
        .map(|&v| match test {
            OcclusionTest::Unoccluded => v > edge,
            OcclusionTest::Literal => v < edge,
        })
        .collect()
}

fn rate_at(mask: &[bool], rangebin: &[u32], total: u64, start: usize) -> f64 {
    let w = mask.len();
    let hit: u64 = rangebin
        .iter()
        .enumerate()
        .filter(|&(t, _)| mask[(start + t) % w])
        .map(|(_, &c)| c as u64)
        .sum();
    hit as f64 / total as f64
}

/// Feasibility rate r_j of an object for every start column j (circular).
pub fn feasibility_vector(vs: &Validspace, rangebin: &[u32], edge: f64, test: OcclusionTest) -> Vec<f64> {
    let total: u64 = rangebin.iter().map(|&c| c as u64).sum();
    let mask = column_mask(vs, edge, test);
    (0..vs.width()).map(|j| rate_at(&mask, rangebin, total, j)).collect()
}

/// Feasibility rate of `obj` when its rangebin starts at `start`.
pub fn feasibility_at(vs: &Validspace, obj: &GtObject, start: usize, test: OcclusionTest) -> f64 {
    let mask = column_mask(vs, far_edge(&obj.bbox), test);
    rate_at(&mask, &obj.rangebin, obj.point_count(), start)
}

fn sat_separated(a: &[[f64; 2]; 4], b: &[[f64; 2]; 4]) -> bool {
    for poly in [a, b] {
        for i in 0..4 {
            let (p, q) = (poly[i], poly[(i + 1) % 4]);
            let axis = [q[1] - p[1], p[0] - q[0]];
            let project = |pts: &[[f64; 2]; 4]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    let d = c[0] * axis[0] + c[1] * axis[1];
                    (lo.min(d), hi.max(d))
                })
            };
            let (amin, amax) = project(a);
            let (bmin, bmax) = project(b);
            let norm = axis[0].hypot(axis[1]);
            if amax < bmin - BOUNDARY_EPS * norm || bmax < amin - BOUNDARY_EPS * norm {
                return true;
            }
        }
    }
    false
}

/// Whether two bird's-eye-view rectangles overlap, by separating axes.
/// Touching counts as overlap.
pub fn bev_overlap(a: &Box3D, b: &Box3D) -> bool {
    !sat_separated(&bev_corners(a), &bev_corners(b))
}

/// Whether any corner of either box lies inside the other.
pub fn corners_collide(a: &Box3D, b: &Box3D) -> bool {
    bev_corners(a).iter().any(|&c| point_in_bev_box(c, b)) || bev_corners(b).iter().any(|&c| point_in_bev_box(c, a))
}

pub fn collision_check(candidate: &Box3D, placed: &[Box3D], mode: CollisionMode) -> bool {
    placed.iter().any(|p| match mode {
        CollisionMode::PaperCorners => corners_collide(candidate, p),
        CollisionMode::StrictPolygon => bev_overlap(candidate, p),
    })
}

/// Rotation angle that moves an object's rangebin from `from` to `to`,
/// taking the short way around.
pub fn column_shift_angle(from: usize, to: usize, spec: &LidarSpec) -> f64 {
    let w = spec.width as i64;
    let mut k = (from as i64 - to as i64).rem_euclid(w);
    if k > w / 2 {
        k -= w;
    }
    k as f64 * TAU / w as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rotated {
    pub dtheta: f64,
    pub bbox: Box3D,
    pub points: PointCloud,
}

/// Rotates an object so that its rangebin starts at `target` column.
pub fn rotate_to_column(obj: &GtObject, target: usize, spec: &LidarSpec) -> Rotated {
    let dtheta = column_shift_angle(obj.start_col, target, spec);
    if dtheta == 0.0 {
        return Rotated { dtheta, bbox: obj.bbox, points: obj.points.clone() };
    }
    Rotated { dtheta, bbox: obj.bbox.rotated_z(dtheta), points: obj.points.rotated_z(dtheta) }
}

/// Lowers `span` columns starting at `start` (circularly) to `range`.
/// Columns already blocked nearer than `range` keep their value.
pub fn update_validspace(vs: &mut Validspace, range: f64, start: usize, span: usize) {
    let w = vs.width();
    for t in 0..span.min(w) {
        let v = &mut vs.ranges[(start + t) % w];
        *v = v.min(range);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    NoFeasibleColumn,
    AllCollide,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::NoFeasibleColumn => "no-feasible-column",
            RejectReason::AllCollide => "all-collide",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedObject<'a> {
    pub object: &'a GtObject,
    pub dtheta: f64,
    pub start_col: usize,
    /// Feasibility rate at `start_col` against the validspace in effect
    /// when the object was placed.
    pub rate: f64,
    pub bbox: Box3D,
    pub points: PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedObject<'a> {
    pub object: &'a GtObject,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlacementResult<'a> {
    pub accepted: Vec<PlacedObject<'a>>,
    pub rejected: Vec<RejectedObject<'a>>,
}

fn allowed_starts(span: usize, spec: &LidarSpec, config: &PlacementConfig) -> Vec<usize> {
    let w = spec.width;
    if span > w {
        return Vec::new();
    }
    let last = match config.scan {
        ScanMode::Circular => w - 1,
        ScanMode::Linear => w - span,
    };
    let (lo, hi) = match config.window {
        Some((lo, hi)) => {
            if hi + 1 < lo + span {
                return Vec::new();
            }
            (lo, (hi + 1 - span).min(last))
        }
        None => (0, last),
    };
    (lo..=hi).collect()
}

/// Places candidates one at a time: collect the feasible start columns,
/// draw one uniformly, rotate there, and keep it unless it collides with a
/// scene box or an earlier acceptance (in which case that column is
/// discarded and another drawn).
pub fn location_check<'a, R: Rng + ?Sized>(
    validspace: &Validspace,
    candidates: &[&'a GtObject],
    existing: &[Box3D],
    config: &PlacementConfig,
    spec: &LidarSpec,
    rng: &mut R,
) -> Result<PlacementResult<'a>, PlacementError> {
    if validspace.width() != spec.width {
        return Err(PlacementError::SpecMismatch { validspace: validspace.width(), objects: spec.width });
    }
    config.validate(spec)?;
    let mut order: Vec<&GtObject> = candidates.to_vec();
    if config.near_to_far || config.update_validspace {
        order.sort_by(|a, b| a.bbox.center_range().total_cmp(&b.bbox.center_range()));
    }
    let mut vs = validspace.clone();
    let mut boxes: Vec<Box3D> = existing.to_vec();
    let mut result = PlacementResult::default();

    for obj in order {
        let mask = column_mask(&vs, far_edge(&obj.bbox), config.occlusion_test);
        let total = obj.point_count();
        let rate = |c: usize| rate_at(&mask, &obj.rangebin, total, c);
        let mut columns: Vec<usize> = match config.strategy {
            PlacementStrategy::Rotate => allowed_starts(obj.span(), spec, config)
                .into_iter()
                .filter(|&c| rate(c) > config.threshold)
                .collect(),
            PlacementStrategy::FilterInPlace => {
                if rate(obj.start_col) > config.threshold {
                    vec![obj.start_col]
                } else {
                    vec![]
                }
            }
            PlacementStrategy::OriginalPose => vec![obj.start_col],
        };
        if columns.is_empty() {
            result.rejected.push(RejectedObject { object: obj, reason: RejectReason::NoFeasibleColumn });
            continue;
        }
        let mut tries = 0usize;
        let mut placed = None;
        while !columns.is_empty() && config.max_angle_retries.is_none_or(|m| tries < m) {
            tries += 1;
            let pick = rng.gen_range(0..columns.len());
            let col = columns[pick];
            let dtheta = column_shift_angle(obj.start_col, col, spec);
            let bbox = if dtheta == 0.0 { obj.bbox } else { obj.bbox.rotated_z(dtheta) };
            if collision_check(&bbox, &boxes, config.collision) {
                columns.swap_remove(pick);
            } else {
                placed = Some(col);
                break;
            }
        }
        let Some(col) = placed else {
            result.rejected.push(RejectedObject { object: obj, reason: RejectReason::AllCollide });
            continue;
        };
        let rotated = rotate_to_column(obj, col, spec);
        boxes.push(rotated.bbox);
        if config.update_validspace {
            update_validspace(&mut vs, rotated.bbox.center_range(), col, obj.span());
        }
        result.accepted.push(PlacedObject {
            object: obj,
            dtheta: rotated.dtheta,
            start_col: col,
            rate: rate(col),
            bbox: rotated.bbox,
            points: rotated.points,
        });
    }
    Ok(result)
}
