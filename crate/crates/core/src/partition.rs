//! Ground/obstacle split by pillar height span, and the per-column
//! nearest-obstacle range vector ("Validspace") derived from it.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LidarSpec, PointCloud};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("cannot partition an empty point cloud")]
    EmptyCloud,
    #[error("invalid partition parameter: {0}")]
    InvalidParameter(String),
}

/// Vertical extent of one d x d cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pillar {
    pub min_z: f64,
    pub max_z: f64,
    pub count: usize,
}

impl Pillar {
    pub fn span(&self) -> f64 {
        self.max_z - self.min_z
    }
}

/// Pillars in first-seen order plus the pillar of every point.
#[derive(Debug, Clone)]
pub struct PillarGrid {
    pub cell_size: f64,
    pub pillars: Vec<Pillar>,
    pub point_pillar: Vec<usize>,
}

impl PillarGrid {
    pub fn cell_of(cell_size: f64, x: f64, y: f64) -> (i64, i64) {
        ((x / cell_size).floor() as i64, (y / cell_size).floor() as i64)
    }

    pub fn build(cloud: &PointCloud, cell_size: f64) -> Self {
        let mut index: FxHashMap<(i64, i64), usize> = FxHashMap::default();
        let mut pillars: Vec<Pillar> = Vec::new();
        let mut point_pillar = Vec::with_capacity(cloud.len());
        for p in cloud.points() {
            let k = *index.entry(Self::cell_of(cell_size, p.x, p.y)).or_insert_with(|| {
                pillars.push(Pillar { min_z: p.z, max_z: p.z, count: 0 });
                pillars.len() - 1
            });
            let c = &mut pillars[k];
            c.min_z = c.min_z.min(p.z);
            c.max_z = c.max_z.max(p.z);
            c.count += 1;
            point_pillar.push(k);
        }
        Self { cell_size, pillars, point_pillar }
    }
}

/// Disjoint obstacle/ground index sets covering a frame. Both lists are
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Partition {
    pub obstacle: Vec<usize>,
    pub ground: Vec<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.obstacle.len() + self.ground.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-point obstacle flag.
    pub fn obstacle_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for &i in &self.obstacle {
            mask[i] = true;
        }
        mask
    }
}

/// Marks every point of a pillar whose z span exceeds `sigma` as obstacle.
pub fn partition_scene(cloud: &PointCloud, d: f64, sigma: f64) -> Result<Partition, PartitionError> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(PartitionError::InvalidParameter(format!("pillar size must be positive, got {d}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(PartitionError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if cloud.is_empty() {
        return Err(PartitionError::EmptyCloud);
    }
    let grid = PillarGrid::build(cloud, d);
    let tall: Vec<bool> = grid.pillars.iter().map(|p| p.span() > sigma).collect();
    let is_obstacle = grid.point_pillar.iter().map(|&k| tall[k]);
    let (mut obstacle, mut ground) = (Vec::new(), Vec::new());
    for (i, o) in is_obstacle.into_iter().enumerate() {
        if o {
            obstacle.push(i);
        } else {
            ground.push(i);
        }
    }
    Ok(Partition { obstacle, ground })
}

/// Per-column nearest obstacle range; `f64::INFINITY` marks a column with no
/// obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validspace {
    pub spec: LidarSpec,
    #[serde(with = "inf_as_null")]
    pub ranges: Vec<f64>,
}

impl Validspace {
    pub fn unobstructed(spec: LidarSpec) -> Self {
        Self { spec, ranges: vec![f64::INFINITY; spec.width] }
    }

    pub fn width(&self) -> usize {
        self.ranges.len()
    }

    pub fn get(&self, col: usize) -> f64 {
        self.ranges[col % self.ranges.len()]
    }
}

/// JSON has no infinity; obstacle-free columns are written as `null`.
mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| if x.is_finite() { Some(*x) } else { None })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

/// Minimum obstacle range per azimuth column. Elevation is ignored: points
/// above or below the vertical field of view still bound their column.
pub fn compute_validspace(cloud: &PointCloud, partition: &Partition, spec: &LidarSpec) -> Validspace {
    let mut vs = Validspace::unobstructed(*spec);
    for &i in &partition.obstacle {
        let p = &cloud.points()[i];
        let r = p.range();
        if let Ok(u) = spec.column(p) {
            if r < vs.ranges[u] {
                vs.ranges[u] = r;
            }
        }
    }
    vs
}
