//! Per-frame augmentation manifest: what was inserted where, with enough of
//! the placement state to re-check every invariant after the fact.

use serde::{Deserialize, Serialize};

use crate::geometry::{Box3D, ObjectClass};
use crate::occlusion::Strategy;
use crate::partition::Validspace;
use crate::placement::{PlacementConfig, RejectReason};

pub const MANIFEST_FORMAT: &str = "caaug-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertedRecord {
    /// Frame-local insertion id, the payload of `Provenance::Inserted`.
    pub insert_id: u32,
    pub db_id: u64,
    pub class: ObjectClass,
    pub source_frame: String,
    pub dtheta: f64,
    pub original_start_col: usize,
    pub start_col: usize,
    pub rangebin: Vec<u32>,
    pub rate: f64,
    pub original_box: Box3D,
    /// Box after rotation, before global augmentation.
    pub placed_box: Box3D,
    pub points: usize,
    pub dropped: bool,
    /// Index into the output label file; `None` when culled.
    pub label_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub db_id: u64,
    pub class: ObjectClass,
    pub reason: RejectReason,
}

/// Similarity applied to the whole frame after insertion: rotate about z,
/// then mirror y if `flip`, then scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalTransform {
    pub rotation: f64,
    pub flip: bool,
    pub scale: f64,
}

impl GlobalTransform {
    pub const IDENTITY: GlobalTransform = GlobalTransform { rotation: 0.0, flip: false, scale: 1.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub frame_id: String,
    pub master_seed: u64,
    pub frame_seed: u64,
    pub strategy: String,
    pub placement: PlacementConfig,
    pub min_points: usize,
    pub min_fraction: f64,
    /// Number of non-DontCare labels of the input frame; they come first in
    /// the output label file.
    pub scene_labels: usize,
    /// Scene obstacle ranges before any insertion.
    pub validspace: Validspace,
    pub inserted: Vec<InsertedRecord>,
    pub rejected: Vec<RejectedRecord>,
    pub global: GlobalTransform,
    /// Inserted labels carry sentinel truncation/occlusion/alpha/2D box.
    pub label_sentinels: bool,
}

impl Manifest {
    pub fn strategy(&self) -> Option<Strategy> {
        self.strategy.parse().ok()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
