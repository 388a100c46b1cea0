//! Context-aware ground-truth insertion for lidar point clouds.
//!
//! Objects from a ground-truth database are inserted into a scan only where
//! the sensor could actually have seen them: the scene is split into ground
//! and obstacle points, every azimuth column records its nearest obstacle,
//! and each object is rotated about the sensor's vertical axis (keeping its
//! range, hence its point density) to a column window where enough of its
//! points would be unoccluded. Collisions with scene and previously inserted
//! boxes are rejected, and range-view occlusion strategies clean up the
//! merged cloud for range-image detectors.
//!
//! Typical flow: [`partition::partition_scene`] ->
//! [`partition::compute_validspace`] -> [`database::sample_objects`] ->
//! [`placement::location_check`] -> [`occlusion::resolve`]; the
//! [`pipeline`] module runs all of it per frame.

pub mod database;
pub mod geometry;
pub mod kitti;
pub mod manifest;
pub mod native;
pub mod occlusion;
pub mod partition;
pub mod pipeline;
pub mod placement;

mod fsutil;

pub use database::{GtDatabase, GtObject};
pub use geometry::{Box3D, LidarSpec, ObjectClass, Point, PointCloud, Provenance};
pub use partition::Validspace;
pub use pipeline::{augment_frame, AugConfig};
