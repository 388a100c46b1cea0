//! Per-frame augmentation: partition, validspace, sampling, location check,
//! merge, occlusion resolution, then whole-frame global transforms.
//!
//! Output tree written by [`augment_dataset`]:
//!
//! ```text
//! <out>/config.txt             effective config (worker count zeroed)
//! <out>/velodyne/<id>.bin      augmented cloud, KITTI layout
//! <out>/label_2/<id>.txt       scene labels, then inserted labels, then DontCare
//! <out>/calib/<id>.txt         input calib, unchanged
//! <out>/manifest/<id>.json     placement record
//! <out>/resolved/<id>.frame    tagged cloud and boxes before global transforms
//! <out>/stats/<id>.stats       deterministic frame statistics
//! <out>/stats/<id>.timing      per-stage wall-clock times
//! ```

pub mod config;
pub mod global;
pub mod render;
pub mod rng;
pub mod stats;
pub mod synthetic;
pub mod validate;

use std::collections::BTreeSet;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

pub use config::{AugConfig, ConfigError, GlobalAugParams};
pub use stats::FrameStats;

use crate::database::{sample_objects, DatabaseError, GtDatabase};
use crate::geometry::{LidarSpec, PointCloud, Provenance};
use crate::kitti::{read_frame, write_frame, FrameBundle, KittiError, KittiLabel, KittiLayout, LabelType};
use crate::manifest::{InsertedRecord, Manifest, RejectedRecord, MANIFEST_FORMAT};
use crate::native::NativeFrame;
use crate::occlusion::{resolve, OcclusionError, OcclusionReport};
use crate::partition::{compute_validspace, partition_scene, Partition, PartitionError};
use crate::placement::{location_check, PlacementError};
use rng::{stage_rng, Stage};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("database spec {db:?} differs from config spec {config:?}")]
    SpecMismatch { db: LidarSpec, config: LidarSpec },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Occlusion(#[from] OcclusionError),
    #[error(transparent)]
    Kitti(#[from] KittiError),
    #[error(transparent)]
    Database(#[from] DatabaseError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error("frame {frame}: {source}")]
    Frame { frame: String, source: Box<PipelineError> },
}

/// Everything one frame's augmentation produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    /// Final frame: transformed, provenance stripped, labels merged.
    pub bundle: FrameBundle,
    /// Tagged cloud and boxes after occlusion resolution, before global
    /// transforms.
    pub resolved: NativeFrame,
    pub manifest: Manifest,
    pub stats: FrameStats,
}

struct Timer {
    last: Instant,
    laps: Vec<(String, Duration)>,
}

impl Timer {
    fn new() -> Self {
        Self { last: Instant::now(), laps: Vec::new() }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.laps.push((stage.to_string(), now - self.last));
        self.last = now;
    }

    fn finish(mut self) -> Vec<(String, Duration)> {
        let total = self.laps.iter().map(|(_, d)| *d).sum();
        self.laps.push(("total".into(), total));
        self.laps
    }
}

/// Augments one frame. Input provenance tags, if any, are ignored; the
/// scene is re-partitioned. When no object is accepted the scene cloud is
/// passed through without occlusion resolution.
pub fn augment_frame(
    bundle: &FrameBundle,
    db: &GtDatabase,
    config: &AugConfig,
    frame_seed: u64,
) -> Result<Augmented, PipelineError> {
    config.validate()?;
    if db.spec != config.spec {
        return Err(PipelineError::SpecMismatch { db: db.spec, config: config.spec });
    }
    let spec = &config.spec;
    let mut timer = Timer::new();

    let scene = bundle.cloud.clone().strip_tags();
    let partition = if scene.is_empty() {
        Partition::default()
    } else {
        partition_scene(&scene, config.pillar_size, config.sigma)?
    };
    timer.lap("partition");
    let validspace = compute_validspace(&scene, &partition, spec);
    timer.lap("validspace");
    let candidates = sample_objects(db, &config.counts, &mut stage_rng(frame_seed, Stage::Sample));
    timer.lap("sample");
    let placement = location_check(
        &validspace,
        &candidates,
        &bundle.boxes,
        &config.placement,
        spec,
        &mut stage_rng(frame_seed, Stage::Place),
    )?;
    timer.lap("placement");

    let mut tags = vec![Provenance::Ground; scene.len()];
    for &i in &partition.obstacle {
        tags[i] = Provenance::Obstacle;
    }
    let mut merged = PointCloud::with_tags(scene.into_points(), tags);
    for (k, p) in placement.accepted.iter().enumerate() {
        merged.extend(&p.points.clone().tagged_all(Provenance::Inserted(k as u32)));
    }
    timer.lap("merge");
    let (resolved, report) = if placement.accepted.is_empty() {
        (merged, OcclusionReport { strategy: config.strategy, ..Default::default() })
    } else {
        resolve(&merged, spec, config.strategy, &config.culling)?
    };
    timer.lap("occlusion");

    let dropped: BTreeSet<u32> = report.dropped().collect();
    let mut boxes = bundle.boxes.clone();
    let mut labels = bundle.labels.clone();
    let mut inserted = Vec::with_capacity(placement.accepted.len());
    for (k, p) in placement.accepted.iter().enumerate() {
        let is_dropped = dropped.contains(&(k as u32));
        let label_index = (!is_dropped).then(|| {
            boxes.push(p.bbox);
            labels.push(KittiLabel::sentinel(LabelType::from_class(p.bbox.class)));
            boxes.len() - 1
        });
        inserted.push(InsertedRecord {
            insert_id: k as u32,
            db_id: p.object.id,
            class: p.object.class(),
            source_frame: p.object.source_frame.clone(),
            dtheta: p.dtheta,
            original_start_col: p.object.start_col,
            start_col: p.start_col,
            rangebin: p.object.rangebin.clone(),
            rate: p.rate,
            original_box: p.object.bbox,
            placed_box: p.bbox,
            points: p.points.len(),
            dropped: is_dropped,
            label_index,
        });
    }
    let rejected: Vec<RejectedRecord> = placement
        .rejected
        .iter()
        .map(|r| RejectedRecord { db_id: r.object.id, class: r.object.class(), reason: r.reason })
        .collect();

    let transform = global::draw(&config.global, &mut stage_rng(frame_seed, Stage::Global));
    let out_cloud = global::apply_cloud(&transform, &resolved).strip_tags();
    let out_boxes = boxes.iter().map(|b| global::apply_box(&transform, b)).collect();
    timer.lap("global");

    let out = FrameBundle {
        frame_id: bundle.frame_id.clone(),
        cloud: out_cloud,
        boxes: out_boxes,
        labels,
        dont_care: bundle.dont_care.clone(),
        calib: bundle.calib.clone(),
    };
    let mut rejected_hist = std::collections::BTreeMap::new();
    for r in &rejected {
        *rejected_hist.entry(r.reason).or_insert(0) += 1;
    }
    let stats = FrameStats {
        frame_id: bundle.frame_id.clone(),
        candidates: candidates.len(),
        accepted: inserted.len(),
        rejected: rejected_hist,
        rates: inserted.iter().map(|r| (r.insert_id, r.rate)).collect(),
        occlusion: report,
        timings: timer.finish(),
    };
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        frame_id: bundle.frame_id.clone(),
        master_seed: config.seed,
        frame_seed,
        strategy: config.strategy.to_string(),
        placement: config.placement,
        min_points: config.culling.min_points,
        min_fraction: config.culling.min_fraction,
        scene_labels: bundle.labels.len(),
        validspace,
        inserted,
        rejected,
        global: transform,
        label_sentinels: true,
    };
    let resolved = NativeFrame { spec: *spec, frame_id: bundle.frame_id.clone(), cloud: resolved, boxes };
    Ok(Augmented { bundle: out, resolved, manifest, stats })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| PipelineError::Pool(e.to_string()))
}

/// Augments in-memory frames on `config.workers` threads (0 = one per
/// core). Results are in input order and independent of the worker count.
pub fn augment_bundles(
    bundles: &[FrameBundle],
    db: &GtDatabase,
    config: &AugConfig,
) -> Result<Vec<Augmented>, PipelineError> {
    pool(config.workers)?.install(|| {
        bundles
            .par_iter()
            .map(|b| {
                augment_frame(b, db, config, rng::frame_seed(config.seed, &b.frame_id))
                    .map_err(|e| PipelineError::Frame { frame: b.frame_id.clone(), source: Box::new(e) })
            })
            .collect()
    })
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<(), PipelineError> {
    crate::fsutil::write_atomic(&path, bytes).map_err(|source| PipelineError::Io { path, source })
}

/// Writes one augmented frame into the output tree.
pub fn write_augmented(aug: &Augmented, out_dir: &Path) -> Result<(), PipelineError> {
    let id = &aug.bundle.frame_id;
    write_file(out_dir.join("resolved").join(format!("{id}.frame")), &aug.resolved.encode())?;
    write_file(out_dir.join("stats").join(format!("{id}.stats")), aug.stats.to_text().as_bytes())?;
    write_file(out_dir.join("stats").join(format!("{id}.timing")), aug.stats.timings_text().as_bytes())?;
    write_frame(&aug.bundle, Some(&aug.manifest), out_dir)?;
    Ok(())
}

/// Reads, augments and writes every listed frame of a KITTI split. Returns
/// the per-frame stats in `ids` order.
pub fn augment_dataset(
    layout: &KittiLayout,
    ids: &[String],
    db: &GtDatabase,
    config: &AugConfig,
    out_dir: &Path,
) -> Result<Vec<FrameStats>, PipelineError> {
    config.validate()?;
    if db.spec != config.spec {
        return Err(PipelineError::SpecMismatch { db: db.spec, config: config.spec });
    }
    let recorded = AugConfig { workers: 0, ..config.clone() };
    write_file(out_dir.join("config.txt"), recorded.to_text().as_bytes())?;
    pool(config.workers)?.install(|| {
        ids.par_iter()
            .map(|id| {
                let run = || -> Result<FrameStats, PipelineError> {
                    let bundle = read_frame(layout, id)?;
                    let aug = augment_frame(&bundle, db, config, rng::frame_seed(config.seed, id))?;
                    write_augmented(&aug, out_dir)?;
                    Ok(aug.stats)
                };
                run().map_err(|e| PipelineError::Frame { frame: id.clone(), source: Box::new(e) })
            })
            .collect()
    })
}
