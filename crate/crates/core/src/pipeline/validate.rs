//! Post-hoc checks of an augmented frame against its manifest.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use super::global;
use super::stats::FrameStats;
use super::PipelineError;
use crate::geometry::{Box3D, Point, PointCloud};
use crate::kitti::{read_frame, FrameBundle, KittiLayout};
use crate::manifest::Manifest;
use crate::native::NativeFrame;
use crate::occlusion::{pixels_of, CullingParams, Strategy};
use crate::placement::{collision_check, column_shift_angle, far_edge, feasibility_vector, OcclusionTest, PlacementStrategy};

/// Tolerance for geometry that went through text or f32 storage.
const STORED_TOL: f64 = 1e-6;
const EXACT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub frame: String,
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.frame, self.invariant, self.detail)
    }
}

struct Checker<'a> {
    frame: &'a str,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn fail(&mut self, invariant: &'static str, detail: String) {
        self.out.push(Violation { frame: self.frame.to_string(), invariant, detail });
    }
}

fn box_close(a: &Box3D, b: &Box3D, tol: f64) -> bool {
    let d = crate::geometry::normalize_angle(a.yaw - b.yaw).abs();
    a.class == b.class
        && [a.cx - b.cx, a.cy - b.cy, a.cz - b.cz, a.length - b.length, a.width - b.width, a.height - b.height]
            .iter()
            .all(|v| v.abs() <= tol)
        && d <= tol
}

fn point_close(a: &Point, b: &Point) -> bool {
    let tol = |v: f64| STORED_TOL * (1.0 + v.abs());
    (a.x - b.x).abs() <= tol(b.x) && (a.y - b.y).abs() <= tol(b.y) && (a.z - b.z).abs() <= tol(b.z)
}

fn inserted_counts(cloud: &PointCloud) -> BTreeMap<u32, usize> {
    let mut m = BTreeMap::new();
    for t in cloud.tags().unwrap_or(&[]) {
        if let Some(id) = t.inserted_id() {
            *m.entry(id).or_insert(0) += 1;
        }
    }
    m
}

/// Checks one frame. `output` is the frame as written (global transforms
/// applied, labels re-read); `resolved` the tagged pre-transform frame.
pub fn validate_frame(manifest: &Manifest, resolved: &NativeFrame, output: &FrameBundle) -> Vec<Violation> {
    let mut c = Checker { frame: &manifest.frame_id, out: Vec::new() };
    let pc = &manifest.placement;
    let spec = &resolved.spec;

    let Some(strategy) = manifest.strategy() else {
        c.fail("manifest", format!("unknown strategy `{}`", manifest.strategy));
        return c.out;
    };
    if manifest.validspace.width() != spec.width {
        c.fail("manifest", "validspace width differs from the frame spec".into());
        return c.out;
    }
    if resolved.cloud.tags().is_none() {
        c.fail("manifest", "resolved frame carries no provenance".into());
        return c.out;
    }

    for r in &manifest.inserted {
        let id = r.insert_id;
        // Feasibility against the pre-insertion validspace. Under the literal
        // test with updates the placement-time validspace is not recoverable.
        let check_pre = !(pc.update_validspace && pc.occlusion_test == OcclusionTest::Literal);
        if pc.strategy != PlacementStrategy::OriginalPose {
            if r.start_col >= spec.width || r.rangebin.is_empty() {
                c.fail("manifest", format!("object {id}: bad start column or empty rangebin"));
                continue;
            }
            let pre = feasibility_vector(&manifest.validspace, &r.rangebin, far_edge(&r.original_box), pc.occlusion_test)[r.start_col];
            if check_pre && pre <= pc.threshold {
                c.fail("feasibility", format!("object {id}: rate {pre} at column {} not above {}", r.start_col, pc.threshold));
            }
            if r.rate <= pc.threshold {
                c.fail("feasibility", format!("object {id}: recorded rate {} not above {}", r.rate, pc.threshold));
            }
        }
        let dr = (r.placed_box.center_range() - r.original_box.center_range()).abs();
        if dr > EXACT_TOL || (r.placed_box.cz - r.original_box.cz).abs() > EXACT_TOL {
            c.fail("range-preservation", format!("object {id}: center range moved by {dr:e} m"));
        }
        let want = column_shift_angle(r.original_start_col, r.start_col, spec);
        if (want - r.dtheta).abs() > EXACT_TOL || !box_close(&r.original_box.rotated_z(r.dtheta), &r.placed_box, EXACT_TOL) {
            c.fail("rotation", format!("object {id}: placed box is not the original rotated to column {}", r.start_col));
        }
    }

    let scene_boxes = &resolved.boxes[..manifest.scene_labels.min(resolved.boxes.len())];
    let placed: Vec<Box3D> = manifest.inserted.iter().map(|r| r.placed_box).collect();
    for (i, r) in manifest.inserted.iter().enumerate() {
        let others: Vec<Box3D> =
            scene_boxes.iter().chain(placed.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, b)| b)).copied().collect();
        if collision_check(&r.placed_box, &others, pc.collision) {
            c.fail("collision", format!("object {} overlaps another box under {}", r.insert_id, pc.collision));
        }
    }

    let kept: Vec<_> = manifest.inserted.iter().filter(|r| !r.dropped).collect();
    if resolved.boxes.len() != manifest.scene_labels + kept.len() {
        c.fail(
            "label-count",
            format!("{} boxes, expected {} scene + {} inserted", resolved.boxes.len(), manifest.scene_labels, kept.len()),
        );
    }
    for (rank, r) in kept.iter().enumerate() {
        let want = manifest.scene_labels + rank;
        if r.label_index != Some(want) {
            c.fail("label-count", format!("object {}: label index {:?}, expected {want}", r.insert_id, r.label_index));
        } else if resolved.boxes.get(want).is_none_or(|b| !box_close(b, &r.placed_box, 0.0)) {
            c.fail("label-count", format!("object {}: label {want} is not its placed box", r.insert_id));
        }
    }
    if manifest.inserted.iter().any(|r| r.dropped && r.label_index.is_some()) {
        c.fail("label-count", "a dropped object kept its label".into());
    }

    let counts = inserted_counts(&resolved.cloud);
    for (id, _) in counts.iter().filter(|(id, _)| manifest.inserted.iter().all(|r| r.insert_id != **id)) {
        c.fail("manifest", format!("points tagged with unknown object {id}"));
    }
    let culling = CullingParams { min_points: manifest.min_points, min_fraction: manifest.min_fraction };
    for r in &manifest.inserted {
        let n = counts.get(&r.insert_id).copied().unwrap_or(0);
        if n > r.points {
            c.fail("manifest", format!("object {}: {n} points in output but {} inserted", r.insert_id, r.points));
        }
        if r.dropped && n > 0 {
            c.fail("culling-threshold", format!("object {} dropped but {n} points remain", r.insert_id));
        }
        if strategy == Strategy::Culling && !r.dropped && !culling.keeps(n, r.points) {
            c.fail(
                "culling-threshold",
                format!("object {} kept with {n} of {} points (min {} / {})", r.insert_id, r.points, culling.min_points, culling.min_fraction),
            );
        }
        if strategy != Strategy::Culling && r.dropped {
            c.fail("culling-threshold", format!("object {} dropped under {strategy}", r.insert_id));
        }
    }

    if !manifest.inserted.is_empty() && strategy != Strategy::None {
        let tags = resolved.cloud.tags().unwrap_or(&[]);
        let mut pix: HashMap<(usize, usize), (usize, bool, bool)> = HashMap::new();
        for (i, px) in pixels_of(&resolved.cloud, spec).into_iter().enumerate() {
            if let Some(px) = px {
                let e = pix.entry((px.u, px.v)).or_default();
                e.0 += 1;
                if tags[i].is_background() {
                    e.1 = true;
                } else {
                    e.2 = true;
                }
            }
        }
        match strategy {
            Strategy::Drilling => {
                if let Some(((u, v), _)) = pix.iter().find(|(_, e)| e.1 && e.2) {
                    c.fail("drilling-exclusivity", format!("pixel ({u}, {v}) holds background and object points"));
                }
            }
            _ => {
                if let Some(((u, v), e)) = pix.iter().find(|(_, e)| e.0 > 1) {
                    c.fail("z-buffer", format!("pixel ({u}, {v}) holds {} points", e.0));
                }
            }
        }
    }

    let t = &manifest.global;
    if output.cloud.len() != resolved.cloud.len() {
        c.fail("output-consistency", format!("{} output points, {} resolved", output.cloud.len(), resolved.cloud.len()));
    } else if let Some(i) = (0..output.cloud.len())
        .find(|&i| !point_close(&output.cloud.points()[i], &global::apply_point(t, &resolved.cloud.points()[i])))
    {
        c.fail("output-consistency", format!("point {i} is not the transformed resolved point"));
    }
    if output.boxes.len() != resolved.boxes.len() {
        c.fail("label-count", format!("{} output labels, {} resolved boxes", output.boxes.len(), resolved.boxes.len()));
    } else {
        for (i, (o, r)) in output.boxes.iter().zip(&resolved.boxes).enumerate() {
            let want = global::apply_box(t, r);
            if !box_close(o, &Box3D { difficulty: o.difficulty, ..want }, STORED_TOL) {
                c.fail("label-geometry", format!("label {i} is not the transformed resolved box"));
            }
        }
    }
    c.out
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub frames: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

/// Frame ids that have a manifest under `out_dir`.
pub fn output_frame_ids(out_dir: &Path) -> Result<Vec<String>, PipelineError> {
    let dir = out_dir.join("manifest");
    let mut ids: Vec<String> = fs::read_dir(&dir)
        .map_err(|source| PipelineError::Io { path: dir.clone(), source })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    ids.sort();
    Ok(ids)
}

fn frame_paths(out_dir: &Path, id: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        out_dir.join("manifest").join(format!("{id}.json")),
        out_dir.join("resolved").join(format!("{id}.frame")),
        out_dir.join("stats").join(format!("{id}.stats")),
    )
}

/// Re-checks every frame of an output tree. Unreadable or malformed frame
/// files are reported as violations; only a missing tree is an error.
pub fn validate_output(out_dir: &Path) -> Result<ValidationReport, PipelineError> {
    let ids = output_frame_ids(out_dir)?;
    let layout = KittiLayout { base: out_dir.to_path_buf() };
    let mut report = ValidationReport { frames: ids.len(), violations: Vec::new() };
    for id in &ids {
        let bad = |invariant: &'static str, detail: String| Violation { frame: id.clone(), invariant, detail };
        let (mpath, rpath, spath) = frame_paths(out_dir, id);
        let manifest = match read_text(&mpath).map(|t| Manifest::parse(&t)) {
            Ok(Ok(m)) => m,
            Ok(Err(e)) => {
                report.violations.push(bad("manifest", e.to_string()));
                continue;
            }
            Err(e) => {
                report.violations.push(bad("manifest", e.to_string()));
                continue;
            }
        };
        let resolved = match fs::read(&rpath) {
            Ok(bytes) => match NativeFrame::decode(&bytes) {
                Ok(f) => f,
                Err(e) => {
                    report.violations.push(bad("resolved-frame", e.to_string()));
                    continue;
                }
            },
            Err(e) => {
                report.violations.push(bad("resolved-frame", format!("{}: {e}", rpath.display())));
                continue;
            }
        };
        let output = match read_frame(&layout, id) {
            Ok(f) => f,
            Err(e) => {
                report.violations.push(bad("output-files", e.to_string()));
                continue;
            }
        };
        match read_text(&spath).map(|t| FrameStats::parse(&t)) {
            Ok(Ok(st)) if st.accepted != manifest.inserted.len() => report.violations.push(bad(
                "stats",
                format!("stats count {} accepted, manifest {}", st.accepted, manifest.inserted.len()),
            )),
            Ok(Ok(_)) => {}
            Ok(Err(e)) => report.violations.push(bad("stats", e)),
            Err(e) => report.violations.push(bad("stats", e.to_string())),
        }
        report.violations.extend(validate_frame(&manifest, &resolved, &output));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::synthetic::*;
    use super::super::*;
    use super::*;
    use crate::geometry::LidarSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn augmented(strategy: Strategy) -> Augmented {
        let spec = LidarSpec::from_degrees(512, 32, 2.0, -24.8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let scene = generate_synthetic_scene("000003", &random_wall_scene(spec, &mut rng), &mut rng);
        let db = synthetic_database(spec, 8, Region::FRONT, &mut rng);
        let config = AugConfig { spec, strategy, ..Default::default() };
        augment_frame(&scene, &db, &config, 77).unwrap()
    }

    #[test]
    fn clean_output_passes_every_strategy() {
        for s in [Strategy::Naive, Strategy::Culling, Strategy::Drilling, Strategy::None] {
            let aug = augmented(s);
            assert!(!aug.manifest.inserted.is_empty());
            let v = validate_frame(&aug.manifest, &aug.resolved, &aug.bundle);
            assert!(v.is_empty(), "{s}: {v:?}");
        }
    }

    #[test]
    fn moved_label_is_caught() {
        let mut aug = augmented(Strategy::Culling);
        let last = aug.bundle.boxes.len() - 1;
        aug.bundle.boxes[last].cx += 0.5;
        let v = validate_frame(&aug.manifest, &aug.resolved, &aug.bundle);
        assert!(v.iter().any(|v| v.invariant == "label-geometry"), "{v:?}");
    }

    #[test]
    fn overlapping_placement_is_caught() {
        let mut aug = augmented(Strategy::None);
        assert!(aug.manifest.inserted.len() >= 2);
        aug.manifest.inserted[1].placed_box = aug.manifest.inserted[0].placed_box;
        let v = validate_frame(&aug.manifest, &aug.resolved, &aug.bundle);
        assert!(v.iter().any(|v| v.invariant == "collision"), "{v:?}");
    }

    #[test]
    fn infeasible_column_is_caught() {
        let mut aug = augmented(Strategy::Culling);
        aug.manifest.validspace.ranges.fill(0.5);
        let v = validate_frame(&aug.manifest, &aug.resolved, &aug.bundle);
        assert!(v.iter().any(|v| v.invariant == "feasibility"), "{v:?}");
    }
}
