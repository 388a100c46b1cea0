//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use caaug::database::{compute_rangebin, sample_objects, DatabaseBuilder, GtDatabase, GtObject, SampleCounts};
use caaug::geometry::{bev_corners, normalize_angle, Box3D, LidarSpec, ObjectClass, Point, PointCloud, Provenance};
use caaug::kitti::{
    encode_velodyne, label_to_lidar_box, lidar_box_to_label, parse_velodyne, read_velodyne, write_velodyne, Calib,
    KittiLabel, LabelType,
};
use caaug::occlusion::{apply_culling, apply_drilling, CullingParams, Strategy};
use caaug::partition::{compute_validspace, partition_scene, Validspace};
use caaug::pipeline::synthetic::*;
use caaug::pipeline::{augment_bundles, augment_frame, rng::frame_seed, AugConfig, GlobalAugParams};
use caaug::placement::{
    collision_check, feasibility_at, location_check, update_validspace, CollisionMode, PlacementConfig,
    PlacementStrategy, RejectReason, ScanMode,
};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn planar(b: &Box3D) -> f64 {
    b.cx.hypot(b.cy)
}

fn norm(p: &Point) -> f64 {
    (p.x * p.x + p.y * p.y + p.z * p.z).sqrt()
}

/// Strict interior test: the point is on the inner side of every edge by
/// more than `eps`.
fn strictly_inside(q: [f64; 2], b: &Box3D, eps: f64) -> bool {
    let c = bev_corners(b);
    let mut sign = 0.0f64;
    for i in 0..4 {
        let (p, r) = (c[i], c[(i + 1) % 4]);
        let cross = (r[0] - p[0]) * (q[1] - p[1]) - (r[1] - p[1]) * (q[0] - p[0]);
        if cross.abs() <= eps * (r[0] - p[0]).hypot(r[1] - p[1]) {
            return false;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

fn ray_cast_object(spec: LidarSpec, b: Box3D, seed: u64) -> GtObject {
    let mut builder = DatabaseBuilder::new(spec);
    let cloud = ray_cast(&SceneDescriptor { parked: vec![b], ..SceneDescriptor::empty(spec) }, &mut rng(seed));
    builder.add_frame("obj", &cloud, &[b]);
    builder.finish().objects().next().expect("object has points").clone()
}

fn validspace_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(0xA1);
    let mut points = 0usize;
    for scene in 0..200 {
        let spec = if scene % 2 == 0 { small_spec() } else { LidarSpec::default() };
        let mut cloud = if scene % 3 == 0 {
            let n = r.gen_range(1..=100_000);
            random_cloud(&mut r, n, 40.0)
        } else {
            ray_cast(&random_wall_scene(spec, &mut r), &mut r)
        };
        if cloud.len() > 100_000 {
            let step = cloud.len().div_ceil(100_000);
            let idx: Vec<usize> = (0..cloud.len()).step_by(step).collect();
            cloud = cloud.subset(&idx);
        }
        points += cloud.len();
        let d = [0.1, 0.25, 0.5][scene % 3];
        let sigma = [0.2, 0.4, 0.8][(scene / 3) % 3];
        let got = compute_validspace(&cloud, &partition_scene(&cloud, d, sigma).unwrap(), &spec);
        let want = validspace_oracle(&cloud, &partition_oracle(&cloud, d, sigma), &spec);
        check!(got.ranges == want, "scene {scene}: validspace differs from oracle");
    }
    let elapsed = start.elapsed();
    check!(elapsed < Duration::from_secs(60), "took {elapsed:.1?}, budget 60 s");
    Ok(format!("200 scenes, {points} points, exact, {elapsed:.1?}"))
}

struct TrialTotals {
    accepted: usize,
    feasibility_violations: Vec<String>,
    max_center_drift: f64,
    max_point_drift: f64,
    corner_pairs: usize,
    corner_violations: Vec<String>,
}

/// 500 randomized placement trials against wall scenes. Every accepted
/// object is re-checked from scratch with the brute-force oracles.
fn placement_trials() -> TrialTotals {
    let mut r = rng(0xB2);
    let specs = [small_spec(), LidarSpec::default()];
    let dbs: Vec<Vec<GtDatabase>> = specs
        .iter()
        .map(|&s| (0..3).map(|_| synthetic_database(s, 8, Region::FRONT, &mut r)).collect())
        .collect();
    let mut totals = TrialTotals {
        accepted: 0,
        feasibility_violations: Vec::new(),
        max_center_drift: 0.0,
        max_point_drift: 0.0,
        corner_pairs: 0,
        corner_violations: Vec::new(),
    };
    for trial in 0..500 {
        let si = usize::from(trial % 10 == 0);
        let spec = specs[si];
        let db = &dbs[si][trial % 3];
        let desc = random_wall_scene(spec, &mut r);
        let cloud = ray_cast(&desc, &mut r);
        let threshold = if trial % 2 == 0 { 0.8 } else { r.gen_range(0.5..0.95) };
        let config = PlacementConfig {
            threshold,
            max_angle_retries: if r.gen_bool(0.3) { Some(r.gen_range(1..5)) } else { None },
            window: if r.gen_bool(0.5) { Some(spec.kitti_front_window()) } else { None },
            update_validspace: r.gen_bool(0.5),
            near_to_far: r.gen_bool(0.5),
            scan: if r.gen_bool(0.5) { ScanMode::Circular } else { ScanMode::Linear },
            collision: if trial % 3 == 2 { CollisionMode::StrictPolygon } else { CollisionMode::PaperCorners },
            strategy: if trial % 5 == 4 { PlacementStrategy::FilterInPlace } else { PlacementStrategy::Rotate },
            ..Default::default()
        };
        let counts = SampleCounts { car: r.gen_range(0..8), pedestrian: r.gen_range(0..6), cyclist: r.gen_range(0..6) };
        let candidates = sample_objects(db, &counts, &mut r);
        let vs = compute_validspace(&cloud, &partition_scene(&cloud, 0.25, 0.4).unwrap(), &spec);
        let result = location_check(&vs, &candidates, &desc.parked, &config, &spec, &mut r).unwrap();

        let oracle_v = validspace_oracle(&cloud, &partition_oracle(&cloud, 0.25, 0.4), &spec);
        for placed in &result.accepted {
            totals.accepted += 1;
            let edge = planar(&placed.bbox) + placed.bbox.length / 2.0;
            let n = placed.points.len();
            let free = placed.points.points().iter().filter(|p| oracle_v[column_oracle(p, &spec)] > edge).count();
            let frac = free as f64 / n as f64;
            if frac <= threshold {
                totals.feasibility_violations.push(format!("trial {trial}: fraction {frac} <= {threshold}"));
            }
            let drift = (planar(&placed.bbox) - planar(&placed.object.bbox)).abs();
            totals.max_center_drift = totals.max_center_drift.max(drift);
            for (p, q) in placed.object.points.points().iter().zip(placed.points.points()) {
                totals.max_point_drift = totals.max_point_drift.max((norm(p) - norm(q)).abs());
            }
        }
        let boxes: Vec<Box3D> = desc.parked.iter().copied().chain(result.accepted.iter().map(|p| p.bbox)).collect();
        for i in desc.parked.len()..boxes.len() {
            for (j, other) in boxes.iter().enumerate() {
                if i == j {
                    continue;
                }
                totals.corner_pairs += 1;
                let hit = bev_corners(&boxes[i]).iter().any(|&c| strictly_inside(c, other, 0.0))
                    || bev_corners(other).iter().any(|&c| strictly_inside(c, &boxes[i], 0.0));
                if hit {
                    totals.corner_violations.push(format!("trial {trial}: boxes {i} and {j}"));
                }
            }
        }
    }
    totals
}

fn feasibility_correctness(t: &TrialTotals) -> Outcome {
    check!(t.accepted > 0, "no placement was accepted");
    check!(t.feasibility_violations.is_empty(), "{} violations, first {}", t.feasibility_violations.len(), t.feasibility_violations[0]);
    Ok(format!("500 trials, {} accepted placements, 0 violations", t.accepted))
}

fn range_preservation(t: &TrialTotals) -> Outcome {
    check!(t.max_center_drift <= 1e-9, "center range drift {:e}", t.max_center_drift);
    check!(t.max_point_drift <= 1e-9, "point range drift {:e}", t.max_point_drift);
    Ok(format!("max drift center {:.1e} m, points {:.1e} m", t.max_center_drift, t.max_point_drift))
}

fn exact_column_shift() -> Outcome {
    let spec = LidarSpec::default();
    let mut r = rng(0xC4);
    let db = synthetic_database(spec, 10, Region { range: (5.0, 35.0), azimuth: (-PI, PI) }, &mut r);
    let objects: Vec<&GtObject> = db.objects().collect();
    for case in 0..100 {
        let obj = objects[r.gen_range(0..objects.len())];
        let k = r.gen_range(0..spec.width);
        let rotated = obj.points.rotated_z(-TAU * k as f64 / spec.width as f64);
        let (start, bins) = compute_rangebin(&rotated, &spec).unwrap();
        check!(start == (obj.start_col + k) % spec.width, "case {case}: start {start}, k {k}, from {}", obj.start_col);
        check!(bins == obj.rangebin, "case {case}: rangebin changed");
    }
    Ok("100 (object, k) pairs exact".into())
}

fn collision_soundness(t: &TrialTotals) -> Outcome {
    check!(t.corner_violations.is_empty(), "{} corner violations, first {}", t.corner_violations.len(), t.corner_violations[0]);
    // Two equal-area rectangles crossed at a shared center: no corner of
    // either lies inside the other.
    let placed = Box3D::new([0.0, 0.0, 0.0], [6.0, 1.0, 1.5], 0.0, ObjectClass::Car);
    let candidate = Box3D::new([0.0, 0.0, 0.0], [1.0, 6.0, 1.5], 0.0, ObjectClass::Car);
    check!(collision_check(&candidate, &[placed], CollisionMode::StrictPolygon), "strict polygon test missed the cross");
    check!(!collision_check(&candidate, &[placed], CollisionMode::PaperCorners), "corner test unexpectedly caught the cross");
    check!(polygon_overlap_oracle(&placed, &candidate), "oracle disagrees on the cross");
    Ok(format!("{} box pairs clean; cross caught by strict polygon only", t.corner_pairs))
}

/// (points, visible) pairs around the min-points and min-fraction edges.
const CULLING_TABLE: [(usize, usize); 50] = [
    (4, 0), (4, 1), (4, 2), (4, 3), (4, 4),
    (5, 2), (5, 3), (5, 4), (5, 5),
    (8, 2), (8, 3), (8, 4), (8, 5),
    (12, 2), (12, 3), (12, 4), (12, 5),
    (16, 3), (16, 4), (16, 5),
    (17, 4), (17, 5), (17, 6),
    (20, 4), (20, 5), (20, 6),
    (21, 5), (21, 6),
    (24, 5), (24, 6), (24, 7),
    (40, 9), (40, 10), (40, 11),
    (41, 10), (41, 11),
    (100, 24), (100, 25), (100, 26),
    (101, 25), (101, 26),
    (3, 0), (3, 1), (3, 2), (3, 3),
    (1, 0), (1, 1),
    (64, 15), (64, 16), (64, 17),
];

fn culling_thresholds() -> Outcome {
    let spec = small_spec();
    let params = CullingParams::default();
    let (mut kept, mut dropped) = (0, 0);
    for &(n, visible) in &CULLING_TABLE {
        // Occluded object pixels get a background point in front, visible
        // ones a background point behind.
        let mut pts = Vec::new();
        let mut tags = Vec::new();
        for i in 0..n {
            let (u, v) = (20 + i % 80, 4 + i / 80);
            pts.push(at_pixel(&spec, u, v, 10.0));
            tags.push(Provenance::Inserted(0));
            pts.push(at_pixel(&spec, u, v, if i < n - visible { 5.0 } else { 30.0 }));
            tags.push(Provenance::Obstacle);
        }
        let (out, report) = apply_culling(&PointCloud::with_tags(pts, tags), &spec, &params).unwrap();
        let keep = visible >= 4 && 4 * visible >= n;
        let obj = report.objects[0];
        check!(obj.visible == visible, "({n}, {visible}): measured visible {}", obj.visible);
        check!(obj.dropped == !keep, "({n}, {visible}): dropped = {}", obj.dropped);
        let inserted = out.tags().unwrap().iter().filter(|t| !t.is_background()).count();
        let background = out.len() - inserted;
        check!(inserted == if keep { visible } else { 0 }, "({n}, {visible}): {inserted} object points kept");
        check!(background == if keep { n - visible } else { n }, "({n}, {visible}): {background} background points");
        if keep { kept += 1 } else { dropped += 1 }
    }
    Ok(format!("{} cases ({kept} kept, {dropped} dropped)", CULLING_TABLE.len()))
}

fn drilling_exclusivity() -> Outcome {
    let spec = small_spec();
    let mut r = rng(0xD7);
    let mut object_pixels = 0usize;
    for merge in 0..100 {
        let n_bg = r.gen_range(100..4000);
        let bg = random_cloud(&mut r, n_bg, 30.0);
        let mut pts = bg.into_points();
        let mut tags: Vec<Provenance> =
            (0..pts.len()).map(|_| if r.gen_bool(0.5) { Provenance::Ground } else { Provenance::Obstacle }).collect();
        for id in 0..r.gen_range(1..6u32) {
            let c = [r.gen_range(-25.0..25.0), r.gen_range(-25.0..25.0), r.gen_range(-1.5..0.5)];
            for _ in 0..r.gen_range(20..400) {
                pts.push(Point::new(
                    c[0] + r.gen_range(-2.0..2.0),
                    c[1] + r.gen_range(-1.0..1.0),
                    c[2] + r.gen_range(-0.8..0.8),
                    0.5,
                ));
                tags.push(Provenance::Inserted(id));
            }
        }
        let merged = PointCloud::with_tags(pts, tags);
        let before: std::collections::HashSet<(usize, usize)> = merged
            .points()
            .iter()
            .zip(merged.tags().unwrap())
            .filter(|(_, t)| !t.is_background())
            .filter_map(|(p, _)| pixel_oracle(p, &spec))
            .collect();
        let (out, _) = apply_drilling(&merged, &spec).unwrap();
        let mut cells: std::collections::HashMap<(usize, usize), (usize, usize)> = Default::default();
        for (p, t) in out.points().iter().zip(out.tags().unwrap()) {
            if let Some(px) = pixel_oracle(p, &spec) {
                let e = cells.entry(px).or_default();
                if t.is_background() { e.0 += 1 } else { e.1 += 1 }
            }
        }
        for (px, &(b, o)) in &cells {
            check!(b == 0 || o == 0, "merge {merge}: pixel {px:?} mixes {b} background and {o} object points");
        }
        for px in &before {
            check!(cells.get(px).is_some_and(|c| c.1 == 1), "merge {merge}: pixel {px:?} lost its object point");
        }
        object_pixels += before.len();
    }
    Ok(format!("100 merges, {object_pixels} object pixels, none mixed"))
}

fn validspace_update_chain() -> Outcome {
    let spec = LidarSpec::default();
    let az = 0.1;
    let near = ray_cast_object(spec, object_box(ObjectClass::Car, 10.0, az, az + FRAC_PI_2), 1);
    let far = ray_cast_object(spec, object_box(ObjectClass::Car, 25.0, az, az + FRAC_PI_2), 2);
    check!(far.span() < near.span(), "far object must be narrower");
    let window = (near.start_col, near.start_col + near.span() - 1);
    let config = PlacementConfig { window: Some(window), update_validspace: true, ..Default::default() };
    let empty = Validspace::unobstructed(spec);

    // step 1: the near object is placed first despite being listed second
    let res = location_check(&empty, &[&far, &near], &[], &config, &spec, &mut rng(3)).unwrap();
    check!(res.accepted.len() == 1 && res.accepted[0].object.id == near.id, "near object not accepted alone");
    check!(res.accepted[0].start_col == near.start_col, "near object moved");

    // step 2: covered columns take the placed center range
    let mut vs = empty.clone();
    update_validspace(&mut vs, planar(&near.bbox), near.start_col, near.span());
    for j in 0..spec.width {
        let want = if (window.0..=window.1).contains(&j) { planar(&near.bbox) } else { f64::INFINITY };
        check!(vs.ranges[j] == want, "column {j}: {} != {want}", vs.ranges[j]);
    }

    // step 3: every start for the far object inside the window is blocked
    check!(res.rejected.len() == 1 && res.rejected[0].reason == RejectReason::NoFeasibleColumn, "far object not rejected");
    for s in window.0..=window.1 + 1 - far.span() {
        let rate = feasibility_at(&vs, &far, s, config.occlusion_test);
        check!(rate == 0.0, "far object rate {rate} at column {s}");
    }
    let control = PlacementConfig { update_validspace: false, ..config };
    let res = location_check(&empty, &[&far, &near], &[], &control, &spec, &mut rng(3)).unwrap();
    check!(res.accepted.len() == 2, "without the update both objects fit");
    Ok(format!("V = {:.6} on columns {}..={}, far object rejected", planar(&near.bbox), window.0, window.1))
}

/// Retained object-point fraction of one augmented frame; dropped objects
/// count as zero. `None` when nothing was inserted.
fn retained_fraction(config: &AugConfig, bundle: &caaug::kitti::FrameBundle, db: &GtDatabase, seed: u64) -> Option<f64> {
    let aug = augment_frame(bundle, db, config, seed).unwrap();
    let objs = &aug.stats.occlusion.objects;
    let total: usize = objs.iter().map(|o| o.original).sum();
    (total > 0).then(|| objs.iter().map(|o| o.retained).sum::<usize>() as f64 / total as f64)
}

fn directional_reproduction() -> Outcome {
    let spec = LidarSpec::default();
    let mut r = rng(0xE9);
    let db = synthetic_database(spec, 20, Region::FRONT, &mut r);
    let base = AugConfig { spec, strategy: Strategy::Culling, global: GlobalAugParams::DISABLED, ..Default::default() };
    let mut original_cfg = base.clone();
    original_cfg.placement.strategy = PlacementStrategy::OriginalPose;
    let (mut wins, mut losses) = (0usize, 0usize);
    let (mut sum_rot, mut sum_orig, mut n) = (0.0, 0.0, 0usize);
    for scene in 0..50 {
        let id = format!("{scene:06}");
        let bundle = generate_synthetic_scene(&id, &random_wall_scene(spec, &mut r), &mut r);
        let seed = frame_seed(0xE9, &id);
        let (Some(rot), Some(orig)) =
            (retained_fraction(&base, &bundle, &db, seed), retained_fraction(&original_cfg, &bundle, &db, seed))
        else {
            continue;
        };
        sum_rot += rot;
        sum_orig += orig;
        n += 1;
        if rot > orig {
            wins += 1;
        } else if rot < orig {
            losses += 1;
        }
    }
    check!(n > 0, "no scene inserted anything");
    let (mean_rot, mean_orig) = (sum_rot / n as f64, sum_orig / n as f64);
    let p = sign_test_p(wins, wins + losses);
    let detail = format!("mean retained {mean_rot:.3} rotate vs {mean_orig:.3} original pose, {wins}/{} wins, p = {p:.2e}", wins + losses);
    check!(mean_rot > mean_orig && p < 0.01, "{detail}");
    Ok(detail)
}

fn fill_to(cloud: PointCloud, target: usize, r: &mut ChaCha8Rng) -> PointCloud {
    let mut pts = cloud.into_points();
    pts.truncate(target);
    let base = pts.len();
    while pts.len() < target {
        let p = pts[r.gen_range(0..base)];
        pts.push(Point::new(p.x + r.gen_range(-0.01..0.01), p.y + r.gen_range(-0.01..0.01), p.z, p.intensity));
    }
    PointCloud::new(pts)
}

fn determinism_and_performance() -> Outcome {
    let spec = LidarSpec::default();
    let mut r = rng(0xF1);
    let db = synthetic_database(spec, 12, Region::FRONT, &mut r);
    let frames: Vec<_> = (0..8)
        .map(|i| generate_synthetic_scene(&format!("{i:06}"), &random_wall_scene(spec, &mut r), &mut r))
        .collect();
    let key = |a: &caaug::pipeline::Augmented| (a.bundle.clone(), a.resolved.clone(), a.manifest.clone(), a.stats.to_text());
    let mut runs = Vec::new();
    for workers in [1, 1, 8] {
        let config = AugConfig { spec, seed: 5, workers, ..Default::default() };
        runs.push(augment_bundles(&frames, &db, &config).unwrap().iter().map(key).collect::<Vec<_>>());
    }
    check!(runs[0] == runs[1], "repeated runs differ");
    check!(runs[0] == runs[2], "1 and 8 workers differ");

    let config = AugConfig { spec, ..Default::default() };
    let mut times = Vec::new();
    for i in 0..11 {
        let mut frame = generate_synthetic_scene(&format!("{i:06}"), &random_wall_scene(spec, &mut r), &mut r);
        frame.cloud = fill_to(frame.cloud, 120_000, &mut r);
        let t = Instant::now();
        augment_frame(&frame, &db, &config, i).unwrap();
        times.push(t.elapsed());
    }
    times.sort();
    let median = times[times.len() / 2];
    let soft = if median > Duration::from_millis(50) { " (warning: above the 50 ms budget)" } else { "" };
    if !soft.is_empty() {
        eprintln!("warning: median augment_frame latency {median:.1?} exceeds 50 ms");
    }
    Ok(format!("3 runs identical; median latency {median:.1?} on 120k points{soft}"))
}

/// Rectification and velodyne-to-camera matrices of a typical KITTI frame.
fn kitti_calib() -> Calib {
    Calib::new(
        [9.999239e-01, 9.837760e-03, -7.445048e-03, -9.869795e-03, 9.999421e-01, -4.278459e-03, 7.402527e-03, 4.351614e-03, 9.999631e-01],
        [
            7.533745e-03, -9.999714e-01, -6.166020e-04, -4.069766e-03, 1.480249e-02, 7.280733e-04, -9.998902e-01,
            -7.631618e-02, 9.998621e-01, 7.523790e-03, 1.480755e-02, -2.717806e-01,
        ],
    )
    .unwrap()
}

fn kitti_io() -> Outcome {
    let mut r = rng(0x11);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for trial in 0..50 {
        let n = r.gen_range(0..2000) * 16;
        let bytes: Vec<u8> = (0..n / 4)
            .flat_map(|_| loop {
                let v = f32::from_bits(r.gen());
                if v.is_finite() {
                    break v.to_le_bytes();
                }
            })
            .collect();
        let cloud = parse_velodyne(&bytes).unwrap();
        check!(encode_velodyne(&cloud) == bytes, "trial {trial}: in-memory round trip differs");
        let path = dir.path().join(format!("{trial}.bin"));
        write_velodyne(&path, &cloud).unwrap();
        check!(std::fs::read(&path).unwrap() == bytes, "trial {trial}: written bytes differ");
        check!(read_velodyne(&path).unwrap() == cloud, "trial {trial}: reread cloud differs");
    }

    let calibs = [kitti_calib(), Calib::axis_permutation()];
    let kinds = [LabelType::Car, LabelType::Pedestrian, LabelType::Cyclist, LabelType::Van];
    let (mut max_pos, mut max_ang) = (0.0f64, 0.0f64);
    for i in 0..10_000 {
        let calib = &calibs[i % 2];
        let label = KittiLabel {
            kind: kinds[i % 4],
            truncated: r.gen_range(0.0..1.0),
            occluded: r.gen_range(0..4),
            alpha: r.gen_range(-PI..PI),
            bbox: [r.gen_range(0.0..600.0), r.gen_range(0.0..180.0), r.gen_range(600.0..1240.0), r.gen_range(180.0..375.0)],
            height: r.gen_range(0.5..4.0),
            width: r.gen_range(0.3..3.0),
            length: r.gen_range(0.3..12.0),
            location: [r.gen_range(-40.0..40.0), r.gen_range(-1.0..3.0), r.gen_range(0.5..80.0)],
            rotation_y: r.gen_range(-PI..PI),
            score: None,
        };
        let parsed = KittiLabel::parse_line(&label.to_line()).map_err(|e| format!("label {i}: {e}"))?;
        let b = label_to_lidar_box(&parsed, calib).unwrap();
        let back = lidar_box_to_label(&b, calib, &parsed);
        for k in 0..3 {
            max_pos = max_pos.max((back.location[k] - label.location[k]).abs());
        }
        max_ang = max_ang.max(normalize_angle(back.rotation_y - label.rotation_y).abs());
        let again = label_to_lidar_box(&KittiLabel::parse_line(&back.to_line()).unwrap(), calib).unwrap();
        max_pos = max_pos.max((again.cx - b.cx).abs().max((again.cy - b.cy).abs()).max((again.cz - b.cz).abs()));
        max_ang = max_ang.max(normalize_angle(again.yaw - b.yaw).abs());
        check!(back.kind == label.kind && back.bbox == label.bbox, "label {i}: non-geometric fields changed");
    }
    check!(max_pos <= 1e-5 && max_ang <= 1e-6, "max error {max_pos:e} m, {max_ang:e} rad");
    Ok(format!("velodyne bit-exact; 10000 labels, max error {max_pos:.1e} m, {max_ang:.1e} rad"))
}

fn rod_example() -> Outcome {
    let spec = LidarSpec::default();
    let obj = ray_cast_object(spec, object_box(ObjectClass::Car, 10.0, 0.2, 0.2 + FRAC_PI_2), 1);
    let rod_col = obj.start_col + obj.span() / 2;
    let az = spec.column_center_azimuth(rod_col);
    let mut scene = SceneDescriptor::empty(spec);
    scene.rods.push(Rod { x: 5.0 * az.cos(), y: 5.0 * az.sin(), radius: 0.005, z: (-SENSOR_HEIGHT, 1.5) });
    let cloud = ray_cast(&scene, &mut rng(2));
    let vs = compute_validspace(&cloud, &partition_scene(&cloud, 0.25, 0.4).unwrap(), &spec);
    let window = Some((obj.start_col, obj.start_col + obj.span() - 1));
    let run = |a: f64| {
        let config = PlacementConfig { threshold: a, window, ..Default::default() };
        location_check(&vs, &[&obj], &[], &config, &spec, &mut rng(3)).unwrap().accepted.len()
    };
    check!(run(0.8) == 1, "rod-occluded car rejected at threshold 0.8");
    check!(run(1.0) == 0, "rod-occluded car accepted at threshold 1.0");
    Ok("accepted at 0.8, rejected at 1.0".into())
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<(&str, Outcome, Duration)> = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let line = match &out {
            Ok(d) => format!("PASS {name}: {d}"),
            Err(d) => format!("FAIL {name}: {d}"),
        };
        println!("{line} [{:.1?}]", t.elapsed());
        results.push((name, out, t.elapsed()));
    };

    run("1 validspace oracle equivalence", &validspace_oracle_equivalence);
    let trials = catch_unwind(placement_trials);
    let from_trials = |f: fn(&TrialTotals) -> Outcome| -> Outcome {
        match &trials {
            Ok(t) => f(t),
            Err(_) => Err("placement trials panicked".into()),
        }
    };
    run("2 feasibility correctness", &|| from_trials(feasibility_correctness));
    run("3 range preservation", &|| from_trials(range_preservation));
    run("4 exact column shift", &exact_column_shift);
    run("5 collision soundness", &|| from_trials(collision_soundness));
    run("6 culling thresholds", &culling_thresholds);
    run("7 drilling exclusivity", &drilling_exclusivity);
    run("8 validspace update chain", &validspace_update_chain);
    run("9 directional reproduction", &directional_reproduction);
    run("10 determinism and performance", &determinism_and_performance);
    run("11 kitti io", &kitti_io);
    run("thin rod example", &rod_example);

    let failed = results.iter().filter(|r| r.1.is_err()).count();
    println!("acceptance: {} passed, {failed} failed in {:.1?}", results.len() - failed, started.elapsed());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
