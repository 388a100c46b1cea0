//! KITTI object-detection files: velodyne scans, label_2 text, calibration,
//! and conversion between camera-frame labels and lidar-frame boxes.
//!
//! Byte layouts:
//!
//! * `velodyne/<id>.bin`: consecutive 16-byte records of four little-endian
//!   `f32`: x, y, z, reflectance.
//! * `label_2/<id>.txt`: one object per line, 15 whitespace-separated
//!   fields (type, truncated, occluded, alpha, bbox left/top/right/bottom,
//!   height, width, length, x, y, z, rotation_y) and an optional score.
//! * `calib/<id>.txt`: `KEY: v1 v2 ...` rows; `R0_rect` (9 values) and
//!   `Tr_velo_to_cam` (12 values, row-major 3x4) are required.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4, Vector4};
use thiserror::Error;

use crate::geometry::{normalize_angle, Box3D, Difficulty, ObjectClass, Point, PointCloud};

#[derive(Debug, Error)]
pub enum KittiError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("calibration transform is not invertible")]
    SingularCalib,
    #[error("invalid calibration: {0}")]
    InvalidCalib(String),
}

impl KittiError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        KittiError::Io { path: path.to_path_buf(), source }
    }
}

pub const VELODYNE_RECORD: usize = 16;

pub fn parse_velodyne(bytes: &[u8]) -> Result<PointCloud, KittiError> {
    if !bytes.len().is_multiple_of(VELODYNE_RECORD) {
        return Err(KittiError::MalformedFile(format!(
            "velodyne size {} is not a multiple of {VELODYNE_RECORD}",
            bytes.len()
        )));
    }
    let f = |b: &[u8]| f32::from_le_bytes(b.try_into().unwrap()) as f64;
    let mut points = Vec::with_capacity(bytes.len() / VELODYNE_RECORD);
    for (i, rec) in bytes.chunks_exact(VELODYNE_RECORD).enumerate() {
        let p = Point::new(f(&rec[0..4]), f(&rec[4..8]), f(&rec[8..12]), f(&rec[12..16]));
        if !p.is_finite() {
            return Err(KittiError::MalformedFile(format!("point {i} is not finite")));
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

/// Points are narrowed to `f32`; clouds read from a velodyne file round-trip
/// bit-exactly.
pub fn encode_velodyne(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * VELODYNE_RECORD);
    for p in cloud.points() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_velodyne(path: &Path) -> Result<PointCloud, KittiError> {
    parse_velodyne(&fs::read(path).map_err(|e| KittiError::io(path, e))?)
}

pub fn write_velodyne(path: &Path, cloud: &PointCloud) -> Result<(), KittiError> {
    crate::fsutil::write_atomic(path, &encode_velodyne(cloud)).map_err(|e| KittiError::io(path, e))
}

/// Calibration of one frame. `velo_to_rect` maps homogeneous lidar
/// coordinates into the rectified camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Calib {
    pub projections: [Option<[f64; 12]>; 4],
    pub r0_rect: [f64; 9],
    pub tr_velo_to_cam: [f64; 12],
    pub tr_imu_to_velo: Option<[f64; 12]>,
}

impl Calib {
    pub fn new(r0_rect: [f64; 9], tr_velo_to_cam: [f64; 12]) -> Result<Self, KittiError> {
        let c = Calib { projections: [None; 4], r0_rect, tr_velo_to_cam, tr_imu_to_velo: None };
        c.validate()?;
        Ok(c)
    }

    /// The usual KITTI axis permutation with no offset: camera x = -lidar y,
    /// camera y = -lidar z, camera z = lidar x.
    pub fn axis_permutation() -> Self {
        let tr = [0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let r0 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        Self::new(r0, tr).expect("permutation calib is valid")
    }

    fn tr_rotation(&self) -> Matrix3<f64> {
        let t = &self.tr_velo_to_cam;
        Matrix3::new(t[0], t[1], t[2], t[4], t[5], t[6], t[8], t[9], t[10])
    }

    pub fn validate(&self) -> Result<(), KittiError> {
        let all = self.r0_rect.iter().chain(&self.tr_velo_to_cam);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(KittiError::InvalidCalib("non-finite matrix entry".into()));
        }
        let r = self.tr_rotation();
        let err = (r * r.transpose() - Matrix3::identity()).abs().max();
        if err > 1e-3 {
            return Err(KittiError::InvalidCalib(format!(
                "Tr_velo_to_cam rotation is not orthonormal (error {err:.2e})"
            )));
        }
        Ok(())
    }

    pub fn velo_to_rect(&self) -> Matrix4<f64> {
        let r = &self.r0_rect;
        let t = &self.tr_velo_to_cam;
        let r0 = Matrix4::new(r[0], r[1], r[2], 0.0, r[3], r[4], r[5], 0.0, r[6], r[7], r[8], 0.0, 0.0, 0.0, 0.0, 1.0);
        let tr = Matrix4::new(
            t[0], t[1], t[2], t[3], t[4], t[5], t[6], t[7], t[8], t[9], t[10], t[11], 0.0, 0.0, 0.0, 1.0,
        );
        r0 * tr
    }

    pub fn rect_to_velo(&self) -> Result<Matrix4<f64>, KittiError> {
        self.velo_to_rect().try_inverse().ok_or(KittiError::SingularCalib)
    }

    pub fn parse(text: &str) -> Result<Self, KittiError> {
        let mut projections = [None; 4];
        let (mut r0, mut tr, mut imu) = (None, None, None);
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| KittiError::Parse { line: n + 1, msg };
            let (key, rest) = line.split_once(':').ok_or_else(|| bad("expected `KEY: values`".into()))?;
            let vals: Vec<f64> = rest
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number `{t}`"))))
                .collect::<Result<_, _>>()?;
            let take = |want: usize| -> Result<Vec<f64>, KittiError> {
                if vals.len() == want {
                    Ok(vals.clone())
                } else {
                    Err(bad(format!("{key} needs {want} values, got {}", vals.len())))
                }
            };
            match key.trim() {
                "P0" | "P1" | "P2" | "P3" => {
                    let i = (key.trim().as_bytes()[1] - b'0') as usize;
                    projections[i] = Some(take(12)?.try_into().unwrap());
                }
                "R0_rect" | "R_rect" => r0 = Some(take(9)?),
                "Tr_velo_to_cam" | "Tr_velo_cam" => tr = Some(take(12)?),
                "Tr_imu_to_velo" | "Tr_imu_velo" => imu = Some(take(12)?.try_into().unwrap()),
                _ => {}
            }
        }
        let r0 = r0.ok_or_else(|| KittiError::InvalidCalib("missing R0_rect".into()))?;
        let tr = tr.ok_or_else(|| KittiError::InvalidCalib("missing Tr_velo_to_cam".into()))?;
        let c = Calib {
            projections,
            r0_rect: r0.try_into().unwrap(),
            tr_velo_to_cam: tr.try_into().unwrap(),
            tr_imu_to_velo: imu,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let row = |key: &str, v: &[f64]| {
            let vals: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
            format!("{key}: {}\n", vals.join(" "))
        };
        let mut s = String::new();
        for (i, p) in self.projections.iter().enumerate() {
            if let Some(p) = p {
                s += &row(&format!("P{i}"), p);
            }
        }
        s += &row("R0_rect", &self.r0_rect);
        s += &row("Tr_velo_to_cam", &self.tr_velo_to_cam);
        if let Some(imu) = &self.tr_imu_to_velo {
            s += &row("Tr_imu_to_velo", imu);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelType {
    Car,
    Van,
    Truck,
    Pedestrian,
    PersonSitting,
    Cyclist,
    Tram,
    Misc,
    DontCare,
}

impl LabelType {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelType::Car => "Car",
            LabelType::Van => "Van",
            LabelType::Truck => "Truck",
            LabelType::Pedestrian => "Pedestrian",
            LabelType::PersonSitting => "Person_sitting",
            LabelType::Cyclist => "Cyclist",
            LabelType::Tram => "Tram",
            LabelType::Misc => "Misc",
            LabelType::DontCare => "DontCare",
        }
    }

    pub fn class(self) -> ObjectClass {
        match self {
            LabelType::Car => ObjectClass::Car,
            LabelType::Pedestrian => ObjectClass::Pedestrian,
            LabelType::Cyclist => ObjectClass::Cyclist,
            _ => ObjectClass::Other,
        }
    }

    pub fn from_class(class: ObjectClass) -> Self {
        match class {
            ObjectClass::Car => LabelType::Car,
            ObjectClass::Pedestrian => LabelType::Pedestrian,
            ObjectClass::Cyclist => LabelType::Cyclist,
            ObjectClass::Other => LabelType::Misc,
        }
    }
}

impl fmt::Display for LabelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "Car" => LabelType::Car,
            "Van" => LabelType::Van,
            "Truck" => LabelType::Truck,
            "Pedestrian" => LabelType::Pedestrian,
            "Person_sitting" => LabelType::PersonSitting,
            "Cyclist" => LabelType::Cyclist,
            "Tram" => LabelType::Tram,
            "Misc" => LabelType::Misc,
            "DontCare" => LabelType::DontCare,
            _ => return Err(format!("unknown object type `{s}`")),
        })
    }
}

/// One label_2 line, camera-frame geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiLabel {
    pub kind: LabelType,
    pub truncated: f64,
    pub occluded: i32,
    pub alpha: f64,
    /// left, top, right, bottom in image pixels
    pub bbox: [f64; 4],
    pub height: f64,
    pub width: f64,
    pub length: f64,
    /// Bottom center in the rectified camera frame.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl KittiLabel {
    /// Field values used for labels of inserted objects, whose image-space
    /// attributes are unknown.
    pub fn sentinel(kind: LabelType) -> Self {
        KittiLabel {
            kind,
            truncated: -1.0,
            occluded: -1,
            alpha: -10.0,
            bbox: [-1.0; 4],
            height: 1.0,
            width: 1.0,
            length: 1.0,
            location: [0.0; 3],
            rotation_y: 0.0,
            score: None,
        }
    }

    pub fn is_dont_care(&self) -> bool {
        self.kind == LabelType::DontCare
    }

    /// KITTI benchmark difficulty from 2D box height, occlusion, truncation.
    pub fn difficulty(&self) -> Difficulty {
        let h = self.bbox[3] - self.bbox[1];
        if self.truncated < 0.0 || self.occluded < 0 {
            Difficulty::Unknown
        } else if h >= 40.0 && self.occluded == 0 && self.truncated <= 0.15 {
            Difficulty::Easy
        } else if h >= 25.0 && self.occluded <= 1 && self.truncated <= 0.3 {
            Difficulty::Moderate
        } else if h >= 25.0 && self.occluded <= 2 && self.truncated <= 0.5 {
            Difficulty::Hard
        } else {
            Difficulty::Unknown
        }
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 15 && toks.len() != 16 {
            return Err(format!("expected 15 or 16 fields, got {}", toks.len()));
        }
        let kind: LabelType = toks[0].parse()?;
        let mut nums = [0.0f64; 15];
        for (i, t) in toks[1..].iter().enumerate() {
            let v: f64 = t.parse().map_err(|_| format!("bad number `{t}`"))?;
            if !v.is_finite() {
                return Err(format!("non-finite field `{t}`"));
            }
            nums[i] = v;
        }
        let occluded = toks[2].parse::<i32>().map_err(|_| format!("bad occlusion `{}`", toks[2]))?;
        let label = KittiLabel {
            kind,
            truncated: nums[0],
            occluded,
            alpha: nums[2],
            bbox: [nums[3], nums[4], nums[5], nums[6]],
            height: nums[7],
            width: nums[8],
            length: nums[9],
            location: [nums[10], nums[11], nums[12]],
            rotation_y: nums[13],
            score: (toks.len() == 16).then_some(nums[14]),
        };
        if !label.is_dont_care() && !(label.height > 0.0 && label.width > 0.0 && label.length > 0.0) {
            return Err("object dimensions must be positive".into());
        }
        Ok(label)
    }

    pub fn to_line(&self) -> String {
        let mut s = format!(
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            self.kind,
            self.truncated,
            self.occluded,
            self.alpha,
            self.bbox[0],
            self.bbox[1],
            self.bbox[2],
            self.bbox[3],
            self.height,
            self.width,
            self.length,
            self.location[0],
            self.location[1],
            self.location[2],
            self.rotation_y
        );
        if let Some(sc) = self.score {
            s += &format!(" {sc}");
        }
        s
    }
}

pub fn parse_labels(text: &str) -> Result<Vec<KittiLabel>, KittiError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| KittiLabel::parse_line(l).map_err(|msg| KittiError::Parse { line: n + 1, msg }))
        .collect()
}

pub fn labels_to_text(labels: &[KittiLabel]) -> String {
    labels.iter().map(|l| l.to_line() + "\n").collect()
}

/// Camera-frame label to lidar-frame box: the bottom center is mapped
/// through the inverse of R0_rect * Tr_velo_to_cam and lifted by half the
/// height; yaw = -rotation_y - pi/2.
pub fn label_to_lidar_box(label: &KittiLabel, calib: &Calib) -> Result<Box3D, KittiError> {
    let inv = calib.rect_to_velo()?;
    let [x, y, z] = label.location;
    let p = inv * Vector4::new(x, y, z, 1.0);
    let mut b = Box3D::new(
        [p.x, p.y, p.z + label.height / 2.0],
        [label.length, label.width, label.height],
        -label.rotation_y - FRAC_PI_2,
        label.kind.class(),
    );
    b.difficulty = label.difficulty();
    Ok(b)
}

/// Inverse of [`label_to_lidar_box`]. Geometry comes from `b`; the other
/// fields from `template`.
pub fn lidar_box_to_label(b: &Box3D, calib: &Calib, template: &KittiLabel) -> KittiLabel {
    let p = calib.velo_to_rect() * Vector4::new(b.cx, b.cy, b.cz - b.height / 2.0, 1.0);
    KittiLabel {
        height: b.height,
        width: b.width,
        length: b.length,
        location: [p.x, p.y, p.z],
        rotation_y: normalize_angle(-b.yaw - FRAC_PI_2),
        ..template.clone()
    }
}

/// Directory layout of a KITTI object root. Accepts either the dataset root
/// (containing `training/`) or the split directory itself.
#[derive(Debug, Clone)]
pub struct KittiLayout {
    pub base: PathBuf,
}

impl KittiLayout {
    pub fn open(root: &Path) -> Self {
        let training = root.join("training");
        let base = if training.join("velodyne").is_dir() { training } else { root.to_path_buf() };
        Self { base }
    }

    pub fn velodyne(&self, id: &str) -> PathBuf {
        self.base.join("velodyne").join(format!("{id}.bin"))
    }

    pub fn label(&self, id: &str) -> PathBuf {
        self.base.join("label_2").join(format!("{id}.txt"))
    }

    pub fn calib(&self, id: &str) -> PathBuf {
        self.base.join("calib").join(format!("{id}.txt"))
    }

    /// Sorted frame ids of all velodyne scans.
    pub fn frame_ids(&self) -> Result<Vec<String>, KittiError> {
        let dir = self.base.join("velodyne");
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| KittiError::io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .collect();
        ids.sort();
        Ok(ids)
    }
}

/// A frame with its annotations. `labels[i]` is the source of `boxes[i]`;
/// DontCare regions are carried separately.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub frame_id: String,
    pub cloud: PointCloud,
    pub boxes: Vec<Box3D>,
    pub labels: Vec<KittiLabel>,
    pub dont_care: Vec<KittiLabel>,
    pub calib: Calib,
}

impl FrameBundle {
    pub fn from_labels(frame_id: &str, cloud: PointCloud, all: Vec<KittiLabel>, calib: Calib) -> Result<Self, KittiError> {
        let (dont_care, labels): (Vec<_>, Vec<_>) = all.into_iter().partition(|l| l.is_dont_care());
        let boxes = labels.iter().map(|l| label_to_lidar_box(l, &calib)).collect::<Result<_, _>>()?;
        Ok(Self { frame_id: frame_id.to_string(), cloud, boxes, labels, dont_care, calib })
    }

    /// Rebuilds label geometry from the (possibly transformed) boxes.
    pub fn current_labels(&self) -> Vec<KittiLabel> {
        let mut out: Vec<KittiLabel> = self
            .boxes
            .iter()
            .zip(&self.labels)
            .map(|(b, l)| lidar_box_to_label(b, &self.calib, l))
            .collect();
        out.extend(self.dont_care.iter().cloned());
        out
    }
}

pub fn read_frame(layout: &KittiLayout, id: &str) -> Result<FrameBundle, KittiError> {
    let cloud = read_velodyne(&layout.velodyne(id))?;
    let calib_path = layout.calib(id);
    let calib = Calib::parse(&fs::read_to_string(&calib_path).map_err(|e| KittiError::io(&calib_path, e))?)?;
    let label_path = layout.label(id);
    let labels = match fs::read_to_string(&label_path) {
        Ok(t) => parse_labels(&t)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(KittiError::io(&label_path, e)),
    };
    FrameBundle::from_labels(id, cloud, labels, calib)
}

/// Files written for one output frame.
#[derive(Debug, Clone)]
pub struct FramePaths {
    pub velodyne: PathBuf,
    pub label: PathBuf,
    pub calib: PathBuf,
    pub manifest: Option<PathBuf>,
}

/// Writes the frame as a KITTI split under `out_dir`, plus the augmentation
/// manifest when given.
pub fn write_frame(
    bundle: &FrameBundle,
    manifest: Option<&crate::manifest::Manifest>,
    out_dir: &Path,
) -> Result<FramePaths, KittiError> {
    let layout = KittiLayout { base: out_dir.to_path_buf() };
    let id = &bundle.frame_id;
    let paths = FramePaths {
        velodyne: layout.velodyne(id),
        label: layout.label(id),
        calib: layout.calib(id),
        manifest: manifest.map(|_| out_dir.join("manifest").join(format!("{id}.json"))),
    };
    write_velodyne(&paths.velodyne, &bundle.cloud)?;
    let w = |p: &Path, bytes: &[u8]| crate::fsutil::write_atomic(p, bytes).map_err(|e| KittiError::io(p, e));
    w(&paths.label, labels_to_text(&bundle.current_labels()).as_bytes())?;
    w(&paths.calib, bundle.calib.to_text().as_bytes())?;
    if let (Some(m), Some(p)) = (manifest, &paths.manifest) {
        w(p, m.to_json().as_bytes())?;
    }
    Ok(paths)
}
