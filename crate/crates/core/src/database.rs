//! Ground-truth object database: per-object surface points, box, and the
//! per-column point histogram ("rangebin") used by placement.
//!
//! # File format
//!
//! A database is a little-endian binary container plus a human-readable
//! sidecar `<file>.index`. The binary layout is:
//!
//! ```text
//! magic            8 bytes  "CAAUGGTD"
//! version          u32      FORMAT_VERSION
//! spec             u32 width, u32 height, f64 fov_up, f64 fov_down (radians)
//! metadata         u64 frames, u64 skipped_empty, u64 skipped_class, u64 skipped_invalid
//! object count     u64
//! per object:
//!   id             u64
//!   class          u8   (0 Car, 1 Pedestrian, 2 Cyclist)
//!   difficulty     u8   (0 Easy, 1 Moderate, 2 Hard, 3 Unknown)
//!   box            7 x f64  cx cy cz length width height yaw
//!   source frame   u32 byte length + UTF-8 bytes
//!   start column   u32
//!   rangebin       u32 length + length x u32
//!   points         u32 count + count x (f64 x, f64 y, f64 z, f64 intensity)
//! ```
//!
//! Objects are stored grouped by class in class order, each group in id
//! order, so identical inputs produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::geometry::{
    points_in_box_3d, Box3D, Difficulty, GeometryError, LidarSpec, ObjectClass, PointCloud,
};
use crate::geometry::Point;

pub const MAGIC: &[u8; 8] = b"CAAUGGTD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatabaseError {
    #[error("object has no points")]
    EmptyObject,
    #[error("object spans {span} of {width} columns; more than half the sweep")]
    SpanTooWide { span: usize, width: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a database of format version {FORMAT_VERSION}: {0}")]
    FormatVersionMismatch(String),
    #[error("malformed database: {0}")]
    Malformed(String),
}

/// One database entry. `points` are in the original lidar-frame pose of
/// `bbox`; `rangebin[k]` counts the points in column `start_col + k`
/// (mod width).
#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub id: u64,
    pub bbox: Box3D,
    pub points: PointCloud,
    pub rangebin: Vec<u32>,
    pub start_col: usize,
    pub source_frame: String,
}

impl GtObject {
    /// Span length in columns.
    pub fn span(&self) -> usize {
        self.rangebin.len()
    }

    /// Total point count.
    pub fn point_count(&self) -> u64 {
        self.rangebin.iter().map(|&c| c as u64).sum()
    }

    pub fn class(&self) -> ObjectClass {
        self.bbox.class
    }
}

/// Start column and per-column counts of the minimal circular arc that holds
/// every point's column.
pub fn compute_rangebin(points: &PointCloud, spec: &LidarSpec) -> Result<(usize, Vec<u32>), DatabaseError> {
    if points.is_empty() {
        return Err(DatabaseError::EmptyObject);
    }
    let w = spec.width;
    let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
    for p in points.points() {
        *counts.entry(spec.column(p)?).or_default() += 1;
    }
    let cols: Vec<usize> = counts.keys().copied().collect();
    let m = cols.len();
    // The arc starts right after the widest empty gap. The wrap-around gap is
    // considered first so ties keep the natural (non-wrapping) ordering.
    let mut best_gap = cols[0] + w - cols[m - 1];
    let mut start_idx = 0;
    for i in 0..m - 1 {
        let gap = cols[i + 1] - cols[i];
        if gap > best_gap {
            best_gap = gap;
            start_idx = i + 1;
        }
    }
    let span = w - best_gap + 1;
    if span > w / 2 {
        return Err(DatabaseError::SpanTooWide { span, width: w });
    }
    let start = cols[start_idx];
    let mut rangebin = vec![0u32; span];
    for (&c, &n) in &counts {
        rangebin[(c + w - start) % w] += n;
    }
    Ok((start, rangebin))
}

/// Build-time bookkeeping stored alongside the objects.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DatabaseMeta {
    pub frames: u64,
    /// Labels whose box contained no points.
    pub skipped_empty: u64,
    /// Labels of classes that are never inserted.
    pub skipped_class: u64,
    /// Labels whose points could not form a rangebin (too wide, at origin).
    pub skipped_invalid: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtDatabase {
    pub spec: LidarSpec,
    pub meta: DatabaseMeta,
    classes: BTreeMap<ObjectClass, Vec<GtObject>>,
}

impl GtDatabase {
    pub fn empty(spec: LidarSpec) -> Self {
        Self { spec, meta: DatabaseMeta::default(), classes: BTreeMap::new() }
    }

    pub fn class(&self, class: ObjectClass) -> &[GtObject] {
        self.classes.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn objects(&self) -> impl Iterator<Item = &GtObject> {
        self.classes.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_counts(&self) -> BTreeMap<ObjectClass, usize> {
        ObjectClass::INSERTABLE.iter().map(|&c| (c, self.class(c).len())).collect()
    }

    /// Adds an object whose rangebin is already computed under `self.spec`.
    pub fn insert(&mut self, obj: GtObject) {
        let list = self.classes.entry(obj.class()).or_default();
        let at = list.partition_point(|o| o.id < obj.id);
        list.insert(at, obj);
    }

    /// Recomputes every rangebin under another spec. Objects that no longer
    /// form a valid rangebin are dropped and counted as invalid.
    pub fn reproject(&self, spec: LidarSpec) -> Result<Self, DatabaseError> {
        spec.validate()?;
        let mut out = Self { spec, meta: self.meta, classes: BTreeMap::new() };
        for obj in self.objects() {
            match compute_rangebin(&obj.points, &spec) {
                Ok((start_col, rangebin)) => out.insert(GtObject { start_col, rangebin, ..obj.clone() }),
                Err(DatabaseError::SpanTooWide { .. }) | Err(DatabaseError::Geometry(_)) => {
                    out.meta.skipped_invalid += 1
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

/// Incremental database construction, one frame at a time.
#[derive(Debug)]
pub struct DatabaseBuilder {
    db: GtDatabase,
    next_id: u64,
}

impl DatabaseBuilder {
    pub fn new(spec: LidarSpec) -> Self {
        Self { db: GtDatabase::empty(spec), next_id: 0 }
    }

    pub fn add_frame(&mut self, frame_id: &str, cloud: &PointCloud, boxes: &[Box3D]) {
        self.db.meta.frames += 1;
        for b in boxes {
            let id = self.next_id;
            self.next_id += 1;
            if !ObjectClass::INSERTABLE.contains(&b.class) {
                self.db.meta.skipped_class += 1;
                continue;
            }
            let idx = points_in_box_3d(cloud, b);
            if idx.is_empty() {
                self.db.meta.skipped_empty += 1;
                continue;
            }
            let points = cloud.subset(&idx).strip_tags();
            match compute_rangebin(&points, &self.db.spec) {
                Ok((start_col, rangebin)) => self.db.insert(GtObject {
                    id,
                    bbox: *b,
                    points,
                    rangebin,
                    start_col,
                    source_frame: frame_id.to_string(),
                }),
                Err(_) => self.db.meta.skipped_invalid += 1,
            }
        }
    }

    pub fn finish(self) -> GtDatabase {
        self.db
    }
}

/// Builds a database from `(frame id, cloud, boxes)` triples.
pub fn build_database<'a, I>(frames: I, spec: LidarSpec) -> GtDatabase
where
    I: IntoIterator<Item = (&'a str, &'a PointCloud, &'a [Box3D])>,
{
    let mut b = DatabaseBuilder::new(spec);
    for (id, cloud, boxes) in frames {
        b.add_frame(id, cloud, boxes);
    }
    b.finish()
}

/// Requested insertion count per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleCounts {
    pub car: usize,
    pub pedestrian: usize,
    pub cyclist: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        Self { car: 15, pedestrian: 10, cyclist: 10 }
    }
}

impl SampleCounts {
    pub const NONE: SampleCounts = SampleCounts { car: 0, pedestrian: 0, cyclist: 0 };

    pub fn get(&self, class: ObjectClass) -> usize {
        match class {
            ObjectClass::Car => self.car,
            ObjectClass::Pedestrian => self.pedestrian,
            ObjectClass::Cyclist => self.cyclist,
            ObjectClass::Other => 0,
        }
    }

    pub fn total(&self) -> usize {
        self.car + self.pedestrian + self.cyclist
    }
}

/// Uniform sampling without replacement within each class, classes in
/// Car, Pedestrian, Cyclist order.
pub fn sample_objects<'a, R: Rng + ?Sized>(
    db: &'a GtDatabase,
    counts: &SampleCounts,
    rng: &mut R,
) -> Vec<&'a GtObject> {
    let mut out = Vec::new();
    for class in ObjectClass::INSERTABLE {
        let pool = db.class(class);
        let k = counts.get(class).min(pool.len());
        if k == 0 {
            continue;
        }
        out.extend(rand::seq::index::sample(rng, pool.len(), k).into_iter().map(|i| &pool[i]));
    }
    out
}

pub fn index_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".index");
    PathBuf::from(s)
}

pub fn encode_database(db: &GtDatabase) -> Vec<u8> {
    let mut w = Vec::with_capacity(1 << 16);
    w.extend_from_slice(MAGIC);
    put_u32(&mut w, FORMAT_VERSION);
    put_u32(&mut w, db.spec.width as u32);
    put_u32(&mut w, db.spec.height as u32);
    put_f64(&mut w, db.spec.fov_up);
    put_f64(&mut w, db.spec.fov_down);
    for v in [db.meta.frames, db.meta.skipped_empty, db.meta.skipped_class, db.meta.skipped_invalid] {
        put_u64(&mut w, v);
    }
    put_u64(&mut w, db.len() as u64);
    for o in db.objects() {
        put_u64(&mut w, o.id);
        w.push(o.bbox.class.code());
        w.push(o.bbox.difficulty.code());
        let b = &o.bbox;
        for v in [b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw] {
            put_f64(&mut w, v);
        }
        put_u32(&mut w, o.source_frame.len() as u32);
        w.extend_from_slice(o.source_frame.as_bytes());
        put_u32(&mut w, o.start_col as u32);
        put_u32(&mut w, o.rangebin.len() as u32);
        for &c in &o.rangebin {
            put_u32(&mut w, c);
        }
        put_u32(&mut w, o.points.len() as u32);
        for p in o.points.points() {
            for v in [p.x, p.y, p.z, p.intensity] {
                put_f64(&mut w, v);
            }
        }
    }
    w
}

pub fn encode_index(db: &GtDatabase) -> String {
    let mut s = String::from("# caaug ground-truth database index\n");
    s += &format!("format_version={FORMAT_VERSION}\n");
    s += &format!("width={}\nheight={}\n", db.spec.width, db.spec.height);
    s += &format!("fov_up_deg={}\nfov_down_deg={}\n", db.spec.fov_up.to_degrees(), db.spec.fov_down.to_degrees());
    s += &format!("frames={}\n", db.meta.frames);
    s += &format!("skipped_empty={}\n", db.meta.skipped_empty);
    s += &format!("skipped_class={}\n", db.meta.skipped_class);
    s += &format!("skipped_invalid={}\n", db.meta.skipped_invalid);
    s += &format!("objects={}\n", db.len());
    for (class, n) in db.class_counts() {
        s += &format!("class.{class}={n}\n");
    }
    s
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DatabaseError> {
        if self.buf.len() < n {
            return Err(DatabaseError::Malformed(format!("truncated while reading {what}")));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self, what: &str) -> Result<u8, DatabaseError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, DatabaseError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, DatabaseError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, DatabaseError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// Length prefix checked against the remaining bytes so corrupt counts
    /// cannot trigger huge allocations.
    fn len(&mut self, elem_size: usize, what: &str) -> Result<usize, DatabaseError> {
        let n = self.u32(what)? as usize;
        if n.saturating_mul(elem_size) > self.buf.len() {
            return Err(DatabaseError::Malformed(format!("{what} length {n} exceeds file size")));
        }
        Ok(n)
    }
}

pub fn decode_database(bytes: &[u8]) -> Result<GtDatabase, DatabaseError> {
    let mut r = Reader { buf: bytes };
    let magic = r
        .take(MAGIC.len(), "magic")
        .map_err(|_| DatabaseError::FormatVersionMismatch("file too short for header".into()))?;
    if magic != MAGIC {
        return Err(DatabaseError::FormatVersionMismatch("bad magic".into()));
    }
    let version = r
        .u32("version")
        .map_err(|_| DatabaseError::FormatVersionMismatch("file too short for header".into()))?;
    if version != FORMAT_VERSION {
        return Err(DatabaseError::FormatVersionMismatch(format!("found version {version}")));
    }
    let spec = LidarSpec {
        width: r.u32("width")? as usize,
        height: r.u32("height")? as usize,
        fov_up: r.f64("fov_up")?,
        fov_down: r.f64("fov_down")?,
    };
    spec.validate().map_err(|e| DatabaseError::Malformed(e.to_string()))?;
    let meta = DatabaseMeta {
        frames: r.u64("frames")?,
        skipped_empty: r.u64("skipped_empty")?,
        skipped_class: r.u64("skipped_class")?,
        skipped_invalid: r.u64("skipped_invalid")?,
    };
    let count = r.u64("object count")?;
    let mut db = GtDatabase { spec, meta, classes: BTreeMap::new() };
    let mut last_key = None;
    for _ in 0..count {
        let id = r.u64("id")?;
        let class = ObjectClass::from_code(r.u8("class")?)
            .filter(|c| ObjectClass::INSERTABLE.contains(c))
            .ok_or_else(|| DatabaseError::Malformed("bad class code".into()))?;
        let difficulty = Difficulty::from_code(r.u8("difficulty")?)
            .ok_or_else(|| DatabaseError::Malformed("bad difficulty code".into()))?;
        let mut v = [0.0; 7];
        for x in &mut v {
            *x = r.f64("box")?;
        }
        let bbox = Box3D {
            cx: v[0],
            cy: v[1],
            cz: v[2],
            length: v[3],
            width: v[4],
            height: v[5],
            yaw: v[6],
            class,
            difficulty,
        };
        bbox.validate().map_err(|e| DatabaseError::Malformed(e.to_string()))?;
        let n = r.len(1, "source frame")?;
        let source_frame = String::from_utf8(r.take(n, "source frame")?.to_vec())
            .map_err(|_| DatabaseError::Malformed("source frame is not UTF-8".into()))?;
        let start_col = r.u32("start column")? as usize;
        let l = r.len(4, "rangebin")?;
        let mut rangebin = Vec::with_capacity(l);
        for _ in 0..l {
            rangebin.push(r.u32("rangebin")?);
        }
        let n = r.len(32, "points")?;
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            points.push(Point::new(r.f64("x")?, r.f64("y")?, r.f64("z")?, r.f64("intensity")?));
        }
        let obj = GtObject { id, bbox, points: PointCloud::new(points), rangebin, start_col, source_frame };
        check_object(&obj, &spec)?;
        // grouped by class, ids ascending within a class
        let key = (class, id);
        if last_key.is_some_and(|k| k >= key) {
            return Err(DatabaseError::Malformed("objects out of order".into()));
        }
        last_key = Some(key);
        db.classes.entry(class).or_default().push(obj);
    }
    if !r.buf.is_empty() {
        return Err(DatabaseError::Malformed(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(db)
}

fn check_object(o: &GtObject, spec: &LidarSpec) -> Result<(), DatabaseError> {
    let bad = |m: &str| Err(DatabaseError::Malformed(format!("object {}: {m}", o.id)));
    if o.rangebin.is_empty() || o.rangebin.len() > spec.width {
        return bad("rangebin length out of range");
    }
    if o.rangebin[0] == 0 || o.rangebin[o.rangebin.len() - 1] == 0 {
        return bad("rangebin has untrimmed zero ends");
    }
    if o.start_col >= spec.width {
        return bad("start column outside the image");
    }
    if o.point_count() != o.points.len() as u64 {
        return bad("rangebin total differs from point count");
    }
    if o.points.points().iter().any(|p| !p.is_finite()) {
        return bad("non-finite point");
    }
    Ok(())
}

/// Writes the binary database and its `.index` sidecar.
pub fn save_database(db: &GtDatabase, path: &Path) -> Result<(), DatabaseError> {
    crate::fsutil::write_atomic(path, &encode_database(db))?;
    crate::fsutil::write_atomic(&index_path(path), encode_index(db).as_bytes())?;
    Ok(())
}

pub fn load_database(path: &Path) -> Result<GtDatabase, DatabaseError> {
    decode_database(&fs::read(path)?)
}

/// Loads a database and recomputes its rangebins if it was built under a
/// different spec.
pub fn load_database_for(path: &Path, spec: &LidarSpec) -> Result<GtDatabase, DatabaseError> {
    let db = load_database(path)?;
    if db.spec == *spec {
        Ok(db)
    } else {
        db.reproject(*spec)
    }
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.extend_from_slice(&v.to_le_bytes());
}
