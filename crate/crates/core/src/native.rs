//! Self-describing binary frame: lidar spec, tagged points and boxes in one
//! file. Used for synthetic test scenes and for the provenance-preserving
//! copy of each augmented frame.
//!
//! ```text
//! magic        8 bytes "CAAUGFRM"
//! version      u32
//! spec         u32 width, u32 height, f64 fov_up, f64 fov_down
//! frame id     u32 byte length + UTF-8
//! tagged       u8 (0 or 1)
//! points       u64 count, then per point f64 x, y, z, intensity and, when
//!              tagged, u8 kind (0 ground, 1 obstacle, 2 inserted) + u32 id
//! boxes        u32 count, then per box u8 class, u8 difficulty,
//!              7 x f64 cx cy cz length width height yaw
//! ```

use thiserror::Error;

use crate::geometry::{Box3D, Difficulty, LidarSpec, ObjectClass, Point, PointCloud, Provenance};

pub const MAGIC: &[u8; 8] = b"CAAUGFRM";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NativeError {
    #[error("not a native frame (bad magic or version)")]
    BadHeader,
    #[error("malformed native frame: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NativeFrame {
    pub spec: LidarSpec,
    pub frame_id: String,
    pub cloud: PointCloud,
    pub boxes: Vec<Box3D>,
}

impl NativeFrame {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Vec::with_capacity(64 + self.cloud.len() * 37);
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&VERSION.to_le_bytes());
        w.extend_from_slice(&(self.spec.width as u32).to_le_bytes());
        w.extend_from_slice(&(self.spec.height as u32).to_le_bytes());
        w.extend_from_slice(&self.spec.fov_up.to_le_bytes());
        w.extend_from_slice(&self.spec.fov_down.to_le_bytes());
        w.extend_from_slice(&(self.frame_id.len() as u32).to_le_bytes());
        w.extend_from_slice(self.frame_id.as_bytes());
        let tags = self.cloud.tags();
        w.push(tags.is_some() as u8);
        w.extend_from_slice(&(self.cloud.len() as u64).to_le_bytes());
        for (i, p) in self.cloud.points().iter().enumerate() {
            for v in [p.x, p.y, p.z, p.intensity] {
                w.extend_from_slice(&v.to_le_bytes());
            }
            if let Some(t) = tags {
                let (kind, id) = match t[i] {
                    Provenance::Ground => (0u8, 0u32),
                    Provenance::Obstacle => (1, 0),
                    Provenance::Inserted(id) => (2, id),
                };
                w.push(kind);
                w.extend_from_slice(&id.to_le_bytes());
            }
        }
        w.extend_from_slice(&(self.boxes.len() as u32).to_le_bytes());
        for b in &self.boxes {
            w.push(b.class.code());
            w.push(b.difficulty.code());
            for v in [b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw] {
                w.extend_from_slice(&v.to_le_bytes());
            }
        }
        w
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, NativeError> {
        let mut r = Cursor { buf: bytes };
        if r.take(8).ok() != Some(&MAGIC[..]) || r.u32().ok() != Some(VERSION) {
            return Err(NativeError::BadHeader);
        }
        let spec = LidarSpec { width: r.u32()? as usize, height: r.u32()? as usize, fov_up: r.f64()?, fov_down: r.f64()? };
        spec.validate().map_err(|e| NativeError::Malformed(e.to_string()))?;
        let n = r.u32()? as usize;
        let frame_id = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| NativeError::Malformed("frame id is not UTF-8".into()))?;
        let tagged = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(NativeError::Malformed("bad tag flag".into())),
        };
        let count = r.u64()?;
        let rec = if tagged { 37 } else { 32 };
        if count.saturating_mul(rec) > r.buf.len() as u64 {
            return Err(NativeError::Malformed("point count exceeds file size".into()));
        }
        let mut points = Vec::with_capacity(count as usize);
        let mut tags = Vec::with_capacity(if tagged { count as usize } else { 0 });
        for _ in 0..count {
            let p = Point::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            if !p.is_finite() {
                return Err(NativeError::Malformed("non-finite point".into()));
            }
            points.push(p);
            if tagged {
                let kind = r.u8()?;
                let id = r.u32()?;
                tags.push(match kind {
                    0 => Provenance::Ground,
                    1 => Provenance::Obstacle,
                    2 => Provenance::Inserted(id),
                    _ => return Err(NativeError::Malformed("bad provenance kind".into())),
                });
            }
        }
        let cloud = if tagged { PointCloud::with_tags(points, tags) } else { PointCloud::new(points) };
        let nb = r.u32()? as usize;
        if nb.saturating_mul(58) > r.buf.len() {
            return Err(NativeError::Malformed("box count exceeds file size".into()));
        }
        let mut boxes = Vec::with_capacity(nb);
        for _ in 0..nb {
            let class = ObjectClass::from_code(r.u8()?).ok_or_else(|| NativeError::Malformed("bad class".into()))?;
            let difficulty = Difficulty::from_code(r.u8()?).ok_or_else(|| NativeError::Malformed("bad difficulty".into()))?;
            let b = Box3D {
                cx: r.f64()?,
                cy: r.f64()?,
                cz: r.f64()?,
                length: r.f64()?,
                width: r.f64()?,
                height: r.f64()?,
                yaw: r.f64()?,
                class,
                difficulty,
            };
            b.validate().map_err(|e| NativeError::Malformed(e.to_string()))?;
            boxes.push(b);
        }
        if !r.buf.is_empty() {
            return Err(NativeError::Malformed("trailing bytes".into()));
        }
        Ok(NativeFrame { spec, frame_id, cloud, boxes })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NativeError> {
        if self.buf.len() < n {
            return Err(NativeError::Malformed("truncated".into()));
        }
        let (h, t) = self.buf.split_at(n);
        self.buf = t;
        Ok(h)
    }

    fn u8(&mut self) -> Result<u8, NativeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NativeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NativeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NativeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
