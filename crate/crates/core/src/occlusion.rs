//! Range-image z-buffering and the range-view occlusion strategies applied
//! after objects are merged into a scene.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{spherical_project, LidarSpec, Pixel, PointCloud, Provenance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcclusionError {
    #[error("unknown occlusion strategy `{0}`")]
    UnknownStrategy(String),
    #[error("strategy needs provenance tags on the merged cloud")]
    MissingProvenance,
    #[error("malformed occlusion report line {line}: {msg}")]
    MalformedReport { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub range: f64,
}

/// Nearest-point z-buffer over the W x H image. Every in-FOV point is either
/// the occupant of its cell or listed in `shadow`; points with no pixel are
/// listed in `out_of_fov`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    pub spec: LidarSpec,
    pub cells: Vec<Option<Cell>>,
    pub shadow: Vec<(usize, Pixel)>,
    pub out_of_fov: Vec<usize>,
}

impl RangeImage {
    pub fn cell(&self, px: Pixel) -> Option<Cell> {
        self.cells[px.v * self.spec.width + px.u]
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Mask of the points that survive z-buffering, out-of-FOV points
    /// included.
    pub fn survivors(&self, n: usize) -> Vec<bool> {
        let mut keep = vec![false; n];
        for c in self.cells.iter().flatten() {
            keep[c.index] = true;
        }
        for &i in &self.out_of_fov {
            keep[i] = true;
        }
        keep
    }
}

/// Pixel of every point, `None` for points without one.
pub fn pixels_of(cloud: &PointCloud, spec: &LidarSpec) -> Vec<Option<Pixel>> {
    cloud
        .points()
        .iter()
        .map(|p| spherical_project(p, spec).ok().and_then(|pr| pr.pixel()))
        .collect()
}

/// Projects every point and keeps the nearest per pixel; equal ranges go to
/// the lower index.
pub fn render_range_image(cloud: &PointCloud, spec: &LidarSpec) -> RangeImage {
    let pixels = pixels_of(cloud, spec);
    let ranges: Vec<f64> = cloud.points().iter().map(|p| p.range()).collect();
    zbuffer(&pixels, &ranges, spec, |_| true)
}

/// Z-buffer over precomputed pixels and ranges, restricted to the points
/// for which `present` holds.
fn zbuffer(pixels: &[Option<Pixel>], ranges: &[f64], spec: &LidarSpec, present: impl Fn(usize) -> bool) -> RangeImage {
    let mut img = RangeImage {
        spec: *spec,
        cells: vec![None; spec.width * spec.height],
        shadow: Vec::new(),
        out_of_fov: Vec::new(),
    };
    for (i, (px, &range)) in pixels.iter().zip(ranges).enumerate() {
        if !present(i) {
            continue;
        }
        let Some(px) = *px else {
            img.out_of_fov.push(i);
            continue;
        };
        let slot = &mut img.cells[px.v * spec.width + px.u];
        match slot {
            None => *slot = Some(Cell { index: i, range }),
            Some(cur) if range < cur.range => {
                img.shadow.push((cur.index, px));
                *cur = Cell { index: i, range };
            }
            Some(_) => img.shadow.push((i, px)),
        }
    }
    img
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Keep only z-buffer winners.
    Naive,
    /// Naive, then drop inserted objects that kept too few points.
    #[default]
    Culling,
    /// Delete background points that share a pixel with an object point.
    Drilling,
    /// Leave the merged cloud untouched.
    None,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::Culling => "culling",
            Strategy::Drilling => "drilling",
            Strategy::None => "none",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = OcclusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(Strategy::Naive),
            "culling" => Ok(Strategy::Culling),
            "drilling" => Ok(Strategy::Drilling),
            "none" => Ok(Strategy::None),
            _ => Err(OcclusionError::UnknownStrategy(s.to_string())),
        }
    }
}

/// Culling thresholds: an object survives when it keeps at least
/// `min_points` points and at least `min_fraction` of its points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CullingParams {
    pub min_points: usize,
    pub min_fraction: f64,
}

impl Default for CullingParams {
    fn default() -> Self {
        Self { min_points: 4, min_fraction: 0.25 }
    }
}

impl CullingParams {
    pub fn keeps(&self, visible: usize, original: usize) -> bool {
        visible >= self.min_points && (visible as f64) >= self.min_fraction * original as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectRetention {
    pub id: u32,
    /// Points of the object in the merged cloud.
    pub original: usize,
    /// Points still visible after z-buffering, before any drop decision.
    pub visible: usize,
    /// Points in the final cloud; zero when dropped.
    pub retained: usize,
    pub dropped: bool,
}

impl ObjectRetention {
    pub fn visible_fraction(&self) -> f64 {
        if self.original == 0 {
            0.0
        } else {
            self.visible as f64 / self.original as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OcclusionReport {
    pub strategy: Strategy,
    /// One entry per inserted object, by id.
    pub objects: Vec<ObjectRetention>,
    /// Indices (into the merged cloud) of background points not in the output.
    pub deleted_background: Vec<usize>,
}

impl OcclusionReport {
    pub fn dropped(&self) -> impl Iterator<Item = u32> + '_ {
        self.objects.iter().filter(|o| o.dropped).map(|o| o.id)
    }

    /// Line-oriented text form:
    ///
    /// ```text
    /// strategy <name>
    /// object <id> original <n> visible <n> retained <n> <kept|dropped>
    /// deleted_background <idx> <idx> ...
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = format!("strategy {}\n", self.strategy);
        for o in &self.objects {
            s += &format!(
                "object {} original {} visible {} retained {} {}\n",
                o.id,
                o.original,
                o.visible,
                o.retained,
                if o.dropped { "dropped" } else { "kept" }
            );
        }
        s += "deleted_background";
        for i in &self.deleted_background {
            s += &format!(" {i}");
        }
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, OcclusionError> {
        let mut report = OcclusionReport::default();
        let mut seen_strategy = false;
        for (n, line) in text.lines().enumerate() {
            let bad = |msg: &str| OcclusionError::MalformedReport { line: n + 1, msg: msg.to_string() };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let num = |t: &str| t.parse::<usize>().map_err(|_| bad("expected an integer"));
            match toks.as_slice() {
                [] => {}
                ["strategy", name] => {
                    report.strategy = name.parse()?;
                    seen_strategy = true;
                }
                ["object", id, "original", o, "visible", v, "retained", r, state] => {
                    let id = id.parse::<u32>().map_err(|_| bad("bad object id"))?;
                    let dropped = match *state {
                        "kept" => false,
                        "dropped" => true,
                        _ => return Err(bad("expected kept or dropped")),
                    };
                    let (original, visible, retained) = (num(o)?, num(v)?, num(r)?);
                    if visible > original || retained > original {
                        return Err(bad("retained more points than the object has"));
                    }
                    report.objects.push(ObjectRetention { id, original, visible, retained, dropped });
                }
                ["deleted_background", rest @ ..] => {
                    report.deleted_background = rest.iter().map(|t| num(t)).collect::<Result<_, _>>()?;
                }
                _ => return Err(bad("unrecognized line")),
            }
        }
        if !seen_strategy {
            return Err(OcclusionError::MalformedReport { line: 0, msg: "missing strategy line".into() });
        }
        Ok(report)
    }
}

fn require_tags(cloud: &PointCloud) -> Result<&[Provenance], OcclusionError> {
    cloud.tags().ok_or(OcclusionError::MissingProvenance)
}

fn count_by_object(tags: &[Provenance], keep: Option<&[bool]>) -> BTreeMap<u32, usize> {
    let mut m = BTreeMap::new();
    for (i, t) in tags.iter().enumerate() {
        if let Provenance::Inserted(id) = t {
            let e = m.entry(*id).or_insert(0);
            if keep.is_none_or(|k| k[i]) {
                *e += 1;
            }
        }
    }
    m
}

fn build_report(strategy: Strategy, tags: &[Provenance], visible: &[bool], keep: &[bool], dropped: &[u32]) -> OcclusionReport {
    let original = count_by_object(tags, None);
    let vis = count_by_object(tags, Some(visible));
    let fin = count_by_object(tags, Some(keep));
    let objects = original
        .iter()
        .map(|(&id, &n)| ObjectRetention {
            id,
            original: n,
            visible: vis[&id],
            retained: fin[&id],
            dropped: dropped.contains(&id),
        })
        .collect();
    let deleted_background = tags
        .iter()
        .enumerate()
        .filter(|&(i, t)| t.is_background() && !keep[i])
        .map(|(i, _)| i)
        .collect();
    OcclusionReport { strategy, objects, deleted_background }
}

/// Keeps exactly the z-buffer winners plus points without a pixel.
pub fn apply_naive(cloud: &PointCloud, spec: &LidarSpec) -> PointCloud {
    cloud.select(&render_range_image(cloud, spec).survivors(cloud.len()))
}

/// Z-buffers, then removes every inserted object left with too few points.
/// Background hidden only by a removed object is restored.
pub fn apply_culling(
    cloud: &PointCloud,
    spec: &LidarSpec,
    params: &CullingParams,
) -> Result<(PointCloud, OcclusionReport), OcclusionError> {
    let tags = require_tags(cloud)?;
    let pixels = pixels_of(cloud, spec);
    let ranges: Vec<f64> = cloud.points().iter().map(|p| p.range()).collect();
    let visible = zbuffer(&pixels, &ranges, spec, |_| true).survivors(cloud.len());
    let original = count_by_object(tags, None);
    let vis = count_by_object(tags, Some(&visible));
    let dropped: Vec<u32> = original
        .iter()
        .filter(|(id, &n)| !params.keeps(vis[id], n))
        .map(|(&id, _)| id)
        .collect();
    let keep = if dropped.is_empty() {
        visible.clone()
    } else {
        let present = |i: usize| tags[i].inserted_id().is_none_or(|id| !dropped.contains(&id));
        zbuffer(&pixels, &ranges, spec, present).survivors(cloud.len())
    };
    let report = build_report(Strategy::Culling, tags, &visible, &keep, &dropped);
    Ok((cloud.select(&keep), report))
}

/// In every pixel holding an inserted point, the nearest inserted point is
/// kept and all background points are deleted; other pixels keep their
/// nearest point.
pub fn apply_drilling(cloud: &PointCloud, spec: &LidarSpec) -> Result<(PointCloud, OcclusionReport), OcclusionError> {
    let tags = require_tags(cloud)?;
    let mut best_any: Vec<Option<Cell>> = vec![None; spec.width * spec.height];
    let mut best_obj: Vec<Option<Cell>> = vec![None; spec.width * spec.height];
    let mut keep = vec![false; cloud.len()];
    for (i, (p, px)) in cloud.points().iter().zip(pixels_of(cloud, spec)).enumerate() {
        let Some(px) = px else {
            keep[i] = true;
            continue;
        };
        let k = px.v * spec.width + px.u;
        let range = p.range();
        if best_any[k].is_none_or(|c| range < c.range) {
            best_any[k] = Some(Cell { index: i, range });
        }
        if !tags[i].is_background() && best_obj[k].is_none_or(|c| range < c.range) {
            best_obj[k] = Some(Cell { index: i, range });
        }
    }
    for (any, obj) in best_any.iter().zip(&best_obj) {
        if let Some(c) = obj.or(*any) {
            keep[c.index] = true;
        }
    }
    let report = build_report(Strategy::Drilling, tags, &keep, &keep, &[]);
    Ok((cloud.select(&keep), report))
}

/// Applies `strategy` to a merged, provenance-tagged cloud.
pub fn resolve(
    cloud: &PointCloud,
    spec: &LidarSpec,
    strategy: Strategy,
    culling: &CullingParams,
) -> Result<(PointCloud, OcclusionReport), OcclusionError> {
    match strategy {
        Strategy::None => {
            let all = vec![true; cloud.len()];
            let report = match cloud.tags() {
                Some(tags) => build_report(Strategy::None, tags, &all, &all, &[]),
                None => OcclusionReport { strategy, ..Default::default() },
            };
            Ok((cloud.clone(), report))
        }
        Strategy::Naive => {
            let tags = require_tags(cloud)?;
            let keep = render_range_image(cloud, spec).survivors(cloud.len());
            let report = build_report(Strategy::Naive, tags, &keep, &keep, &[]);
            Ok((cloud.select(&keep), report))
        }
        Strategy::Culling => apply_culling(cloud, spec, culling),
        Strategy::Drilling => apply_drilling(cloud, spec),
    }
}
