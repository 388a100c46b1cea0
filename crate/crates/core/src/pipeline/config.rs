//! Augmentation settings and their `key = value` text form.
//!
//! Lines are `key = value`; `#` starts a comment; unknown keys are errors.
//! Angles are in degrees. Recognized keys, with defaults:
//!
//! ```text
//! seed = 0
//! workers = 0                       # 0 = one per core
//! lidar.width = 2048
//! lidar.height = 64
//! lidar.fov_up_deg = 2
//! lidar.fov_down_deg = -24.8
//! partition.pillar_size = 0.25
//! partition.sigma = 0.4
//! placement.threshold = 0.8
//! placement.strategy = rotate       # rotate | filter | original
//! placement.max_angle_retries = none
//! placement.window = full           # full | kitti-front | <lo>..<hi>
//! placement.scan = circular         # circular | linear
//! placement.occlusion_test = unoccluded   # unoccluded | literal
//! placement.collision = paper-corners     # paper-corners | strict-polygon
//! placement.update_validspace = false
//! placement.near_to_far = false
//! sample.car = 15
//! sample.pedestrian = 10
//! sample.cyclist = 10
//! occlusion.strategy = culling      # naive | culling | drilling | none
//! occlusion.min_points = 4
//! occlusion.min_fraction = 0.25
//! global.enabled = true
//! global.rotation_deg = 45          # uniform in [-45, 45]
//! global.flip_probability = 0.5
//! global.scale_min = 0.95
//! global.scale_max = 1.05
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::database::SampleCounts;
use crate::geometry::LidarSpec;
use crate::occlusion::{CullingParams, Strategy};
use crate::placement::PlacementConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Whole-frame rotation, mirror and scale drawn per frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalAugParams {
    pub enabled: bool,
    /// Half-width of the uniform rotation range, radians.
    pub rotation_range: f64,
    pub flip_probability: f64,
    pub scale_range: (f64, f64),
}

impl Default for GlobalAugParams {
    fn default() -> Self {
        Self {
            enabled: true,
            rotation_range: std::f64::consts::FRAC_PI_4,
            flip_probability: 0.5,
            scale_range: (0.95, 1.05),
        }
    }
}

impl GlobalAugParams {
    pub const DISABLED: GlobalAugParams =
        GlobalAugParams { enabled: false, rotation_range: 0.0, flip_probability: 0.0, scale_range: (1.0, 1.0) };
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugConfig {
    pub spec: LidarSpec,
    pub pillar_size: f64,
    pub sigma: f64,
    pub placement: PlacementConfig,
    pub counts: SampleCounts,
    pub strategy: Strategy,
    pub culling: CullingParams,
    pub global: GlobalAugParams,
    pub seed: u64,
    pub workers: usize,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            spec: LidarSpec::default(),
            pillar_size: 0.25,
            sigma: 0.4,
            placement: PlacementConfig::default(),
            counts: SampleCounts::default(),
            strategy: Strategy::Culling,
            culling: CullingParams::default(),
            global: GlobalAugParams::default(),
            seed: 0,
            workers: 0,
        }
    }
}

fn parse_window(v: &str, spec: &LidarSpec) -> Result<Option<(usize, usize)>, String> {
    match v {
        "full" => Ok(None),
        "kitti-front" => Ok(Some(spec.kitti_front_window())),
        _ => {
            let (a, b) = v.split_once("..").ok_or("expected full, kitti-front or <lo>..<hi>")?;
            let lo = a.trim().parse().map_err(|_| format!("bad column `{a}`"))?;
            let hi = b.trim().parse().map_err(|_| format!("bad column `{b}`"))?;
            Ok(Some((lo, hi)))
        }
    }
}

fn parse_value<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: String| Err(ConfigError::Invalid(m));
        self.spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.pillar_size > 0.0 && self.pillar_size.is_finite()) {
            return inv(format!("pillar size {} must be positive", self.pillar_size));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return inv(format!("sigma {} must be positive", self.sigma));
        }
        self.placement.validate(&self.spec).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.culling.min_fraction) {
            return inv("occlusion.min_fraction must lie in [0, 1]".into());
        }
        let g = &self.global;
        if !(g.rotation_range >= 0.0 && g.rotation_range.is_finite()) {
            return inv("global rotation range must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&g.flip_probability) {
            return inv("global flip probability must lie in [0, 1]".into());
        }
        if !(g.scale_range.0 > 0.0 && g.scale_range.0 <= g.scale_range.1 && g.scale_range.1.is_finite()) {
            return inv("global scale range must satisfy 0 < min <= max".into());
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_value(v)?,
            "workers" => self.workers = parse_value(v)?,
            "lidar.width" => self.spec.width = parse_value(v)?,
            "lidar.height" => self.spec.height = parse_value(v)?,
            "lidar.fov_up_deg" => self.spec.fov_up = parse_value::<f64>(v)?.to_radians(),
            "lidar.fov_down_deg" => self.spec.fov_down = parse_value::<f64>(v)?.to_radians(),
            "partition.pillar_size" => self.pillar_size = parse_value(v)?,
            "partition.sigma" => self.sigma = parse_value(v)?,
            "placement.threshold" => self.placement.threshold = parse_value(v)?,
            "placement.strategy" => self.placement.strategy = v.parse()?,
            "placement.max_angle_retries" => {
                self.placement.max_angle_retries = if v == "none" { None } else { Some(parse_value(v)?) }
            }
            "placement.window" => self.placement.window = parse_window(v, &self.spec)?,
            "placement.scan" => self.placement.scan = v.parse()?,
            "placement.occlusion_test" => self.placement.occlusion_test = v.parse()?,
            "placement.collision" => self.placement.collision = v.parse()?,
            "placement.update_validspace" => self.placement.update_validspace = parse_bool(v)?,
            "placement.near_to_far" => self.placement.near_to_far = parse_bool(v)?,
            "sample.car" => self.counts.car = parse_value(v)?,
            "sample.pedestrian" => self.counts.pedestrian = parse_value(v)?,
            "sample.cyclist" => self.counts.cyclist = parse_value(v)?,
            "occlusion.strategy" => self.strategy = v.parse().map_err(|e: crate::occlusion::OcclusionError| e.to_string())?,
            "occlusion.min_points" => self.culling.min_points = parse_value(v)?,
            "occlusion.min_fraction" => self.culling.min_fraction = parse_value(v)?,
            "global.enabled" => self.global.enabled = parse_bool(v)?,
            "global.rotation_deg" => self.global.rotation_range = parse_value::<f64>(v)?.to_radians(),
            "global.flip_probability" => self.global.flip_probability = parse_value(v)?,
            "global.scale_min" => self.global.scale_range.0 = parse_value(v)?,
            "global.scale_max" => self.global.scale_range.1 = parse_value(v)?,
            _ => return Err(UNKNOWN.into()),
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = AugConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                msg: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            cfg.set(key, value).map_err(|msg| {
                if msg == UNKNOWN {
                    ConfigError::UnknownKey { line: n + 1, key: key.to_string() }
                } else {
                    ConfigError::BadValue { line: n + 1, key: key.to_string(), msg }
                }
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.placement;
        let window = match p.window {
            None => "full".to_string(),
            Some((lo, hi)) => format!("{lo}..{hi}"),
        };
        let retries = p.max_angle_retries.map_or("none".to_string(), |r| r.to_string());
        let rows: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("lidar.width", self.spec.width.to_string()),
            ("lidar.height", self.spec.height.to_string()),
            ("lidar.fov_up_deg", self.spec.fov_up.to_degrees().to_string()),
            ("lidar.fov_down_deg", self.spec.fov_down.to_degrees().to_string()),
            ("partition.pillar_size", self.pillar_size.to_string()),
            ("partition.sigma", self.sigma.to_string()),
            ("placement.threshold", p.threshold.to_string()),
            ("placement.strategy", p.strategy.to_string()),
            ("placement.max_angle_retries", retries),
            ("placement.window", window),
            ("placement.scan", p.scan.to_string()),
            ("placement.occlusion_test", p.occlusion_test.to_string()),
            ("placement.collision", p.collision.to_string()),
            ("placement.update_validspace", p.update_validspace.to_string()),
            ("placement.near_to_far", p.near_to_far.to_string()),
            ("sample.car", self.counts.car.to_string()),
            ("sample.pedestrian", self.counts.pedestrian.to_string()),
            ("sample.cyclist", self.counts.cyclist.to_string()),
            ("occlusion.strategy", self.strategy.to_string()),
            ("occlusion.min_points", self.culling.min_points.to_string()),
            ("occlusion.min_fraction", self.culling.min_fraction.to_string()),
            ("global.enabled", self.global.enabled.to_string()),
            ("global.rotation_deg", self.global.rotation_range.to_degrees().to_string()),
            ("global.flip_probability", self.global.flip_probability.to_string()),
            ("global.scale_min", self.global.scale_range.0.to_string()),
            ("global.scale_max", self.global.scale_range.1.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

const UNKNOWN: &str = "\0unknown";
