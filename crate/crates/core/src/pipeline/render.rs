//! Range image as a binary PPM (P6): one pixel per range-image cell, row 0
//! at the top. Empty cells are black, background is gray and inserted
//! points are green, both brighter when nearer.

use crate::geometry::{LidarSpec, PointCloud};
use crate::occlusion::render_range_image;

/// Ranges at or beyond this many meters get the dimmest shade.
pub const FAR: f64 = 80.0;

fn shade(range: f64) -> u8 {
    let t = (1.0 - (range / FAR).clamp(0.0, 1.0)).sqrt();
    (40.0 + 215.0 * t).round() as u8
}

pub fn render_ppm(cloud: &PointCloud, spec: &LidarSpec) -> Vec<u8> {
    let img = render_range_image(cloud, spec);
    let mut out = format!("P6\n{} {}\n255\n", spec.width, spec.height).into_bytes();
    out.reserve(spec.width * spec.height * 3);
    for cell in &img.cells {
        let rgb = match cell {
            None => [0, 0, 0],
            Some(c) => {
                let s = shade(c.range);
                match cloud.tag(c.index).and_then(|t| t.inserted_id()) {
                    Some(_) => [0, s, 0],
                    None => [s, s, s],
                }
            }
        };
        out.extend_from_slice(&rgb);
    }
    out
}
