#![no_main]

use caaug::kitti::{label_to_lidar_box, parse_labels, Calib};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(labels) = parse_labels(text) {
        let calib = Calib::axis_permutation();
        for l in &labels {
            let _ = label_to_lidar_box(l, &calib);
            let _ = l.to_line();
        }
    }
});
