#![no_main]

use caaug::kitti::{encode_velodyne, parse_velodyne};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = parse_velodyne(data) {
        assert_eq!(encode_velodyne(&cloud), data);
    }
});
