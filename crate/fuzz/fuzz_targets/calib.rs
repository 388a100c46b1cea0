#![no_main]

use caaug::kitti::Calib;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(calib) = Calib::parse(text) {
        let _ = calib.rect_to_velo();
        let _ = Calib::parse(&calib.to_text());
    }
});
