#![no_main]

use caaug::occlusion::OcclusionReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = OcclusionReport::parse(text) {
        let _ = OcclusionReport::parse(&r.to_text());
    }
});
