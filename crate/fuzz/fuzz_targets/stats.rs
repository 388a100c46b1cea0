#![no_main]

use caaug::pipeline::stats::FrameStats;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(st) = FrameStats::parse(text) {
        let _ = FrameStats::parse(&st.to_text());
    }
    let _ = FrameStats::parse_timings(text);
});
