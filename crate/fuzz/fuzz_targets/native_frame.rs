#![no_main]

use caaug::native::NativeFrame;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(frame) = NativeFrame::decode(data) {
        NativeFrame::decode(&frame.encode()).expect("re-encoded frame decodes");
    }
});
