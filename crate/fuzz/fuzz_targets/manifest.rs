#![no_main]

use caaug::manifest::Manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::parse(text) {
        let _ = m.strategy();
        let _ = Manifest::parse(&m.to_json());
    }
});
