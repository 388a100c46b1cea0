#![no_main]

use caaug::pipeline::AugConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = AugConfig::parse(text) {
        let _ = AugConfig::parse(&config.to_text());
    }
});
