#![no_main]

use caaug::database::{decode_database, encode_database};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(db) = decode_database(data) {
        decode_database(&encode_database(&db)).expect("re-encoded database decodes");
    }
});
