#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = jawkit::formats::parse_transform_json(text) {
            let _ = jawkit::formats::write_transform_json(&t);
        }
    }
});
