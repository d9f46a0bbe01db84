#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(raw) = jawkit::mesh::io::parse_stl(data) {
        let _ = raw.into_mesh();
    }
});
