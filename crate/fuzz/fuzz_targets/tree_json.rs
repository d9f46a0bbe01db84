#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = jawkit::formats::parse_tree_json(text) {
        // Parsed cycles must evaluate or fail cleanly.
        for cycle in &doc.cycles {
            let _ = doc.tree.consistency_error(cycle);
        }
    }
});
