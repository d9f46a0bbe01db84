#![no_main]

use jawkit::xform_tree::FrameId;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let frame = FrameId::new("K").expect("nonempty name");
        let _ = jawkit::formats::parse_motion_csv(text, frame);
    }
});
