//! Every fuzz corpus seed is a well-formed input for its target.

use std::path::Path;

use jawkit::formats;
use jawkit::mesh::io::{parse_obj, parse_ply, parse_stl};
use jawkit::xform_tree::FrameId;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.display().to_string(), std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn mesh_seeds_parse() {
    for (name, bytes) in seeds("ply") {
        parse_ply(&bytes).and_then(|r| r.into_mesh()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, bytes) in seeds("stl") {
        parse_stl(&bytes).and_then(|r| r.into_mesh()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, bytes) in seeds("obj") {
        parse_obj(&bytes).and_then(|r| r.into_mesh()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn text_seeds_parse() {
    for (name, b) in seeds("transform_json") {
        formats::parse_transform_json(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, b) in seeds("transform_csv") {
        assert!(!formats::parse_transforms_csv(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}")).is_empty());
    }
    for (name, b) in seeds("tree_json") {
        let doc = formats::parse_tree_json(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
        for c in &doc.cycles {
            doc.tree.consistency_error(c).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
    for (name, b) in seeds("motion_csv") {
        formats::parse_motion_csv(text(&b), FrameId::new("K").unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, b) in seeds("samples_csv") {
        formats::parse_samples_csv(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, b) in seeds("scenario_json") {
        formats::parse_scenario_json(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
