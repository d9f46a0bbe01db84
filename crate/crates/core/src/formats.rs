//! Text formats for transforms, trees, motion tracks, sample sets,
//! scenarios and result tables. Writers are deterministic: identical inputs
//! give identical bytes.
//!
//! Matrices are always 16 numbers, row-major 4×4. Readers accept rotation
//! blocks within [`READ_TOL`] of SO(3), projecting them with a warning.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie_stats::{ComponentStats, Histogram, PcaEllipsoid, StatsError, TransformSample};
use crate::mesh::io::{write_ply, PlyEncoding, PropertyKind, VertexProperty};
use crate::mesh::{DistanceMap, TriangleMesh};
use crate::registration::{IcpIteration, IcpResult};
use crate::se3::{RigidTransform, Se3Error, READ_TOL, ROTATION_TOL};
use crate::synth::PhantomParams;
use crate::tmj_sim::{JointSummary, Side};
use crate::xform_tree::{EdgeRole, FrameId, MotionTrack, TransformTree, TreeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("{context}: invalid JSON: {message}")]
    Json { context: String, message: String },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("{context}: {source}")]
    Matrix {
        context: String,
        #[source]
        source: Se3Error,
    },
    #[error("{context}: expected 16 matrix entries, got {got}")]
    MatrixLength { context: String, got: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub const MATRIX_COLUMNS: [&str; 16] = [
    "m00", "m01", "m02", "m03", "m10", "m11", "m12", "m13", "m20", "m21", "m22", "m23", "m30", "m31", "m32", "m33",
];

/// Validates 16 row-major entries.
pub fn transform_from_entries(entries: &[f64], context: &str) -> Result<RigidTransform, FormatError> {
    let arr: &[f64; 16] = entries.try_into().map_err(|_| FormatError::MatrixLength {
        context: context.to_string(),
        got: entries.len(),
    })?;
    let (t, deviation) = RigidTransform::from_row_major(arr, READ_TOL).map_err(|source| FormatError::Matrix {
        context: context.to_string(),
        source,
    })?;
    if deviation > ROTATION_TOL {
        log::warn!("{context}: rotation block off SO(3) by {deviation:.2e}; projected");
    }
    Ok(t)
}

fn json_err(context: &str, e: serde_json::Error) -> FormatError {
    FormatError::Json {
        context: context.to_string(),
        message: e.to_string(),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

#[derive(Serialize, Deserialize)]
struct TransformJson {
    matrix: Vec<f64>,
}

pub fn parse_transform_json(text: &str) -> Result<RigidTransform, FormatError> {
    let raw: TransformJson = serde_json::from_str(text).map_err(|e| json_err("transform", e))?;
    transform_from_entries(&raw.matrix, "transform")
}

pub fn write_transform_json(t: &RigidTransform) -> String {
    to_json(&TransformJson {
        matrix: t.to_row_major().to_vec(),
    })
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn csv_err(record: Option<&csv::StringRecord>, message: impl Into<String>) -> FormatError {
    FormatError::Csv {
        line: record.and_then(|r| r.position()).map_or(0, |p| p.line()),
        message: message.into(),
    }
}

fn parse_numbers(record: &csv::StringRecord, fields: std::ops::Range<usize>) -> Result<Vec<f64>, FormatError> {
    fields
        .map(|i| {
            let f = record.get(i).unwrap_or("");
            f.parse::<f64>()
                .map_err(|_| csv_err(Some(record), format!("column {}: '{f}' is not a number", i + 1)))
        })
        .collect()
}

/// Rows whose first field is not numeric are treated as headers.
fn data_records(text: &str, numeric_from: usize) -> Result<Vec<csv::StringRecord>, FormatError> {
    let mut out = Vec::new();
    for (k, rec) in csv_reader(text).records().enumerate() {
        let rec = rec.map_err(|e| FormatError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let header = rec.get(numeric_from).is_some_and(|f| f.parse::<f64>().is_err());
        if k == 0 && header {
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

fn expect_fields(rec: &csv::StringRecord, n: usize) -> Result<(), FormatError> {
    if rec.len() != n {
        return Err(csv_err(Some(rec), format!("expected {n} fields, got {}", rec.len())));
    }
    Ok(())
}

fn record_context(rec: &csv::StringRecord) -> String {
    format!("line {}", rec.position().map_or(0, |p| p.line()))
}

pub fn parse_transforms_csv(text: &str) -> Result<Vec<RigidTransform>, FormatError> {
    data_records(text, 0)?
        .iter()
        .map(|rec| {
            expect_fields(rec, 16)?;
            transform_from_entries(&parse_numbers(rec, 0..16)?, &record_context(rec))
        })
        .collect()
}

fn push_matrix(out: &mut String, t: &RigidTransform) {
    for (i, v) in t.to_row_major().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v}").unwrap();
    }
}

pub fn write_transforms_csv(transforms: &[RigidTransform]) -> String {
    let mut out = MATRIX_COLUMNS.join(",");
    out.push('\n');
    for t in transforms {
        push_matrix(&mut out, t);
        out.push('\n');
    }
    out
}

#[derive(Serialize, Deserialize)]
struct TreeEdgeJson {
    from: String,
    to: String,
    #[serde(default = "spanning")]
    role: String,
    matrix: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

fn spanning() -> String {
    "spanning".into()
}

#[derive(Serialize, Deserialize)]
struct TreeJson {
    frames: Vec<String>,
    edges: Vec<TreeEdgeJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cycles: Vec<Vec<String>>,
}

/// A transform tree plus the cycles to check on it.
#[derive(Clone, Debug)]
pub struct TreeDocument {
    pub tree: TransformTree,
    pub cycles: Vec<Vec<FrameId>>,
}

pub fn parse_tree_json(text: &str) -> Result<TreeDocument, FormatError> {
    let raw: TreeJson = serde_json::from_str(text).map_err(|e| json_err("tree", e))?;
    let mut tree = TransformTree::new();
    for f in &raw.frames {
        tree.add_frame(FrameId::new(f.as_str())?)?;
    }
    for (i, e) in raw.edges.iter().enumerate() {
        let context = format!("edge {i} ({} -> {})", e.from, e.to);
        let role: EdgeRole = e.role.parse().map_err(|m: String| FormatError::Json {
            context: context.clone(),
            message: m,
        })?;
        let t = transform_from_entries(&e.matrix, &context)?;
        tree.add_labeled_edge(&FrameId::new(e.from.as_str())?, &FrameId::new(e.to.as_str())?, t, role, e.label.clone())?;
    }
    let cycles = raw
        .cycles
        .iter()
        .map(|c| c.iter().map(|f| FrameId::new(f.as_str())).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TreeDocument { tree, cycles })
}

pub fn write_tree_json(doc: &TreeDocument) -> String {
    to_json(&TreeJson {
        frames: doc.tree.frames().iter().map(|f| f.as_str().to_string()).collect(),
        edges: doc
            .tree
            .edges()
            .iter()
            .map(|e| TreeEdgeJson {
                from: e.from.as_str().to_string(),
                to: e.to.as_str().to_string(),
                role: e.role.as_str().to_string(),
                matrix: e.transform.to_row_major().to_vec(),
                label: e.label.clone(),
            })
            .collect(),
        cycles: doc
            .cycles
            .iter()
            .map(|c| c.iter().map(|f| f.as_str().to_string()).collect())
            .collect(),
    })
}

pub fn parse_motion_csv(text: &str, frame: FrameId) -> Result<MotionTrack, FormatError> {
    let samples = data_records(text, 0)?
        .iter()
        .map(|rec| {
            expect_fields(rec, 17)?;
            let v = parse_numbers(rec, 0..17)?;
            Ok((v[0], transform_from_entries(&v[1..], &record_context(rec))?))
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Ok(MotionTrack::new(frame, samples)?)
}

pub fn write_motion_csv(track: &MotionTrack) -> String {
    let mut out = format!("time_s,{}\n", MATRIX_COLUMNS.join(","));
    for (t, m) in track.samples() {
        write!(out, "{t},").unwrap();
        push_matrix(&mut out, m);
        out.push('\n');
    }
    out
}

pub fn parse_samples_csv(text: &str) -> Result<Vec<TransformSample>, FormatError> {
    let samples = data_records(text, 2)?
        .iter()
        .map(|rec| {
            expect_fields(rec, 18)?;
            let (splint, repeat) = (&rec[0], &rec[1]);
            if splint.is_empty() || repeat.is_empty() {
                return Err(csv_err(Some(rec), "empty splint_id or repeat_id"));
            }
            let t = transform_from_entries(&parse_numbers(rec, 2..18)?, &record_context(rec))?;
            Ok(TransformSample::new(splint, repeat, t))
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    crate::lie_stats::check_unique(&samples)?;
    Ok(samples)
}

pub fn write_samples_csv(samples: &[TransformSample]) -> String {
    let mut out = format!("splint_id,repeat_id,{}\n", MATRIX_COLUMNS.join(","));
    for s in samples {
        write!(out, "{},{},", s.splint_id, s.repeat_id).unwrap();
        push_matrix(&mut out, &s.transform);
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointEntry {
    pub side: Side,
    pub fossa: String,
    pub condyle: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRecord {
    pub splint_id: String,
    pub repeat_id: String,
    pub planned: RigidTransform,
    pub measured: RigidTransform,
    pub ground_truth_error: Option<RigidTransform>,
    pub scan_to_reference: Option<RigidTransform>,
    pub scan: Option<String>,
}

/// Scenario or fixture manifest. Mesh paths are relative to the file.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioDocument {
    pub joints: Vec<JointEntry>,
    pub maxilla: Option<String>,
    pub mandible: Option<String>,
    pub phantom: Option<PhantomParams>,
    pub seed: Option<u64>,
    pub samples: Vec<ScenarioRecord>,
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    splint_id: String,
    repeat_id: String,
    planned: Vec<f64>,
    measured: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth_error: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scan_to_reference: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scan: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioJson {
    joints: Vec<JointEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    maxilla: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mandible: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phantom: Option<PhantomParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    samples: Vec<RecordJson>,
}

pub fn parse_scenario_json(text: &str) -> Result<ScenarioDocument, FormatError> {
    let raw: ScenarioJson = serde_json::from_str(text).map_err(|e| json_err("scenario", e))?;
    let mut samples = Vec::with_capacity(raw.samples.len());
    for (i, r) in raw.samples.into_iter().enumerate() {
        let ctx = |field: &str| format!("sample {i} ({} {}) {field}", r.splint_id, r.repeat_id);
        let optional = |m: &Option<Vec<f64>>, field: &str| m.as_deref().map(|m| transform_from_entries(m, &ctx(field))).transpose();
        samples.push(ScenarioRecord {
            planned: transform_from_entries(&r.planned, &ctx("planned"))?,
            measured: transform_from_entries(&r.measured, &ctx("measured"))?,
            ground_truth_error: optional(&r.ground_truth_error, "ground_truth_error")?,
            scan_to_reference: optional(&r.scan_to_reference, "scan_to_reference")?,
            splint_id: r.splint_id,
            repeat_id: r.repeat_id,
            scan: r.scan,
        });
    }
    let transforms: Vec<TransformSample> = samples
        .iter()
        .map(|s| TransformSample::new(s.splint_id.as_str(), s.repeat_id.as_str(), s.measured))
        .collect();
    crate::lie_stats::check_unique(&transforms)?;
    Ok(ScenarioDocument {
        joints: raw.joints,
        maxilla: raw.maxilla,
        mandible: raw.mandible,
        phantom: raw.phantom,
        seed: raw.seed,
        samples,
    })
}

pub fn write_scenario_json(doc: &ScenarioDocument) -> String {
    let m = |t: &RigidTransform| t.to_row_major().to_vec();
    to_json(&ScenarioJson {
        joints: doc.joints.clone(),
        maxilla: doc.maxilla.clone(),
        mandible: doc.mandible.clone(),
        phantom: doc.phantom.clone(),
        seed: doc.seed,
        samples: doc
            .samples
            .iter()
            .map(|s| RecordJson {
                splint_id: s.splint_id.clone(),
                repeat_id: s.repeat_id.clone(),
                planned: m(&s.planned),
                measured: m(&s.measured),
                ground_truth_error: s.ground_truth_error.as_ref().map(m),
                scan_to_reference: s.scan_to_reference.as_ref().map(m),
                scan: s.scan.clone(),
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct IcpJson<'a> {
    matrix: Vec<f64>,
    rms_mm: f64,
    iterations_used: usize,
    inlier_count: usize,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a [IcpIteration]>,
}

pub fn write_icp_json(result: &IcpResult, with_trace: bool) -> String {
    to_json(&IcpJson {
        matrix: result.transform.to_row_major().to_vec(),
        rms_mm: result.rms_mm,
        iterations_used: result.iterations_used,
        inlier_count: result.inlier_count,
        converged: result.converged,
        trace: with_trace.then_some(result.trace.as_slice()),
    })
}

/// Fixed six-decimal formatting without negative zero.
pub fn fixed(x: f64) -> String {
    let s = format!("{x:.6}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

pub fn write_distance_map_csv(map: &DistanceMap) -> String {
    let mut out = String::from("vertex_id,distance,valid\n");
    for (i, v) in map.values.iter().enumerate() {
        match v {
            Some(d) => writeln!(out, "{i},{},1", fixed(*d)).unwrap(),
            None => writeln!(out, "{i},NaN,0").unwrap(),
        }
    }
    out
}

/// Binary PLY of `mesh` with `distance_mm` (NaN where masked) and `valid`.
pub fn write_distance_map_ply(mesh: &TriangleMesh, map: &DistanceMap) -> Vec<u8> {
    assert_eq!(mesh.vertex_count(), map.len(), "map must belong to the mesh");
    let props = [
        VertexProperty {
            name: "distance_mm".into(),
            kind: PropertyKind::Float,
            values: map.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        },
        VertexProperty {
            name: "valid".into(),
            kind: PropertyKind::UChar,
            values: map.values.iter().map(|v| if v.is_some() { 1.0 } else { 0.0 }).collect(),
        },
    ];
    write_ply(mesh, &props, PlyEncoding::BinaryLittleEndian)
}

pub fn write_component_stats_csv(stats: &ComponentStats) -> String {
    let mut out = String::from("quantity,unit,karcher_mean,mean,std,median,min,max\n");
    for row in &stats.rows {
        let s = &row.summary;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.quantity.label(),
            row.quantity.unit(),
            fixed(row.karcher),
            fixed(s.mean),
            fixed(s.std),
            fixed(s.median),
            fixed(s.min),
            fixed(s.max)
        )
        .unwrap();
    }
    out
}

pub fn write_pca_csv(ellipsoids: &[PcaEllipsoid]) -> String {
    let mut out = String::from("space,unit,pc,variance,share,r95,v_x,v_y,v_z\n");
    for e in ellipsoids {
        for i in 0..3 {
            let v = e.eigenvectors[i];
            writeln!(
                out,
                "{},{},PC{},{},{},{},{},{},{}",
                e.space.as_str(),
                e.space.unit(),
                i + 1,
                fixed(e.eigenvalues[i]),
                fixed(e.shares[i]),
                fixed(e.r95[i]),
                fixed(v.x),
                fixed(v.y),
                fixed(v.z)
            )
            .unwrap();
        }
    }
    out
}

pub fn write_histogram_csv(h: &Histogram) -> String {
    let edges = h.bin_edges();
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        writeln!(out, "{},{},{c}", fixed(edges[i]), fixed(edges[i + 1])).unwrap();
    }
    out
}

pub fn write_joint_summary_csv(summary: &JointSummary) -> String {
    let mut out = String::from("side,splint_id,repeat_id,n,mu_mm,sigma_mm\n");
    for p in &summary.points {
        writeln!(out, "{},{},{},{},{},{}", p.side, p.splint_id, p.repeat_id, p.stats.n, fixed(p.stats.mu), fixed(p.stats.sigma)).unwrap();
    }
    for (side, s) in &summary.pooled {
        writeln!(out, "{side},pooled,,{},{},{}", s.n, fixed(s.mu), fixed(s.sigma)).unwrap();
    }
    out
}

/// Deterministic pretty JSON for any serializable value.
pub fn write_json<T: Serialize>(value: &T) -> String {
    to_json(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie_stats::{component_stats, StdConvention};
    use crate::se3::Rotation;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn sample_transform() -> RigidTransform {
        RigidTransform::new(Rotation::about_axis(&Vector3::new(0.3, -1.0, 0.2), 0.7), Vector3::new(1.5, -2.25, 3.0))
    }

    #[test]
    fn transform_json_roundtrip() {
        let t = sample_transform();
        let text = write_transform_json(&t);
        assert_eq!(parse_transform_json(&text).unwrap(), t);
        assert!(matches!(parse_transform_json("{\"matrix\": [1, 2]}"), Err(FormatError::MatrixLength { got: 2, .. })));
        assert!(matches!(parse_transform_json("{"), Err(FormatError::Json { .. })));
    }

    #[test]
    fn reader_projects_small_deviation_and_rejects_large() {
        let mut m = RigidTransform::identity().to_row_major();
        m[1] = 5e-5;
        let t = transform_from_entries(&m, "t").unwrap();
        assert!(crate::se3::orthonormality_deviation(t.rotation.matrix()) < 1e-12);
        m[1] = 1e-2;
        assert!(matches!(transform_from_entries(&m, "t"), Err(FormatError::Matrix { .. })));
    }

    #[test]
    fn transforms_csv_roundtrip_with_header() {
        let ts = vec![sample_transform(), RigidTransform::identity()];
        let text = write_transforms_csv(&ts);
        assert!(text.starts_with("m00,"));
        assert_eq!(parse_transforms_csv(&text).unwrap(), ts);
        let err = parse_transforms_csv("1,2,3\n").unwrap_err();
        assert!(matches!(err, FormatError::Csv { line: 1, .. }));
    }

    #[test]
    fn tree_roundtrip() {
        let text = r#"{
            "frames": ["C", "F", "K"],
            "edges": [
                {"from": "C", "to": "F", "matrix": [1,0,0,1, 0,1,0,0, 0,0,1,0, 0,0,0,1]},
                {"from": "C", "to": "K", "role": "spanning", "matrix": [1,0,0,0, 0,1,0,2, 0,0,1,0, 0,0,0,1]},
                {"from": "F", "to": "K", "role": "check", "label": "arches", "matrix": [1,0,0,-1, 0,1,0,2, 0,0,1,0, 0,0,0,1]}
            ],
            "cycles": [["F", "C", "K", "F"]]
        }"#;
        let doc = parse_tree_json(text).unwrap();
        assert_eq!(doc.tree.edges().len(), 3);
        let e = doc.tree.consistency_error(&doc.cycles[0]).unwrap();
        assert!(e.translation_norm() < 1e-12);
        let again = parse_tree_json(&write_tree_json(&doc)).unwrap();
        assert_eq!(again.tree.edges(), doc.tree.edges());
        assert!(matches!(parse_tree_json(r#"{"frames": ["A"], "edges": [{"from": "A", "to": "B", "matrix": []}]}"#), Err(FormatError::MatrixLength { .. })));
    }

    #[test]
    fn motion_and_samples_roundtrip() {
        let frame = FrameId::new("F").unwrap();
        let track = MotionTrack::new(frame.clone(), vec![(0.0, RigidTransform::identity()), (0.5, sample_transform())]).unwrap();
        let parsed = parse_motion_csv(&write_motion_csv(&track), frame).unwrap();
        assert_eq!(parsed.samples(), track.samples());

        let samples = vec![
            TransformSample::new("S1", "3t", sample_transform()),
            TransformSample::new("S1", "4t", RigidTransform::identity()),
        ];
        let text = write_samples_csv(&samples);
        assert_eq!(parse_samples_csv(&text).unwrap(), samples);
        let dup = format!("{text}{}", text.lines().nth(1).unwrap());
        assert!(matches!(parse_samples_csv(&dup), Err(FormatError::Stats(StatsError::DuplicateSample { .. }))));
    }

    #[test]
    fn scenario_roundtrip() {
        let doc = ScenarioDocument {
            joints: vec![JointEntry { side: Side::Left, fossa: "fossa_left.ply".into(), condyle: "condyle_left.ply".into() }],
            maxilla: Some("maxilla.ply".into()),
            mandible: None,
            phantom: Some(PhantomParams::default()),
            seed: Some(3),
            samples: vec![ScenarioRecord {
                splint_id: "S1".into(),
                repeat_id: "3t".into(),
                planned: RigidTransform::identity(),
                measured: sample_transform(),
                ground_truth_error: Some(sample_transform()),
                scan_to_reference: None,
                scan: Some("scan.ply".into()),
            }],
        };
        let text = write_scenario_json(&doc);
        assert_eq!(parse_scenario_json(&text).unwrap(), doc);
        assert_eq!(write_scenario_json(&parse_scenario_json(&text).unwrap()), text);
    }

    #[test]
    fn table_writers_are_stable() {
        let samples = vec![TransformSample::new("S1", "3t", sample_transform())];
        let stats = component_stats(&samples, &sample_transform(), StdConvention::Sample).unwrap();
        let a = write_component_stats_csv(&stats);
        assert_eq!(a, write_component_stats_csv(&stats));
        assert_eq!(a.lines().count(), 9);
        assert_eq!(fixed(-0.0000001), "0.000000");
        assert_eq!(fixed(-1.5), "-1.500000");
    }

    proptest! {
        #[test]
        fn text_parsers_never_panic(s in ".{0,400}") {
            let _ = parse_transform_json(&s);
            let _ = parse_transforms_csv(&s);
            let _ = parse_tree_json(&s);
            let _ = parse_motion_csv(&s, FrameId::new("F").unwrap());
            let _ = parse_samples_csv(&s);
            let _ = parse_scenario_json(&s);
        }

        #[test]
        fn numeric_csv_never_panics(rows in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 0..20), 0..5)) {
            let text: String = rows.iter().map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n").collect();
            let _ = parse_transforms_csv(&text);
            let _ = parse_motion_csv(&text, FrameId::new("F").unwrap());
        }
    }
}
