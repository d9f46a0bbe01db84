use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use jawkit::formats::{
    parse_samples_csv, parse_scenario_json, parse_transform_json, parse_tree_json, write_distance_map_csv,
    write_distance_map_ply, write_icp_json, write_json, write_joint_summary_csv, write_samples_csv,
    write_scenario_json, write_transform_json, JointEntry, ScenarioDocument, ScenarioRecord,
};
use jawkit::lie_stats::{karcher_mean, KarcherOptions, TransformSample};
use jawkit::mesh::io::{load_mesh, load_points, save_mesh, write_ply, MeshFormat, PlyEncoding, PropertyKind, VertexProperty};
use jawkit::mesh::{distance_map, map_stats, DistanceMapOptions, SpatialIndex, TriangleMesh};
use jawkit::pipeline::{analyze_samples, pca_points, run_pipeline_on, simulate_joints, PipelineInputs, PosePair, ScanCase, StatsReport};
use jawkit::registration::{icp, prealign};
use jawkit::se3::RigidTransform;
use jawkit::synth::build_scenario;
use jawkit::tmj_sim::{JointModel, JointReport, JointSummary, Side};
use jawkit::xform_tree::{error_magnitude, FrameId};
use nalgebra::Vector3;
use serde::Serialize;

use crate::config::Config;
use crate::error::{CliError, CliResult, CONTRACT, NUMERICAL};
use crate::plot::{ellipsoid_svg, errorbar_svg, heatmap, histogram_svg, ColorRamp};

const HEATMAP_PX: u32 = 400;

fn ensure_exists(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::config(format!("{}: no such file", path.display())))
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_any_mesh(path: &Path) -> CliResult<TriangleMesh> {
    let format = MeshFormat::from_path(path).map_err(|e| CliError::from(e).context(path.display()))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh").to_string();
    Ok(load_mesh(path, format).map_err(|e| CliError::from(e).context(path.display()))?.with_name(name))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
}

fn write_all(dir: &Path, files: &BTreeMap<String, String>) -> CliResult<()> {
    files.iter().try_for_each(|(name, text)| write(dir, name, text))
}

fn save_png(dir: &Path, name: &str, img: &image::RgbImage) -> CliResult<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    img.save(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn print_transform(label: &str, t: &RigidTransform) {
    println!("{label}: theta {:.6} deg, t_norm {:.6} mm", t.angle_degrees(), t.translation_norm());
    for r in t.to_row_major().chunks(4) {
        println!("  {:>12.6} {:>12.6} {:>12.6} {:>12.6}", r[0], r[1], r[2], r[3]);
    }
}

pub fn register(
    config: &Config,
    source: &Path,
    target: &Path,
    init: Option<&Path>,
    use_prealign: bool,
    trace: bool,
) -> CliResult<()> {
    for p in [Some(source), Some(target), init].into_iter().flatten() {
        ensure_exists(p)?;
    }
    let points = load_points(source).map_err(|e| CliError::from(e).context(source.display()))?;
    let index = SpatialIndex::build(load_any_mesh(target)?)?;
    let start = match init {
        Some(p) => parse_transform_json(&read_text(p)?).map_err(|e| CliError::from(e).context(p.display()))?,
        None if use_prealign => prealign(&points, &index)?,
        None => RigidTransform::identity(),
    };
    let result = icp(&points, &index, &start, &config.icp)?;
    let out = config.out_dir();
    write(&out, "transform.json", write_transform_json(&result.transform))?;
    write(&out, "icp.json", write_icp_json(&result, trace))?;
    print_transform("transform", &result.transform);
    println!(
        "rms {:.6} mm, {} iterations, {} inliers, converged: {}",
        result.rms_mm, result.iterations_used, result.inlier_count, result.converged
    );
    if !result.converged {
        return Err(CliError::new(
            NUMERICAL,
            format!("ICP did not converge in {} iterations (outputs written)", config.icp.max_iterations),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct CycleReport {
    frames: Vec<String>,
    theta_deg: f64,
    t_norm_mm: f64,
    matrix: Vec<f64>,
    within_threshold: bool,
}

pub fn tree_check(config: &Config, tree: &Path, cycle_args: &[String]) -> CliResult<()> {
    ensure_exists(tree)?;
    let doc = parse_tree_json(&read_text(tree)?).map_err(|e| CliError::from(e).context(tree.display()))?;
    let cycles: Vec<Vec<FrameId>> = if cycle_args.is_empty() {
        doc.cycles.clone()
    } else {
        cycle_args
            .iter()
            .map(|c| c.split(',').map(|f| FrameId::new(f.trim())).collect::<Result<Vec<_>, _>>())
            .collect::<Result<_, _>>()?
    };
    if cycles.is_empty() {
        return Err(CliError::config("no cycles to check: pass --cycle or list cycles in the tree file"));
    }
    let t = &config.tree_check;
    let mut reports = Vec::new();
    for cycle in &cycles {
        let names: Vec<String> = cycle.iter().map(|f| f.as_str().to_string()).collect();
        let e = doc.tree.consistency_error(cycle).map_err(|e| CliError::from(e).context(names.join("-")))?;
        let (theta, tn) = error_magnitude(&e);
        let within = t.max_theta_deg.is_none_or(|m| theta <= m) && t.max_t_norm_mm.is_none_or(|m| tn <= m);
        println!("{}: theta {theta:.6} deg, t_norm {tn:.6} mm{}", names.join("-"), if within { "" } else { " (exceeds threshold)" });
        reports.push(CycleReport {
            frames: names,
            theta_deg: theta,
            t_norm_mm: tn,
            matrix: e.to_row_major().to_vec(),
            within_threshold: within,
        });
    }
    write(&config.out_dir(), "tree_check.json", write_json(&reports))?;
    let failing = reports.iter().filter(|r| !r.within_threshold).count();
    if failing > 0 {
        return Err(CliError::new(NUMERICAL, format!("{failing} cycle(s) exceed the configured consistency threshold")));
    }
    Ok(())
}

fn load_samples(path: &Path) -> CliResult<Vec<TransformSample>> {
    ensure_exists(path)?;
    parse_samples_csv(&read_text(path)?).map_err(|e| CliError::from(e).context(path.display()))
}

#[derive(Serialize)]
struct MeanReport {
    matrix: Vec<f64>,
    mode: &'static str,
    iterations: usize,
    residual: f64,
    n: usize,
}

pub fn mean(config: &Config, samples: &Path) -> CliResult<()> {
    let samples = load_samples(samples)?;
    let transforms: Vec<RigidTransform> = samples.iter().map(|s| s.transform).collect();
    let k = karcher_mean(&transforms, &KarcherOptions { mode: config.mode, ..Default::default() })?;
    write(
        &config.out_dir(),
        "karcher_mean.json",
        write_json(&MeanReport {
            matrix: k.mean.to_row_major().to_vec(),
            mode: config.mode.as_str(),
            iterations: k.iterations,
            residual: k.residual,
            n: transforms.len(),
        }),
    )?;
    print_transform(&format!("Karcher mean of {} samples", transforms.len()), &k.mean);
    Ok(())
}

fn write_stats(config: &Config, out: &Path, samples: &[TransformSample], report: &StatsReport) -> CliResult<()> {
    write_all(out, &jawkit::pipeline::stats_outputs(report))?;
    if config.images {
        write(out, "histogram_t_norm.svg", histogram_svg(&report.t_norm_histogram, "translation norm", "t_norm [mm]"))?;
        write(out, "histogram_theta.svg", histogram_svg(&report.theta_histogram, "rotation angle", "theta [deg]"))?;
        let (t, r) = pca_points(samples);
        if let Some(e) = &report.translation_pca {
            write(out, "ellipsoid_translation.svg", ellipsoid_svg(&t, e, "translation, 95% ellipsoid"))?;
        }
        if let Some(e) = &report.rotation_pca {
            write(out, "ellipsoid_rotation.svg", ellipsoid_svg(&r, e, "rotation vector, 95% ellipsoid"))?;
        }
    }
    Ok(())
}

pub fn stats(config: &Config, samples: &Path) -> CliResult<()> {
    let samples = load_samples(samples)?;
    let report = analyze_samples(&samples, &config.pipeline_options())?;
    write_stats(config, &config.out_dir(), &samples, &report)?;
    print!("{}", jawkit::formats::write_component_stats_csv(&report.components));
    Ok(())
}

/// Axis of least extent, looked along from its positive side.
fn default_view(mesh: &TriangleMesh) -> Vector3<f64> {
    let (lo, hi) = mesh.bounds();
    let ext = hi - lo;
    -Vector3::ith(ext.imin(), 1.0)
}

#[derive(Serialize)]
struct DistmapSummary {
    source: String,
    target: String,
    signed: bool,
    clamp_mm: Option<f64>,
    roi: Option<(f64, f64)>,
    vertices: usize,
    valid: usize,
    masked_by_clamp: usize,
    masked_by_roi: usize,
    mu_mm: Option<f64>,
    sigma_mm: Option<f64>,
}

pub fn distmap(config: &Config, source: &Path, target: &Path, signed: bool, roi: Option<(f64, f64)>) -> CliResult<()> {
    ensure_exists(source)?;
    ensure_exists(target)?;
    let src = load_any_mesh(source)?;
    let index = SpatialIndex::build(load_any_mesh(target)?)?;
    let map = distance_map(&src, &index, &DistanceMapOptions { signed, clamp_mm: config.clamp_mm, roi });
    let stats = map_stats(&map).ok();
    let out = config.out_dir();
    write(&out, "distance_map.csv", write_distance_map_csv(&map))?;
    write(&out, "distance_map.ply", write_distance_map_ply(&src, &map))?;
    let summary = DistmapSummary {
        source: map.source_id.clone(),
        target: map.target_id.clone(),
        signed,
        clamp_mm: map.clamp_mm,
        roi: map.roi,
        vertices: map.len(),
        valid: map.valid_count(),
        masked_by_clamp: map.masked_by_clamp,
        masked_by_roi: map.masked_by_roi,
        mu_mm: stats.map(|s| s.mu),
        sigma_mm: stats.map(|s| s.sigma),
    };
    write(&out, "distance_summary.json", write_json(&summary))?;
    if config.images {
        let ramp = if signed {
            ColorRamp::Diverging { limit: config.clamp_mm.unwrap_or(config.colors.diff_limit_mm) }
        } else {
            ColorRamp::Sequential { max: config.colors.distance_max_mm }
        };
        save_png(&out, "distance_map.png", &heatmap(&src, &map.values, ramp, default_view(&src), HEATMAP_PX))?;
    }
    println!(
        "{} of {} vertices valid ({} beyond clamp, {} outside roi)",
        summary.valid, summary.vertices, summary.masked_by_clamp, summary.masked_by_roi
    );
    match stats {
        Some(s) => println!("mean {:.6} mm, sd {:.6} mm", s.mu, s.sigma),
        None => return Err(CliError::new(NUMERICAL, "distance map has no valid vertex (outputs written)")),
    }
    Ok(())
}

fn load_joints(doc: &ScenarioDocument, base: &Path) -> CliResult<Vec<JointModel>> {
    for j in &doc.joints {
        ensure_exists(&base.join(&j.fossa))?;
        ensure_exists(&base.join(&j.condyle))?;
    }
    doc.joints
        .iter()
        .map(|j| {
            Ok(JointModel {
                side: j.side,
                fossa: load_any_mesh(&base.join(&j.fossa))?.with_name(format!("fossa_{}", j.side)),
                condyle: load_any_mesh(&base.join(&j.condyle))?.with_name(format!("condyle_{}", j.side)),
            })
        })
        .collect()
}

fn nan_masked(values: &[Option<f64>]) -> Vec<f64> {
    values.iter().map(|v| v.unwrap_or(f64::NAN)).collect()
}

fn write_joint_outputs(
    config: &Config,
    out: &Path,
    joints: &[JointModel],
    reports: &[JointReport],
    summary: &JointSummary,
) -> CliResult<()> {
    write(out, "joint_summary.csv", write_joint_summary_csv(summary))?;
    for r in reports {
        let joint = joints.iter().find(|j| j.side == r.side).expect("report side has a joint");
        let stem = format!("{}_{}_{}", r.splint_id, r.repeat_id, r.side);
        let props = [
            ("planned_mm", &r.planned_map),
            ("measured_mm", &r.measured_map),
            ("diff_mm", &r.diff_map),
        ]
        .map(|(name, m)| VertexProperty { name: name.into(), kind: PropertyKind::Float, values: nan_masked(&m.values) });
        write(out, &format!("maps/{stem}.ply"), write_ply(&joint.fossa, &props, PlyEncoding::BinaryLittleEndian))?;
        if config.images {
            let view = Vector3::z();
            let seq = ColorRamp::Sequential { max: config.colors.distance_max_mm };
            let div = ColorRamp::Diverging { limit: config.colors.diff_limit_mm };
            for (label, map, ramp) in [("planned", &r.planned_map, seq), ("measured", &r.measured_map, seq), ("diff", &r.diff_map, div)] {
                save_png(out, &format!("heatmaps/{stem}_{label}.png"), &heatmap(&joint.fossa, &map.values, ramp, view, HEATMAP_PX))?;
            }
        }
    }
    if config.images {
        write(out, "errorbar.svg", errorbar_svg(summary, "measured minus planned joint distance"))?;
    }
    for side in Side::BOTH {
        if let Some(p) = summary.pooled(side) {
            println!("{side} joint: pooled diff {:.6} ± {:.6} mm over {} vertices", p.mu, p.sigma, p.n);
        }
    }
    Ok(())
}

pub fn simulate(config: &Config, scenario: &Path) -> CliResult<()> {
    ensure_exists(scenario)?;
    let doc = parse_scenario_json(&read_text(scenario)?).map_err(|e| CliError::from(e).context(scenario.display()))?;
    if doc.joints.is_empty() || doc.samples.is_empty() {
        return Err(CliError::new(CONTRACT, format!("{}: scenario needs joints and samples", scenario.display())));
    }
    let base = scenario.parent().unwrap_or(Path::new("."));
    let joints = load_joints(&doc, base)?;
    let pairs: Vec<PosePair> = doc
        .samples
        .iter()
        .map(|s| PosePair { splint_id: s.splint_id.clone(), repeat_id: s.repeat_id.clone(), planned: s.planned, measured: s.measured })
        .collect();
    let (reports, summary) = simulate_joints(&joints, &pairs, config.roi())?;
    let out = config.out_dir();
    write_joint_outputs(config, &out, &joints, &reports, &summary)?;
    println!("{} joint reports", reports.len());
    Ok(())
}

pub fn gen_fixture(config: &Config, dir: &Path) -> CliResult<PathBuf> {
    let f = &config.fixture;
    let scenario = build_scenario(&f.phantom, &f.noise_model(), &f.scenario_options(config.seed))?;
    let p = &scenario.phantom;
    let mut joints = Vec::new();
    for side in Side::BOTH {
        let j = &p.joint(side).model;
        let (fossa, condyle) = (format!("meshes/fossa_{side}.ply"), format!("meshes/condyle_{side}.ply"));
        write(dir, &fossa, write_ply(&j.fossa, &[], PlyEncoding::BinaryLittleEndian))?;
        write(dir, &condyle, write_ply(&j.condyle, &[], PlyEncoding::BinaryLittleEndian))?;
        joints.push(JointEntry { side, fossa, condyle });
    }
    create_dir(&dir.join("meshes"))?;
    save_mesh(&p.maxilla_arch, &dir.join("meshes/maxilla.ply"), MeshFormat::Ply)?;
    save_mesh(&p.mandible_arch, &dir.join("meshes/mandible.ply"), MeshFormat::Ply)?;
    let mut samples = Vec::new();
    for s in &scenario.samples {
        let scan = format!("scans/scan_{}_{}.ply", s.splint_id, s.repeat_id);
        write(dir, &scan, write_ply(&s.scan, &[], PlyEncoding::BinaryLittleEndian))?;
        samples.push(ScenarioRecord {
            splint_id: s.splint_id.clone(),
            repeat_id: s.repeat_id.clone(),
            planned: s.planned,
            measured: s.measured,
            ground_truth_error: Some(s.ground_truth_error),
            scan_to_reference: Some(s.scan_to_reference),
            scan: Some(scan),
        });
    }
    let doc = ScenarioDocument {
        joints,
        maxilla: Some("meshes/maxilla.ply".into()),
        mandible: Some("meshes/mandible.ply".into()),
        phantom: Some(f.phantom.clone()),
        seed: Some(config.seed),
        samples,
    };
    let manifest = dir.join("manifest.json");
    write(dir, "manifest.json", write_scenario_json(&doc))?;
    let gt: Vec<TransformSample> = scenario
        .samples
        .iter()
        .map(|s| TransformSample::new(s.splint_id.as_str(), s.repeat_id.as_str(), s.ground_truth_error))
        .collect();
    write(dir, "ground_truth.csv", write_samples_csv(&gt))?;
    println!("fixture with {} samples written to {}", gt.len(), dir.display());
    Ok(manifest)
}

pub fn report(config: &Config, manifest: &Path, out: &Path) -> CliResult<()> {
    ensure_exists(manifest)?;
    let doc = parse_scenario_json(&read_text(manifest)?).map_err(|e| CliError::from(e).context(manifest.display()))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let missing = |what: &str| CliError::new(CONTRACT, format!("{}: manifest has no {what}", manifest.display()));
    let maxilla_path = base.join(doc.maxilla.as_ref().ok_or_else(|| missing("maxilla"))?);
    let mandible_path = base.join(doc.mandible.as_ref().ok_or_else(|| missing("mandible"))?);
    let scan_paths: Vec<PathBuf> = doc
        .samples
        .iter()
        .map(|s| {
            s.scan
                .as_ref()
                .map(|p| base.join(p))
                .ok_or_else(|| missing(&format!("scan for {} {}", s.splint_id, s.repeat_id)))
        })
        .collect::<CliResult<_>>()?;
    if doc.samples.is_empty() {
        return Err(missing("samples"));
    }
    for p in [&maxilla_path, &mandible_path].into_iter().chain(&scan_paths) {
        ensure_exists(p)?;
    }
    let joints = load_joints(&doc, base)?;
    let maxilla = load_any_mesh(&maxilla_path)?;
    let mandible = load_any_mesh(&mandible_path)?;
    let scans: Vec<TriangleMesh> = scan_paths.iter().map(|p| load_any_mesh(p)).collect::<CliResult<_>>()?;
    let cases = doc
        .samples
        .iter()
        .zip(&scans)
        .map(|(s, scan)| ScanCase {
            splint_id: s.splint_id.clone(),
            repeat_id: s.repeat_id.clone(),
            planned: s.planned,
            scan,
            ground_truth: s.ground_truth_error,
        })
        .collect();
    let inputs = PipelineInputs { maxilla: &maxilla, mandible: &mandible, joints: &joints, cases };
    let run = run_pipeline_on(&inputs, &config.pipeline_options())?;
    write_all(out, &run.outputs())?;
    let samples: Vec<TransformSample> = run
        .recoveries
        .iter()
        .map(|r| TransformSample::new(r.splint_id.as_str(), r.repeat_id.as_str(), r.recovered))
        .collect();
    write_stats(config, out, &samples, &run.stats)?;
    write_joint_outputs(config, out, &joints, &run.reports, &run.summary)?;
    let worst = |f: fn(&jawkit::pipeline::Recovery) -> Option<f64>| run.recoveries.iter().filter_map(f).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    if let (Some(t), Some(r)) = (worst(|r| r.translation_error_mm), worst(|r| r.rotation_error_deg)) {
        println!("worst recovery error against ground truth: {t:.6} mm, {r:.6} deg");
    }
    print_transform(&format!("Karcher mean of {} recovered errors", samples.len()), &run.stats.karcher.mean);
    Ok(())
}

pub fn run_all(config: &Config) -> CliResult<()> {
    let out = config.out_dir();
    if let Some(tree) = &config.paths.tree {
        ensure_exists(tree)?;
    }
    let manifest = match &config.paths.manifest {
        Some(m) => m.clone(),
        None => gen_fixture(config, &out.join("fixture"))?,
    };
    report(config, &manifest, &out)?;
    if let Some(tree) = &config.paths.tree {
        tree_check(config, tree, &[])?;
    }
    Ok(())
}
