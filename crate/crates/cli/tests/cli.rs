use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jawkit::formats::{parse_transform_json, write_transform_json};
use jawkit::mesh::io::{load_mesh, save_mesh, MeshFormat};
use jawkit::se3::{RigidTransform, Rotation};
use nalgebra::Vector3;
use tempfile::TempDir;

fn jawkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jawkit"))
        .current_dir(dir)
        .env("JAWKIT_LOG", "error")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["gen-fixture", "--out", name];
    if !extra.contains(&"--splints") {
        args.extend_from_slice(&["--splints", "2", "--repeats", "2"]);
    }
    args.extend_from_slice(extra);
    let o = jawkit(dir, &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join(name)
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn csv_rows(path: impl AsRef<Path>) -> Vec<Vec<String>> {
    read(path).lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn self_registration_is_identity() {
    let tmp = TempDir::new().unwrap();
    let fx = fixture(tmp.path(), "fx", &[]);
    let mandible = fx.join("meshes/mandible.ply");
    let m = mandible.to_str().unwrap();
    let o = jawkit(tmp.path(), &["register", "--source", m, "--target", m, "--out", "reg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = parse_transform_json(&read(tmp.path().join("reg/transform.json"))).unwrap();
    assert!(t.translation_norm() < 1e-9 && t.angle_degrees() < 1e-9);
    assert!(read(tmp.path().join("reg/icp.json")).contains("rms"));
}

#[test]
fn registration_recovers_known_offset() {
    let tmp = TempDir::new().unwrap();
    let fx = fixture(tmp.path(), "fx", &[]);
    let target = fx.join("meshes/mandible.ply");
    let offset = RigidTransform::new(
        Rotation::about_axis(&Vector3::new(0.3, -1.0, 0.5), 2.0_f64.to_radians()),
        Vector3::new(0.8, -0.6, 0.4),
    );
    let moved = load_mesh(&target, MeshFormat::Ply).unwrap().transformed(&offset);
    let source = tmp.path().join("moved.ply");
    save_mesh(&moved, &source, MeshFormat::Ply).unwrap();
    let o = jawkit(
        tmp.path(),
        &["register", "--source", source.to_str().unwrap(), "--target", target.to_str().unwrap(), "--out", "reg", "--radius", "5"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = parse_transform_json(&read(tmp.path().join("reg/transform.json"))).unwrap();
    let gap = t.compose(&offset);
    assert!(gap.translation_norm() < 1e-3, "{}", gap.translation_norm());
    assert!(gap.angle_degrees() < 1e-3, "{}", gap.angle_degrees());
}

#[test]
fn init_transform_is_applied() {
    let tmp = TempDir::new().unwrap();
    let fx = fixture(tmp.path(), "fx", &[]);
    let m = fx.join("meshes/mandible.ply");
    let init = RigidTransform::from_translation(Vector3::new(0.5, 0.0, 0.0));
    std::fs::write(tmp.path().join("init.json"), write_transform_json(&init)).unwrap();
    let m = m.to_str().unwrap();
    let o = jawkit(tmp.path(), &["register", "--source", m, "--target", m, "--init", "init.json", "--out", "reg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = parse_transform_json(&read(tmp.path().join("reg/transform.json"))).unwrap();
    assert!(t.translation_norm() < 1e-3 && t.angle_degrees() < 1e-3);
}

#[test]
fn missing_input_names_the_path() {
    let tmp = TempDir::new().unwrap();
    let o = jawkit(tmp.path(), &["register", "--source", "absent_source.ply", "--target", "absent.ply"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("absent_source.ply"), "{}", stderr(&o));
    let o = jawkit(tmp.path(), &["stats", "no_samples.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no_samples.csv"));
}

#[test]
fn bad_usage_and_config_exit_one() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&jawkit(tmp.path(), &["no-such-command"])), 1);
    assert_eq!(code(&jawkit(tmp.path(), &["--help"])), 0);
    std::fs::write(tmp.path().join("bad.toml"), "colour = 3\n").unwrap();
    let o = jawkit(tmp.path(), &["--config", "bad.toml", "gen-fixture"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bad.toml"));
    assert_eq!(code(&jawkit(tmp.path(), &["gen-fixture", "--roi", "5:1"])), 1);
}

const TREE: &str = r#"{
    "frames": ["C", "F", "K", "X"],
    "edges": [
        {"from": "C", "to": "F", "matrix": [0,-1,0,1, 1,0,0,0, 0,0,1,0, 0,0,0,1]},
        {"from": "C", "to": "K", "matrix": [1,0,0,0, 0,1,0,2, 0,0,1,0, 0,0,0,1]},
        {"from": "F", "to": "K", "role": "check", "matrix": CHECK}
    ],
    "cycles": [["F", "C", "K", "F"]]
}"#;

fn tree_file(dir: &Path, check: &str) -> PathBuf {
    let path = dir.join("tree.json");
    std::fs::write(&path, TREE.replace("CHECK", check)).unwrap();
    path
}

fn cycle_error(dir: &Path) -> (f64, f64) {
    let v: serde_json::Value = serde_json::from_str(&read(dir.join("tc/tree_check.json"))).unwrap();
    (v[0]["theta_deg"].as_f64().unwrap(), v[0]["t_norm_mm"].as_f64().unwrap())
}

#[test]
fn tree_check_reports_loop_error() {
    let tmp = TempDir::new().unwrap();
    // F->K = inverse(C->F) then C->K.
    let tree = tree_file(tmp.path(), "[0,1,0,2, -1,0,0,1, 0,0,1,0, 0,0,0,1]");
    let o = jawkit(tmp.path(), &["tree-check", tree.to_str().unwrap(), "--out", "tc"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (theta, tn) = cycle_error(tmp.path());
    assert!(theta < 1e-9 && tn < 1e-9, "{theta} {tn}");

    let tree = tree_file(tmp.path(), "[0,1,0,2.5, -1,0,0,1, 0,0,1,0, 0,0,0,1]");
    let o = jawkit(tmp.path(), &["tree-check", tree.to_str().unwrap(), "--cycle", "F,C,K,F", "--out", "tc"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (theta, tn) = cycle_error(tmp.path());
    assert!(theta < 1e-9 && (tn - 0.5).abs() < 1e-9, "{theta} {tn}");
    assert!(stdout(&o).contains("t_norm 0.500000 mm"));
}

#[test]
fn tree_check_failures() {
    let tmp = TempDir::new().unwrap();
    let tree = tree_file(tmp.path(), "[0,1,0,2.5, -1,0,0,1, 0,0,1,0, 0,0,0,1]");
    let t = tree.to_str().unwrap();
    assert_eq!(code(&jawkit(tmp.path(), &["tree-check", t, "--cycle", "F,C,X,F", "--out", "tc"])), 2);

    std::fs::write(tmp.path().join("limits.toml"), "[tree_check]\nmax_t_norm_mm = 0.1\n").unwrap();
    let o = jawkit(tmp.path(), &["--config", "limits.toml", "tree-check", t, "--out", "tc"]);
    assert_eq!(code(&o), 2);
    assert!(tmp.path().join("tc/tree_check.json").exists());

    std::fs::write(tmp.path().join("broken.json"), "{\"frames\": [").unwrap();
    assert_eq!(code(&jawkit(tmp.path(), &["tree-check", "broken.json"])), 1);
}

const IDENTITY_ROW: &str = "1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,1";

#[test]
fn stats_edge_cases() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("one.csv"), "S1,3t,1,0,0,2,0,1,0,0,0,0,1,0,0,0,0,1\n").unwrap();
    let o = jawkit(tmp.path(), &["stats", "one.csv", "--out", "one", "--no-images"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for row in csv_rows(tmp.path().join("one/component_stats.csv")) {
        assert_eq!(row[4], "0.000000", "{row:?}");
    }
    std::fs::write(tmp.path().join("empty.csv"), "").unwrap();
    assert_eq!(code(&jawkit(tmp.path(), &["stats", "empty.csv", "--out", "e"])), 2);
    std::fs::write(tmp.path().join("dup.csv"), format!("S1,3t,{IDENTITY_ROW}\nS1,3t,{IDENTITY_ROW}\n")).unwrap();
    assert_eq!(code(&jawkit(tmp.path(), &["stats", "dup.csv", "--out", "e"])), 3);
}

#[test]
fn stats_ellipsoid_radius_matches_variance() {
    let tmp = TempDir::new().unwrap();
    let fx = fixture(tmp.path(), "fx", &["--splints", "4", "--repeats", "4"]);
    let o = jawkit(tmp.path(), &["stats", fx.join("ground_truth.csv").to_str().unwrap(), "--out", "st"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(tmp.path().join("st/pca.csv"));
    assert_eq!(rows.len(), 6);
    for row in rows {
        let variance: f64 = row[3].parse().unwrap();
        let r95: f64 = row[5].parse().unwrap();
        assert!((r95 - 2.7955 * variance.sqrt()).abs() < 2e-4, "{row:?}");
    }
    for name in ["histogram_t_norm.svg", "ellipsoid_rotation.svg", "karcher_mean.json", "mahalanobis.csv"] {
        assert!(tmp.path().join("st").join(name).exists(), "{name}");
    }
}

#[test]
fn zero_noise_simulation_has_no_difference() {
    let tmp = TempDir::new().unwrap();
    let fx = fixture(tmp.path(), "fx", &["--noise", "zero"]);
    let o = jawkit(tmp.path(), &["simulate", fx.join("manifest.json").to_str().unwrap(), "--out", "sim", "--no-images"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(tmp.path().join("sim/joint_summary.csv"));
    assert_eq!(rows.len(), 4 * 2 + 2);
    for row in rows {
        assert_eq!(row[4], "0.000000", "{row:?}");
        assert_eq!(row[5], "0.000000", "{row:?}");
    }
}

#[test]
fn full_fixture_yields_sixty_four_joint_reports() {
    let tmp = TempDir::new().unwrap();
    let fx = fixture(tmp.path(), "fx", &["--splints", "8", "--repeats", "4"]);
    let o = jawkit(tmp.path(), &["simulate", fx.join("manifest.json").to_str().unwrap(), "--out", "sim", "--no-images"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("64 joint reports"));
    assert_eq!(std::fs::read_dir(tmp.path().join("sim/maps")).unwrap().count(), 64);
}

#[test]
fn distmap_writes_tables_and_image() {
    let tmp = TempDir::new().unwrap();
    let fx = fixture(tmp.path(), "fx", &[]);
    let src = fx.join("meshes/fossa_left.ply");
    let dst = fx.join("meshes/condyle_left.ply");
    let o = jawkit(
        tmp.path(),
        &["distmap", "--source", src.to_str().unwrap(), "--target", dst.to_str().unwrap(), "--clamp", "3", "--out", "dm"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(tmp.path().join("dm/distance_map.csv"));
    assert!(rows.iter().any(|r| r[2] == "0"), "a 3 mm clamp masks part of a 1.5 to 4 mm gap");
    for r in rows.iter().filter(|r| r[2] == "1") {
        assert!(r[1].parse::<f64>().unwrap() <= 3.0);
    }
    assert!(tmp.path().join("dm/distance_map.png").exists());
    assert!(tmp.path().join("dm/distance_map.ply").exists());
}

#[test]
fn report_is_deterministic_and_accurate() {
    let tmp = TempDir::new().unwrap();
    let fx = fixture(tmp.path(), "fx", &["--seed", "11"]);
    let manifest = fx.join("manifest.json");
    for out in ["a", "b"] {
        let o = jawkit(tmp.path(), &["report", manifest.to_str().unwrap(), "--out", out, "--jobs", "2"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let mut compared = 0;
    for entry in std::fs::read_dir(tmp.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_str().unwrap();
        if name.ends_with(".csv") || name.ends_with(".json") {
            assert_eq!(read(tmp.path().join("a").join(name)), read(tmp.path().join("b").join(name)), "{name}");
            compared += 1;
        }
    }
    assert!(compared >= 8);
    for row in csv_rows(tmp.path().join("a/recovery.csv")) {
        let t_err: f64 = row[row.len() - 3].parse().unwrap();
        let r_err: f64 = row[row.len() - 2].parse().unwrap();
        assert!(t_err < 0.1 && r_err < 0.1, "{row:?}");
    }
}

#[test]
fn run_all_follows_config() {
    let tmp = TempDir::new().unwrap();
    tree_file(tmp.path(), "[0,1,0,2, -1,0,0,1, 0,0,1,0, 0,0,0,1]");
    std::fs::write(
        tmp.path().join("jawkit.toml"),
        "out = \"results\"\nimages = false\n[fixture]\nsplints = 2\nrepeats = 1\n[paths]\ntree = \"tree.json\"\n",
    )
    .unwrap();
    let o = jawkit(tmp.path(), &["--config", "jawkit.toml", "run-all"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["fixture/manifest.json", "samples.csv", "joint_summary.csv", "tree_check.json"] {
        assert!(tmp.path().join("results").join(name).exists(), "{name}");
    }
    assert!(!tmp.path().join("results/errorbar.svg").exists());
}
