use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sparsebump(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsebump")).current_dir(dir).args(args).output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Depth 1, w = σ ≡ 1, family {[0,1), [0,½)}.
fn write_worked_example(dir: &Path) {
    fs::write(dir.join("model.json"), r#"{"depth": 1, "w": [1.0, 1.0], "sigma": [1.0, 1.0]}"#).unwrap();
    fs::write(dir.join("family.json"), r#"[{"level": 0, "index": 0}, {"level": 1, "index": 0}]"#).unwrap();
}

#[test]
fn gen_is_byte_identical_for_equal_seeds() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = sparsebump(dir.path(), &["gen", "--depth", "6", "--seed", "11", "--out", "run"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["model.json", "family.json"] {
        let x = fs::read(a.path().join("run").join(file)).unwrap();
        let y = fs::read(b.path().join("run").join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
    let other = tempfile::tempdir().unwrap();
    sparsebump(other.path(), &["gen", "--depth", "6", "--seed", "12", "--out", "run"]);
    assert_ne!(
        fs::read(a.path().join("run/model.json")).unwrap(),
        fs::read(other.path().join("run/model.json")).unwrap()
    );
}

#[test]
fn model_embeds_config_and_version() {
    let dir = tempfile::tempdir().unwrap();
    sparsebump(dir.path(), &["gen", "--depth", "3", "--seed", "2", "--out", "."]);
    let model = read_json(&dir.path().join("model.json"));
    assert_eq!(model["meta"]["config"]["seed"], 2);
    assert_eq!(model["meta"]["config"]["depth"], 3);
    assert!(model["meta"]["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
}

#[test]
fn spike_law_has_density_ratio_two_to_the_six() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparsebump(dir.path(), &["gen", "--depth", "6", "--seed", "4", "--law", "spike", "--out", "."]);
    assert!(out.status.success());
    let model = read_json(&dir.path().join("model.json"));
    for key in ["w", "sigma"] {
        let d: Vec<f64> = model[key].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(d.len(), 64);
        let max = d.iter().cloned().fold(f64::MIN, f64::max);
        let min = d.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(max / min, 64.0);
    }
}

#[test]
fn verify_worked_example_sawyer_ratio() {
    let dir = tempfile::tempdir().unwrap();
    write_worked_example(dir.path());
    let out = sparsebump(dir.path(), &["verify", "--which", "sawyer", "--out", "."]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("reports.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1);
    let report: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(report["name"], "sawyer");
    let norm = ((3.0 + 2.0 * 2f64.sqrt()) / 2.0).sqrt();
    let rhs = 2.0 * 2.5f64.sqrt();
    let ratio = report["ratio"].as_f64().unwrap();
    assert!((ratio - norm / rhs).abs() < 1e-9, "{ratio}");
    assert!((ratio - 0.5399).abs() < 1e-4);
    assert!(read_json(&dir.path().join("run.json"))["config"]["depth"] == 1);
}

#[test]
fn norm_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    write_worked_example(dir.path());
    for method in ["eigen", "ascent", "brute"] {
        let out = sparsebump(dir.path(), &["norm", "--norm-method", method, "--out", "."]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let norm = read_json(&dir.path().join("norm.json"));
        let value = norm["primal"]["value"].as_f64().unwrap();
        let tol = if method == "brute" { 1e-6 } else { 1e-9 };
        assert!((value - ((3.0 + 2.0 * 2f64.sqrt()) / 2.0).sqrt()).abs() < tol, "{method}: {value}");
    }
}

#[test]
fn constants_on_constant_weights_are_one() {
    let dir = tempfile::tempdir().unwrap();
    write_worked_example(dir.path());
    let out = sparsebump(dir.path(), &["constants", "--tables", "--out", "."]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = read_json(&dir.path().join("constants.json"));
    for key in ["entropy_w_sigma", "entropy_sigma_w", "direct_w_sigma", "direct_sigma_w", "plain_ap_w_sigma"] {
        assert_eq!(c[key]["value"].as_f64().unwrap(), 1.0, "{key}");
    }
    assert!(dir.path().join("t1.csv").exists());
}

#[test]
fn sweep_with_zero_seeds_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparsebump(dir.path(), &["sweep", "--seeds", "0", "--out", "."]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(dir.path().join("summary.csv")).unwrap(),
        "seed,depth,p,delta,inequality,lhs,rhs,ratio\n"
    );
    assert_eq!(fs::read_to_string(dir.path().join("reports.jsonl")).unwrap(), "");
}

#[test]
fn small_sweep_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparsebump(
        dir.path(),
        &["sweep", "--depths", "3,4", "--ps", "1.5,3", "--deltas", "0.2", "--seeds", "2", "--out", "."],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = fs::read_to_string(dir.path().join("summary.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 2 * 2 * 7);
}

#[test]
fn non_sparse_family_fails_verify_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("model.json"), r#"{"depth": 1, "w": [1.0, 1.0], "sigma": [1.0, 1.0]}"#).unwrap();
    fs::write(
        dir.path().join("family.json"),
        r#"[{"level": 0, "index": 0}, {"level": 1, "index": 0}, {"level": 1, "index": 1}]"#,
    )
    .unwrap();
    let out = sparsebump(dir.path(), &["verify", "--out", "."]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("model.json"), r#"{"depth": 1, "w": [1.0, -1.0], "sigma": [1.0, 1.0]}"#).unwrap();
    fs::write(dir.path().join("family.json"), "[]").unwrap();
    assert_eq!(sparsebump(dir.path(), &["norm", "--out", "."]).status.code(), Some(2));
}

#[test]
fn depth_cap_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sparsebump"))
        .current_dir(dir.path())
        .env("SPARSEBUMP_MAX_DEPTH", "5")
        .args(["gen", "--depth", "6"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "depth = 3\nseed = 8\n").unwrap();
    let out = sparsebump(dir.path(), &["--config", "run.toml", "gen", "--seed", "9", "--out", "."]);
    assert!(out.status.success());
    let model = read_json(&dir.path().join("model.json"));
    assert_eq!(model["depth"], 3);
    assert_eq!(model["meta"]["config"]["seed"], 9);
}

#[test]
fn search_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        sparsebump(dir.path(), &["search", "--depth", "3", "--iterations", "20", "--ladder-to", "4", "--out", "."]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ladder = fs::read_to_string(dir.path().join("ladder.csv")).unwrap();
    let ratios: Vec<f64> = ladder.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(ratios.len(), 2);
    assert!(ratios[1] >= ratios[0]);
    for file in ["trace.csv", "best_model.json", "best_family.json", "search.json"] {
        assert!(dir.path().join("depth_4").join(file).exists(), "{file}");
    }
}
