use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use whitney_core::seminorm::SeminormEstimate;
use whitney_core::Field;
use whitney_harness::Scenario;

fn whitney(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_whitney")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("whitney-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn scenario_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/gaussian-1d.json")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stored_extension_matches_the_library() {
    let dir = scratch("extend");
    let out = whitney(&["extend", "--config", s(&scenario_path()), "--out", s(&dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["cubes.json", "jets.json", "values.csv", "report.json"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }

    let queries = [-0.3, 0.05, 0.61, 2.5];
    let csv: String = queries.iter().map(|q| format!("{q}\n")).collect();
    fs::write(dir.join("q.csv"), csv).unwrap();
    let values = dir.join("queried.csv");
    let out = whitney(&[
        "extend",
        "--cubes",
        s(&dir.join("cubes.json")),
        "--jets",
        s(&dir.join("jets.json")),
        "--queries",
        s(&dir.join("q.csv")),
        "--deriv",
        "0",
        "--out",
        s(&values),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let inst = Scenario::load(&scenario_path()).unwrap().instance().unwrap();
    let text = fs::read_to_string(&values).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (x, v) = l.split_once(',').unwrap();
            (x.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), queries.len());
    for (x, v) in rows {
        assert_eq!(v, inst.extension.value(&[x]).unwrap(), "at {x}");
    }
}

#[test]
fn seminorm_calibration_case() {
    let dir = scratch("seminorm");
    let region = dir.join("box.json");
    fs::write(&region, r#"{"lo": [0.0], "hi": [1.0]}"#).unwrap();
    let est = dir.join("est.json");
    let out = whitney(&[
        "seminorm", "--field", "analytic:linear", "--region", s(&region), "--s", "0.5", "--p", "2", "--method",
        "tensor-quad", "--budget", "100000", "--seed", "1", "--out", s(&est),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let e: SeminormEstimate = serde_json::from_str(&fs::read_to_string(&est).unwrap()).unwrap();
    assert!((e.value - 1.0).abs() <= 1e-6, "{}", e.value);
}

#[test]
fn missing_input_exits_with_code_two() {
    let out = whitney(&["pou-check", "--cubes", "/nonexistent/cubes.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn pou_check_passes_on_a_stored_decomposition() {
    let dir = scratch("pou");
    fs::write(dir.join("sites.json"), "[[0.0], [0.375], [-0.5]]").unwrap();
    let cubes = dir.join("cubes.json");
    let out = whitney(&[
        "decompose", "--sites", s(&dir.join("sites.json")), "--domain-exp", "2", "--max-depth", "8", "--s", "1.5", "--p",
        "4", "--out", s(&cubes),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = whitney(&["pou-check", "--cubes", s(&cubes), "--out", s(&dir.join("pou.json"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
