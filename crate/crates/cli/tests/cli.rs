use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rpiv::sim::{generate, Setting, SimSpec, Violation};
use serde_json::Value;
use tempfile::TempDir;

fn rpiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpiv"))
        .args(args)
        .env_remove("RPIV_THREADS")
        .output()
        .expect("binary runs")
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json");
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(report: &Value) {
    let validator = schema();
    let errors: Vec<String> = validator.iter_errors(report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

fn write_sim_csv(dir: &TempDir, setting: Setting, n: usize, cluster: Option<usize>) -> PathBuf {
    let mut spec = SimSpec::new(setting, n, 1, 5).with_violation(Violation::ZSquared, 0.5);
    if let Some(m) = cluster {
        spec = spec.with_clusters(m, 0.3);
    }
    let ds = generate(&spec, 0).unwrap();
    let path = dir.path().join(format!("{}-{n}.csv", setting));
    ds.write_csv(fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn cluster_variance_without_column_exits_2() {
    let out = rpiv(&[
        "test", "--data", "missing.csv", "--response", "Y", "--endogenous", "X",
        "--instruments", "Z", "--variance", "cluster",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cluster column required"));
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_enum_and_missing_column_exit_2() {
    let out = rpiv(&["simulate", "--setting", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    let data = write_sim_csv(&dir, Setting::JustHom, 60, None);
    let out = rpiv(&[
        "test", "--data", data.to_str().unwrap(), "--response", "Y", "--endogenous", "nope",
        "--instruments", "Z",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing column"));
}

#[test]
fn jtest_just_identified_exits_3_and_augmentation_fixes_it() {
    let dir = TempDir::new().unwrap();
    let data = write_sim_csv(&dir, Setting::JustHom, 200, None);
    let base = [
        "jtest", "--data", data.to_str().unwrap(), "--response", "Y", "--endogenous", "X",
        "--instruments", "Z", "--controls", "C1,C2",
    ];
    let out = rpiv(&base);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("just-identified"));

    let mut args = base.to_vec();
    args.extend(["--augment-square", "Z"]);
    let out = rpiv(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid(&report);
    assert_eq!(report["result"]["dof"], 1);
    assert_eq!(report["config"]["augment_square"], "Z");
}

#[test]
fn jtest_overidentified_reports_statistic() {
    let dir = TempDir::new().unwrap();
    let data = write_sim_csv(&dir, Setting::OverHom, 150, None);
    let out = rpiv(&[
        "jtest", "--data", data.to_str().unwrap(), "--response", "Y", "--endogenous", "X",
        "--instruments", "Z1,Z2", "--controls", "C1,C2", "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,statistic,dof,p_value"));
    assert!(lines.next().unwrap().starts_with("150,"));
}

#[test]
fn test_report_validates_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let data = write_sim_csv(&dir, Setting::JustHom, 120, Some(4));
    let out_a = dir.path().join("a.json");
    let out_b = dir.path().join("b.json");
    let run = |out: &Path, threads: &str| {
        rpiv(&[
            "--threads", threads, "test", "--data", data.to_str().unwrap(), "--response", "Y",
            "--endogenous", "X", "--instruments", "Z", "--controls", "C1,C2",
            "--cluster-col", "cluster", "--variance", "cluster", "--splits", "4",
            "--seed", "9", "--out", out.to_str().unwrap(),
        ])
    };
    let first = run(&out_a, "1");
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(first.stdout.is_empty());
    assert!(run(&out_b, "3").stdout.is_empty());
    let a = fs::read(&out_a).unwrap();
    assert_eq!(a, fs::read(&out_b).unwrap());

    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_valid(&report);
    assert_eq!(report["config"]["splits"], 4);
    assert_eq!(report["config"]["variance"], "cluster");
    assert_eq!(report["result"]["per_split"].as_array().unwrap().len(), 4);
    let text = String::from_utf8(a).unwrap();
    let at = |key: &str| text.find(&format!("\n  \"{key}\":")).unwrap();
    assert!(at("tool") < at("version") && at("version") < at("command"));
    assert!(at("command") < at("config") && at("config") < at("result"));
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn test_csv_has_one_row_per_split() {
    let dir = TempDir::new().unwrap();
    let data = write_sim_csv(&dir, Setting::OverHet, 100, None);
    let out = rpiv(&[
        "test", "--data", data.to_str().unwrap(), "--response", "Y", "--endogenous", "X",
        "--instruments", "Z1,Z2", "--controls", "C1,C2", "--splits", "3", "--variance", "hom",
        "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(1).unwrap().split(',').nth(2) == Some("hom"));
}

#[test]
fn tiny_sample_is_a_rank_error() {
    let dir = TempDir::new().unwrap();
    let data = write_sim_csv(&dir, Setting::JustHom, 8, None);
    let out = rpiv(&[
        "test", "--data", data.to_str().unwrap(), "--response", "Y", "--endogenous", "X",
        "--instruments", "Z", "--controls", "C1,C2", "--splits", "2",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_byte_identical_and_csv_has_all_strengths() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = rpiv(&[
            "simulate", "--setting", "just-hom", "--n", "100", "--reps", "4", "--seed", "1",
            "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    assert_valid(&serde_json::from_slice(&bytes).unwrap());

    let out = rpiv(&[
        "simulate", "--setting", "just-hom", "--n", "100", "--reps", "2",
        "--violation", "z-squared", "--strengths", "0,0.25,0.5,1", "--methods", "rp-het,overid-j",
        "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    for method in ["rp-het", "overid-j"] {
        let strengths: Vec<&str> = rows
            .iter()
            .filter(|r| r.split(',').nth(5) == Some(method))
            .map(|r| r.split(',').nth(3).unwrap())
            .collect();
        assert_eq!(strengths, ["0", "0.25", "0.5", "1"]);
    }
}

#[test]
fn clustered_simulation_defaults_include_cluster_method() {
    let out = rpiv(&[
        "simulate", "--setting", "just-hom", "--n", "80", "--reps", "2",
        "--cluster-size", "4", "--cluster-strength", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid(&report);
    let methods = report["config"]["methods"].as_array().unwrap();
    assert!(methods.iter().any(|m| m == "rp-cluster"));
}
