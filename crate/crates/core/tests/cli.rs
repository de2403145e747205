use std::path::Path;
use std::process::{Command, Output};

fn spheregap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spheregap")).args(args).output().expect("binary runs")
}

fn spheregap_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spheregap")).args(args).env(key, value).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn diff_planar_value_and_keys() {
    let out = spheregap(&["diff", "--n", "2", "--r1", "1", "--r2", "2", "--eps", "1e-6"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for key in ["format_version", "delta_u", "tail_error", "gradient_lower_bound", "predicted_gap", "ratio"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!((v["delta_u"].as_f64().unwrap() / 3.266e-3 - 1.0).abs() < 1e-3);
}

#[test]
fn diff_prints_seventeen_significant_digits() {
    let out = spheregap(&["diff", "--n", "3", "--r1", "1", "--r2", "1", "--eps", "1e-3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mantissa = text.split("\"delta_u\":").nth(1).unwrap().split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17, "{mantissa}");
}

#[test]
fn config_errors_exit_two() {
    let out = spheregap(&["diff", "--n", "3", "--r1", "1", "--eps", "1e-3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("r2"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"n": 3, "r1": 1, "r2": 1, "eps": 1e-3, "colour": "red"}"#).unwrap();
    let out = spheregap(&["diff", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("colour"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"n": 3, "r1": 1, "r2": 2, "eps": 1e-2, "field": {"linear": [0, 1, 0]}}"#).unwrap();
    let out = spheregap(&["diff", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["delta_u"].as_f64(), Some(0.0));
    let out = spheregap(&["diff", "--config", cfg.to_str().unwrap(), "--field", "x1"]);
    assert!(json(&out)["delta_u"].as_f64().unwrap() > 0.0);
}

#[test]
fn precision_refusal_exits_three() {
    let out = spheregap(&["diff", "--n", "3", "--r1", "1", "--r2", "1", "--eps", "1e-11"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("floor"));
}

#[test]
fn charges_shape_and_symmetry() {
    let out = spheregap(&["charges", "--n", "3", "--r1", "1", "--r2", "1", "--eps", "1e-2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for key in ["format_version", "config", "charges", "Q1", "Q2", "M", "omega_n", "tail_bounds"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["Q1"], v["Q2"]);
    let charges = v["charges"].as_array().unwrap();
    let fam = |f: u64| charges.iter().filter(|c| c["family"] == f).collect::<Vec<_>>();
    let (a, b) = (fam(1), fam(2));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x["x"].as_f64().unwrap(), -y["x"].as_f64().unwrap());
        assert_eq!(x["q"], y["q"]);
    }
}

#[test]
fn charges_ladder_grows_like_inverse_root_delta() {
    let len = |eps: &str| {
        let out = spheregap(&["charges", "--n", "3", "--r1", "1", "--r2", "1", "--eps", eps]);
        json(&out)["charges"].as_array().unwrap().len() as f64
    };
    let growth = len("1e-6") / len("1e-4");
    assert!(growth > 10.0 * 0.7 && growth < 10.0 * 1.3, "{growth}");
}

#[test]
fn charges_planar_refused() {
    let out = spheregap(&["charges", "--n", "2", "--r1", "1", "--r2", "1", "--eps", "1e-3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("closed form has no ladder"));
}

#[test]
fn verify_passes_and_detects_fault() {
    let base = ["verify", "--n", "3", "--r1", "1", "--r2", "2", "--eps", "1e-3"];
    let out = spheregap(&base);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["all_pass"], true);
    for check in v["checks"].as_array().unwrap() {
        for key in ["name", "value", "expected", "tolerance", "pass"] {
            assert!(check.get(key).is_some());
        }
    }

    let mut faulty = base.to_vec();
    faulty.extend(["--perturb-q", "1e-3"]);
    let out = spheregap(&faulty);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    let flux = v["checks"].as_array().unwrap().iter().find(|c| c["name"] == "flux_D1").unwrap();
    assert_eq!(flux["pass"], false);
}

#[test]
fn verify_planar_runs_planar_checks() {
    let out = spheregap(&["verify", "--n", "2", "--r1", "1", "--r2", "5", "--eps", "1e-4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let names: Vec<String> =
        json(&out)["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap().to_string()).collect();
    assert!(names.iter().any(|n| n == "flux_D1"));
    assert!(!names.iter().any(|n| n.starts_with("band")));
}

fn sweep_files(dir: &Path, threads: &str) -> (String, String) {
    let out_path = dir.join(format!("sweep-{threads}.csv"));
    let out = spheregap_env(
        &["sweep", "--n", "3", "--r1", "1", "--r2", "1", "--eps", "1e-2,1e-3,1e-4,1e-5,1e-6", "--out", out_path.to_str().unwrap()],
        "SPHEREGAP_THREADS",
        threads,
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let fit = std::fs::read_to_string(dir.join(format!("sweep-{threads}.csv.fit.json"))).unwrap();
    (csv, fit)
}

#[test]
fn sweep_writes_csv_and_fit_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (csv1, fit1) = sweep_files(dir.path(), "1");
    let (csv4, fit4) = sweep_files(dir.path(), "4");
    assert_eq!(csv1, csv4);
    assert_eq!(fit1, fit4);
    let lines: Vec<&str> = csv1.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("format_version,eps,delta,d,delta_u"));
    let fit: serde_json::Value = serde_json::from_str(&fit1).unwrap();
    assert_eq!(fit["fits"][0]["fit"]["model"], "inv_log_eps");
}

#[test]
fn sweep_flags_failed_rows_and_rejects_bad_lists() {
    let out = spheregap(&["sweep", "--n", "3", "--r1", "1", "--r2", "1", "--eps", "1e-2,1e-11"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("failed"));

    let out = spheregap(&["sweep", "--n", "3", "--r1", "1", "--r2", "1", "--eps", "1e-2,1e-2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let out = spheregap_env(&["diff", "--n", "2", "--r1", "1", "--r2", "1", "--eps", "1e-3"], "SPHEREGAP_THREADS", "zero");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_run_leaves_no_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("diff.json");
    let out = spheregap(&["diff", "--n", "3", "--r1", "1", "--r2", "1", "--eps", "1e-11", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!path.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}
