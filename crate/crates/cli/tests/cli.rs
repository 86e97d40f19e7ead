use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
    "data": {"sim_samples": 600, "real_levels": 3, "load_samples": 30},
    "training": {"smap": {"max_epochs": 5}, "s2r": {"max_epochs": 5, "seed": 100}},
    "control": {"config": {"max_outer": 1, "inner": {"max_periods": 2}}}
}"#;

fn sensorspace(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensorspace"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), SMALL).unwrap();
    dir
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count()
        - 1
}

#[test]
fn usage_and_config_errors_exit_4() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(sensorspace(d, &["--help"]).status.code(), Some(0));
    assert_eq!(sensorspace(d, &["frobnicate"]).status.code(), Some(4));
    std::fs::write(d.join("bad.json"), r#"{"sede": 3}"#).unwrap();
    assert_eq!(sensorspace(d, &["gen-data", "--config", "bad.json", "--kind", "sim"]).status.code(), Some(4));
    assert_eq!(sensorspace(d, &["gen-data", "--config", "missing.json", "--kind", "sim"]).status.code(), Some(4));
    // models not trained yet
    let out = sensorspace(d, &["eval", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run"));
    let out = sensorspace(d, &["control", "--config", "c.json", "--target", "1,2,3"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn calibrate_from_file_and_bad_rows() {
    let dir = setup();
    let d = dir.path();
    let mut csv = String::from("inductance,length_mm\n");
    for k in 0..40 {
        let i = 120.0 + k as f64;
        csv.push_str(&format!("{i},{}\n", 0.01 * i * i - i + 50.0));
    }
    std::fs::write(d.join("cal.csv"), &csv).unwrap();
    let out = sensorspace(d, &["calibrate", "--config", "c.json", "--input", "cal.csv", "--output", "curve.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let curve: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("curve.json")).unwrap()).unwrap();
    assert!(curve["residual_rms"].as_f64().unwrap() < 1e-6);

    std::fs::write(d.join("bad.csv"), "inductance,length_mm\n120,80\n121,oops\n").unwrap();
    let out = sensorspace(d, &["calibrate", "--config", "c.json", "--input", "bad.csv"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains('3'));
    std::fs::write(d.join("nohead.csv"), "120,80\n121,81\n").unwrap();
    assert_eq!(sensorspace(d, &["calibrate", "--config", "c.json", "--input", "nohead.csv"]).status.code(), Some(4));
}

#[test]
fn pipeline_writes_expected_artifacts() {
    let dir = setup();
    let d = dir.path();
    let ok = |args: &[&str]| {
        let mut a = args.to_vec();
        a.extend(["--config", "c.json"]);
        let out = sensorspace(d, &a);
        assert!(matches!(out.status.code(), Some(0 | 2 | 3)), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    ok(&["gen-data", "--kind", "sim"]);
    ok(&["gen-data", "--kind", "real"]);
    let out_dir = d.join("out");
    assert_eq!(data_rows(&out_dir.join("sim_data.csv")), 600);
    assert_eq!(data_rows(&out_dir.join("real_data.csv")), 729);
    let header = std::fs::read_to_string(out_dir.join("sim_data.csv")).unwrap();
    assert!(header.starts_with("# simulated dataset config_sha256="));

    ok(&["train", "--which", "smap"]);
    ok(&["train", "--which", "s2r"]);
    let widths = |f: &str| -> Vec<(u64, u64)> {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join(f)).unwrap()).unwrap();
        v["layers"]
            .as_array()
            .unwrap()
            .iter()
            .map(|l| (l["rows"].as_u64().unwrap(), l["cols"].as_u64().unwrap()))
            .collect()
    };
    assert_eq!(widths("smap.json"), vec![(120, 24), (120, 120), (6, 120)]);
    assert_eq!(widths("s2r_t.json"), vec![(45, 3), (3, 45)]);
    assert_eq!(widths("s2r_r.json"), vec![(45, 3), (3, 45)]);

    let out = ok(&["eval", "--mode", "loads"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("500 g"));
    let loads = std::fs::read_to_string(out_dir.join("eval_loads.csv")).unwrap();
    for g in ["0 g", "35 g", "115 g", "270 g", "500 g"] {
        assert!(loads.lines().any(|l| l.starts_with(&format!("{g},"))), "{g}");
    }
    assert!(out_dir.join("eval_loads.svg").is_file());

    // a 60-row path file gives 60 per-waypoint rows
    let mut path = String::from("x,y,z,yaw,pitch,roll\n");
    for k in 0..60 {
        let t = std::f64::consts::TAU * k as f64 / 60.0;
        path.push_str(&format!("{},{},320,0,0,0\n", 20.0 * t.cos(), 20.0 * t.sin()));
    }
    std::fs::write(d.join("path.csv"), path).unwrap();
    let out = ok(&["control", "--path", "path.csv"]);
    assert!(matches!(out.status.code(), Some(0 | 3)));
    assert_eq!(data_rows(&out_dir.join("control_waypoints.csv")), 60);
    assert!(out_dir.join("control_trajectory.svg").is_file());

    std::fs::write(d.join("broken.csv"), "x,y,z,yaw,pitch,roll\n1,2,3\n").unwrap();
    let out = sensorspace(d, &["control", "--config", "c.json", "--path", "broken.csv"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2"));
}
