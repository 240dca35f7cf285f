use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tcclock"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("tcclock-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    d
}

fn manifest_files(dir: &Path) -> serde_json::Value {
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["files"].clone()
}

const SMALL: [&str; 8] = ["--spin2", "6", "--lambda", "2", "--trajectories", "6", "--seed", "11"];

#[test]
fn sweep_threshold_writes_csv_and_manifest() {
    let out = scratch("sweep");
    let st = bin().arg("sweep-threshold").args(SMALL).args(["--m-grid", "3,6,10,15,20,30", "--out"]).arg(&out).status().unwrap();
    assert!(st.success());
    let csv = fs::read_to_string(out.join("tradeoff.csv")).unwrap();
    assert!(csv.starts_with("M,R,A,F,dR,dA,dF\n"));
    assert!(out.join("optimal.json").exists() && out.join("wtd.csv").exists());
    let verify = bin().arg("verify").arg(&out).status().unwrap();
    assert!(verify.success());
    fs::write(out.join("wtd.csv"), "bin_lo,bin_hi,density\n").unwrap();
    assert_eq!(bin().arg("verify").arg(&out).status().unwrap().code(), Some(2));
    fs::remove_dir_all(out).unwrap();
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    for (dir, w) in [(&a, "1"), (&b, "2")] {
        let st = bin().arg("ft-check").args(SMALL).args(["--beta", "0.1", "--threshold", "3", "--workers", w, "--out"]).arg(dir).status().unwrap();
        assert!(st.success());
    }
    assert_eq!(manifest_files(&a), manifest_files(&b));
    fs::remove_dir_all(a).unwrap();
    fs::remove_dir_all(b).unwrap();
}

#[test]
fn config_file_with_flag_override() {
    let out = scratch("cfg");
    fs::create_dir_all(&out).unwrap();
    let cfg = out.join("run.json");
    fs::write(&cfg, r#"{"mode": "simulate", "params": {"spin2": 4, "lambda": 0.7, "gamma0": 0.001, "beta": 2.0}, "trajectories": 2, "horizon": 3000}"#).unwrap();
    let st = bin().args(["simulate", "--config"]).arg(&cfg).args(["--lambda", "1.5", "--out"]).arg(out.join("o")).status().unwrap();
    assert!(st.success());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["params"]["lambda"], 1.5);
    assert_eq!(m["config"]["trajectories"], 2);
    for f in ["counts.csv", "spectrum.csv", "ness_spectrum.csv", "trajectory_0000.csv", "trajectory_0000.json"] {
        assert!(out.join("o").join(f).exists(), "{f}");
    }
    fs::remove_dir_all(out).unwrap();
}

#[test]
fn exit_codes() {
    let out = scratch("codes");
    let bad = bin().args(["simulate", "--spin2", "4", "--lambda", "-1", "--out"]).arg(&out).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let usage = bin().args(["simulate", "--spin2", "four"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
    let thin = bin()
        .args(["sweep-threshold", "--spin2", "4", "--lambda", "2", "--trajectories", "1", "--horizon-min-ticks", "1", "--threshold", "5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(thin.status.code(), Some(4), "{}", String::from_utf8_lossy(&thin.stderr));
    let _ = fs::remove_dir_all(out);
}
