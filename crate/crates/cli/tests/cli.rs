use std::path::Path;
use std::process::Command;

fn mixnoise(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mixnoise"))
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn config_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    let bad = write(d.path(), "bad.ini", "[experiment]\nwat = 1\n");
    let (code, err) = mixnoise(d.path(), &["simulate", "--config", &bad]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("unknown key"), "{err}");
    let (code, _) = mixnoise(d.path(), &["sweep-gxi"]);
    assert_eq!(code, 1, "sweeps need two noise models");
    let (code, _) = mixnoise(d.path(), &["simulate", "--config", "/nonexistent.ini"]);
    assert_eq!(code, 1);
}

#[test]
fn coarse_step_fails_validation_with_exit_3() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "v.ini", "[experiment]\ndt = 0.5\nstride = 1\n");
    let (code, err) = mixnoise(d.path(), &["validate", "--config", &cfg]);
    assert_eq!(code, 3, "{err}");
    let report = std::fs::read_to_string(d.path().join("out/validation.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    let failed: Vec<&str> = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"dt_convergence"), "{failed:?}");
}

#[test]
fn blow_up_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "div.ini",
        "[experiment]\nn_traj = 4\nt_end = 400\ndt = 0.5\nt_eval = 400\n\n[system]\ng0 = 50\n\n[noise.a]\ntype = telegraph\np_jump = 0.1\n",
    );
    let (code, err) = mixnoise(d.path(), &["simulate", "--config", &cfg]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("diverged"), "{err}");
}

#[test]
fn simulate_writes_provenance_everywhere() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "s.ini",
        "[experiment]\nn_traj = 16\nt_end = 1\nt_eval = 1\n\n[noise.a]\ntype = ou\nrate = 5\nstrength = 1\n",
    );
    let (code, err) = mixnoise(d.path(), &["simulate", "--config", &cfg, "--seed", "42", "--workers", "2"]);
    assert_eq!(code, 0, "{err}");
    let out = d.path().join("out");
    for name in ["result.json", "concurrence.csv", "rho.csv", "norm.csv", "path.csv", "trajectory.csv", "plot.gp"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        assert!(text.contains("master_seed"), "{name}");
        assert!(text.contains("config_digest"), "{name}");
    }
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 42);
}
