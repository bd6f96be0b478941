use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paneitz-lab")).args(args).output().unwrap()
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn constant_flow_is_a_one_row_fixed_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "experiment = flow\ngrid = 8\nmap = constant\nmap_point = 0,0,1\n");
    let out = tmp.path().join("out");
    let o = run(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out.join("flow_trace_8.csv"));
    assert_eq!(rows[0], ["t", "dt", "E_total", "E_tension", "E_scalar", "E_ricci", "grad_norm", "residual_norm", "backtracks"]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 0.0);
    assert!(out.join("u_final_8.pxl4").exists());

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "flow");
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["levels"], serde_json::json!([8]));
    assert!(summary["assertions"].as_array().is_some_and(|a| !a.is_empty()));
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l.starts_with("PASS ")));
}

#[test]
fn failed_assertion_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "experiment = flow\ngrid = 10\nmap = perturbed_great_circle\nnoise_radius = 0.15\nnoise_margin = 0.1\nmax_steps = 2\n",
    );
    let out = tmp.path().join("out");
    let o = run(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l.starts_with("FAIL ")));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], false);
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    for (text, needle) in [
        ("grid = 8\n", "experiment"),
        ("experiment = flow\ngird = 8\n", "gird"),
        ("experiment = flow\ngrid = 8\ngrid = 9\n", "grid"),
        ("experiment = flow\ngrid = eight\n", "grid"),
        ("experiment = sideways\n", "sideways"),
        ("experiment = flow\nthis line has no equals sign\n", "line 2"),
    ] {
        let cfg = write_cfg(tmp.path(), text);
        let o = run(&["--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{text:?}: {err}");
    }
}

#[test]
fn usage_and_io_errors_exit_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["--config", "/nonexistent/run.cfg"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "experiment = flow\nphi = file\nphi_file = /nonexistent/phi.pxl4\ngrid = 8\n");
    assert_eq!(run(&["--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn overrides_change_levels_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "experiment = identities\ngrid = 20\nsamples = 50\n");
    let out = tmp.path().join("out");
    let o = run(&["--config", &cfg, "--grid", "7", "--seed", "99", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["levels"], serde_json::json!([7]));
    assert_eq!(summary["seed"], 99);
}
