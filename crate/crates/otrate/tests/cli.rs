use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_otrate"))
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn sweep_output_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("minimal.json");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let o = run(&["--config", s(&cfg), "--out", s(&a), "--threads", "1", "sweep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["--config", s(&cfg), "--out", s(&b), "--threads", "4", "sweep"]);
    assert!(o.status.success());
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    assert!(text.starts_with("eps,gap,lower,upper,candidate_kind,ot_value,reg_value,iters\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
  "marginals": [
    {"uniform_grid": {"d": 2, "n_per_axis": 12, "low": 0.0, "high": 1.0}},
    {"uniform_grid": {"d": 2, "n_per_axis": 12, "low": 0.0, "high": 1.0}}
  ],
  "cost": {"kind": "sq_euclidean"},
  "divergence": {"kind": "entropy"},
  "eps_grid": {"values": [0.1]},
  "quantizer": {"kind": "lloyd", "restarts": 1, "n_grid": [2, 4, 8, 16]},
  "seed": 3
}"#;
    let cfg = write_config(dir.path(), body);
    let a = run(&["--config", s(&cfg), "--seed", "3", "quantrate", "--marginal", "0"]);
    let b = run(&["--config", s(&cfg), "quantrate", "--marginal", "0"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn fit_reads_emitted_tables() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
  "marginals": [
    {"uniform_grid": {"d": 1, "n_per_axis": 48, "low": 0.0, "high": 1.0}},
    {"uniform_grid": {"d": 1, "n_per_axis": 48, "low": 0.2, "high": 0.9}}
  ],
  "cost": {"kind": "sq_euclidean"},
  "divergence": {"kind": "entropy"},
  "eps_grid": {"log_spaced": {"min": 0.01, "max": 0.1, "count": 6}},
  "seed": 1
}"#;
    let cfg = write_config(dir.path(), body);
    let out = dir.path().join("r.csv");
    let o = run(&["--config", s(&cfg), "--out", s(&out), "sweep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["fit", "--input", s(&out), "--model", "eps-log"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["model"], "eps_log");
    assert!(v["a"].as_f64().unwrap() > 0.0);
    let o = run(&["fit", "--input", s(&out), "--model", "power"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let theta = v["theta"].as_f64().unwrap();
    assert!(theta > 0.0 && theta < 1.0);
}

#[test]
fn certify_emits_every_candidate() {
    let o = run(&["--config", s(&data("minimal.json")), "certify", "--eps", "0.1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let cands = v["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 2);
    let upper = v["upper"].as_f64().unwrap();
    let best = cands.iter().map(|c| c["upper"].as_f64().unwrap()).fold(f64::INFINITY, f64::min);
    assert_eq!(upper, best);
    assert!(v["lower"].as_f64().unwrap() <= v["gap"].as_f64().unwrap() + 1e-6);
    assert!(v["gap"].as_f64().unwrap() <= upper + 1e-6);
}

#[test]
fn solve_lists_values() {
    let o = run(&["--config", s(&data("minimal.json")), "solve"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eps,ot_value,reg_value,gap,dual_value,iters"));
    for line in lines {
        let f: Vec<f64> = line.split(',').take(5).map(|x| x.parse().unwrap()).collect();
        assert!(f[2] >= f[1] && (f[3] - (f[2] - f[1])).abs() < 1e-15 && f[4] <= f[2] + 1e-15);
    }
}

#[test]
fn invalid_measure_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "w,x1\n0.7,0\n0.7,1\n").unwrap();
    let body = r#"{
  "marginals": [{"file": {"path": "bad.csv"}}, {"two_point": {"x": [0.0], "y": [1.0], "p": 0.5}}],
  "cost": {"kind": "sq_euclidean"},
  "divergence": {"kind": "entropy"},
  "eps_grid": {"values": [0.1]},
  "seed": 0
}"#;
    let cfg = write_config(dir.path(), body);
    let o = run(&["--config", s(&cfg), "solve"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn non_convergence_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
  "marginals": [
    {"uniform_grid": {"d": 1, "n_per_axis": 32, "low": 0.0, "high": 1.0}},
    {"uniform_grid": {"d": 1, "n_per_axis": 32, "low": 0.3, "high": 0.5}}
  ],
  "cost": {"kind": "sq_euclidean"},
  "divergence": {"kind": "power", "rho": 2.0},
  "eps_grid": {"values": [0.001]},
  "solver": {"tol": 1e-12, "max_iter": 1},
  "seed": 0
}"#;
    let cfg = write_config(dir.path(), body);
    let o = run(&["--config", s(&cfg), "solve"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("eps"), "{err}");
}

#[test]
fn configuration_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"marginals": [], "typo": 1}"#);
    let o = run(&["--config", s(&cfg), "sweep"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["sweep"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["--config", s(&cfg), "sweep", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(run(&["--help"]).status.success());
    let o = run(&["--config", s(&data("minimal.json")), "certify", "--eps", "-1"]);
    assert_eq!(o.status.code(), Some(1));
}
