use std::path::Path;
use std::process::Command;

use plate_cli::experiment::Manifest;
use plate_cli::{
    compare_runs, run_experiment, sweep, RunConfig, EXIT_ANALYSIS, EXIT_BOUND, EXIT_CONFIG,
    EXIT_STRUCTURE,
};
use serde_json::json;

fn small_config() -> serde_json::Value {
    json!({
        "description": "small linear run",
        "grid": {"dim": 1, "half_length": 25.132741228718345, "points_per_axis": 64},
        "model": {"name": "linear_isotropic"},
        "initial_data": {
            "u0": {"kind": "gaussian", "amplitude": 0.05, "width": 1.5},
            "u1": {"kind": "zero"}
        },
        "integrator": {"dt": 0.2},
        "t_end": 20.0,
        "checkpoints": {"count": 21, "spacing": "linear"},
        "analysis": {"norms": ["u/k0/L2", "u_t/k0/L2"]}
    })
}

fn write_config(dir: &Path, value: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn plate(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_plate"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn run_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("run");
    let o = plate(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let m = Manifest::read(&out).unwrap();
    assert_eq!(m.status, "ok");
    assert_eq!(m.checkpoints.len(), 21);
    assert!(out.join("fields/u_0020.bin").exists());
    assert!(out.join("fields/u_t_0020.json").exists());
    assert!(out.join("plots/u_k0_L2.dat").exists());
    let norms = std::fs::read_to_string(out.join("norms.csv")).unwrap();
    assert_eq!(norms.lines().next(), Some("t,descriptor,value"));
    assert_eq!(norms.lines().count(), 1 + 21 * 2);
    let rates = std::fs::read_to_string(out.join("rates.csv")).unwrap();
    assert!(rates.lines().nth(1).unwrap().ends_with(",2..20"));
    let e = m.energy.unwrap();
    assert!(e.nonincreasing);
    assert!(e.max_residual < 1e-8);
}

#[test]
fn overrides_reach_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("run");
    let o = plate(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--override",
        "integrator.dt=0.1",
        "--override",
        "description=changed",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let m = Manifest::read(&out).unwrap();
    assert_eq!(m.config.integrator.dt, 0.1);
    assert_eq!(m.config.description, "changed");
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let code = |value: serde_json::Value| {
        let cfg = write_config(tmp.path(), &value);
        plate(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status
        .code()
    };

    let mut bad = small_config();
    bad["grid"]["points"] = json!(64);
    assert_eq!(code(bad), Some(EXIT_CONFIG));

    let mut bad = small_config();
    bad["grid"]["points_per_axis"] = json!(3);
    assert_eq!(code(bad), Some(EXIT_CONFIG));

    let mut unstable = small_config();
    unstable["model"]["params"] = json!({"scale": -1.0});
    assert_eq!(code(unstable), Some(EXIT_STRUCTURE));
    assert_eq!(Manifest::read(&out).unwrap().status, "structural_failure");

    let mut large = small_config();
    large["initial_data"]["u0"]["amplitude"] = json!(5.0);
    assert_eq!(code(large), Some(EXIT_BOUND));

    let mut narrow = small_config();
    narrow["analysis"]["fit_windows"] = json!([[19.5, 20.0]]);
    assert_eq!(code(narrow), Some(EXIT_ANALYSIS));
}

#[test]
fn bound_violation_keeps_partial_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = small_config();
    v["model"] = json!({"name": "quartic", "params": {"beta": 1.0}});
    v["initial_data"]["u1"] = json!({"kind": "gaussian", "amplitude": 0.2, "width": 1.5});
    v["integrator"]["hessian_bound"] = json!(0.05);
    let cfg: RunConfig = serde_json::from_value(v).unwrap();
    let m = run_experiment(&cfg, tmp.path()).unwrap();
    assert_eq!(m.exit_code, EXIT_BOUND);
    assert!(!m.checkpoints.is_empty());
    assert!(m.checkpoints.len() < 21);
    assert!(m.message.unwrap().contains("t ="));
}

#[test]
fn preset_print_round_trips() {
    let o = plate(&[
        "preset",
        "linear_decay_n2",
        "--print",
        "--override",
        "t_end=100",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = RunConfig::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.t_end, 100.0);
    assert_eq!(
        plate(&["preset", "nope", "--print"]).status.code(),
        Some(EXIT_CONFIG)
    );
}

#[test]
fn validate_model_reports_structure() {
    let ok = plate(&["validate-model", "--model", "quartic", "--dim", "2"]);
    assert_eq!(ok.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["passed"], json!(true));
    assert!((report["gamma_min"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let bad = plate(&[
        "validate-model",
        "--model",
        "linear_isotropic",
        "--param",
        "scale=-1",
    ]);
    assert_eq!(bad.status.code(), Some(EXIT_STRUCTURE));
}

#[test]
fn compare_identical_and_mismatched_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg: RunConfig = serde_json::from_value(small_config()).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_experiment(&cfg, &a).unwrap();
    run_experiment(&cfg, &b).unwrap();
    let r = compare_runs(&a, &b).unwrap();
    assert_eq!(r.fields.len(), 21);
    assert_eq!(r.max_u_l2, 0.0);
    assert_eq!(r.max_rate_difference, 0.0);

    let finer = cfg.with_overrides(&["integrator.dt=0.1".into()]).unwrap();
    let c = tmp.path().join("c");
    run_experiment(&finer, &c).unwrap();
    let r = compare_runs(&a, &c).unwrap();
    assert!(r.max_u_l2 < 1e-10, "linear runs are exact: {}", r.max_u_l2);

    let other = cfg
        .with_overrides(&["grid.points_per_axis=32".into()])
        .unwrap();
    let d = tmp.path().join("d");
    run_experiment(&other, &d).unwrap();
    assert!(compare_runs(&a, &d).is_err());

    let o = plate(&["compare", a.to_str().unwrap(), c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn sweep_runs_each_combination() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg: RunConfig = serde_json::from_value(small_config()).unwrap();
    let entries = sweep(
        &cfg,
        &[
            "integrator.dt=0.2,0.1".into(),
            "model.params.scale=1,2".into(),
        ],
        tmp.path(),
        3,
    )
    .unwrap();
    assert_eq!(entries.len(), 4);
    assert!(entries.iter().all(|e| e.exit_code == 0));
    let m = Manifest::read(&tmp.path().join("run_003")).unwrap();
    assert_eq!(m.config.integrator.dt, 0.1);
    assert_eq!(m.config.model.params["scale"], 2.0);
    assert!(tmp.path().join("sweep.json").exists());
}

#[test]
fn file_data_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg: RunConfig = serde_json::from_value(small_config()).unwrap();
    let first = tmp.path().join("first");
    run_experiment(&cfg, &first).unwrap();
    let mut v = small_config();
    v["initial_data"]["u0"] = json!({"kind": "file", "path": first.join("fields/u_0000")});
    let from_file: RunConfig = serde_json::from_value(v).unwrap();
    let second = tmp.path().join("second");
    let m = run_experiment(&from_file, &second).unwrap();
    assert_eq!(m.exit_code, 0);
    let r = compare_runs(&first, &second).unwrap();
    assert!(r.max_u_l2 < 1e-14);
}
