use std::path::Path;
use std::process::{Command, Output};

use sqa_core::anneal::CSV_HEADER;
use sqa_core::cli::{RunConfig, EXIT_CAPACITY, EXIT_USAGE, EXIT_VALIDATION};
use sqa_core::graph::SpinGlassInstance;

fn sqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqa"))
        .args(args)
        .env_remove("SQA_JOBS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sqa(args);
    assert!(
        out.status.success(),
        "sqa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn gen_instance_writes_lattice_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for p in [&a, &b] {
        ok(&["gen-instance", "--width", "10", "--height", "10", "--periodic", "--seed", "1", "--out", path(p)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let inst = SpinGlassInstance::read(&a).unwrap();
    assert_eq!((inst.graph.n_sites(), inst.graph.n_bonds()), (100, 200));
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.contains(&format!("# sqa {}", env!("CARGO_PKG_VERSION"))));
    let config = RunConfig::load(&a).unwrap();
    assert!(matches!(config, RunConfig::GenInstance(ref g) if g.width == 10 && g.periodic));
}

#[test]
fn usage_errors() {
    let out = sqa(&["gen-instance", "--width", "1", "--height", "4"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let out = sqa(&["anneal", "--driver", "tf", "--lambda0", "1"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tf"));
    let out = sqa(&["anneal", "--driver", "zz"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let out = sqa(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}

#[test]
fn capacity_errors() {
    let dir = tempfile::tempdir().unwrap();
    let big = dir.path().join("big.txt");
    ok(&["gen-instance", "--width", "6", "--height", "6", "--periodic", "--out", path(&big)]);
    let out = sqa(&["ground-state", "--instance", path(&big)]);
    assert_eq!(out.status.code(), Some(EXIT_CAPACITY));
    let out = sqa(&["validate", "--instance", path(&big)]);
    assert_eq!(out.status.code(), Some(EXIT_CAPACITY));
}

#[test]
fn ground_state_of_ferromagnet() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ferro.txt");
    let mut text = String::from("9 18\n");
    for y in 0..3 {
        for x in 0..3 {
            let s = 3 * y + x;
            text += &format!("{s} {} -1\n{s} {} -1\n", 3 * y + (x + 1) % 3, 3 * ((y + 1) % 3) + x);
        }
    }
    std::fs::write(&p, text).unwrap();
    let out = ok(&["ground-state", "--instance", path(&p)]);
    let row = data_lines(&out)[1];
    assert!(row == "-18.0,+++++++++" || row == "-18.0,---------", "{row}");
}

#[test]
fn anneal_emits_one_row_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let args = [
        "anneal", "--driver", "fi", "--gamma0", "1", "--lambda0", "1", "--beta", "20", "--trotter-step", "0.3125",
        "--t-final", "2000", "--width", "4", "--height", "4", "--seed", "3", "--trace", path(&trace),
    ];
    let first = ok(&args);
    let second = ok(&args);
    assert_eq!(first, second);
    let lines = data_lines(&first);
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&fields[1..7], &["fi", "semilocal", "20", "64", "2000", "3"]);
    let residual: f64 = fields[9].parse().unwrap();
    assert!(residual >= 0.0);
    let nbar: f64 = fields[10].parse().unwrap();
    let cost: f64 = fields[11].parse().unwrap();
    assert_eq!(cost, 2000.0 * nbar);
    let trace = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(data_lines(&trace).len(), 33);
}

#[test]
fn sweep_produces_full_matrix_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let mut instances = Vec::new();
    for seed in [1, 2] {
        let p = dir.path().join(format!("i{seed}.txt"));
        ok(&["gen-instance", "--width", "4", "--height", "4", "--periodic", "--seed", &seed.to_string(), "--out", path(&p)]);
        instances.push(p);
    }
    let config = dir.path().join("sweep.json");
    std::fs::write(
        &config,
        r#"{
            "drivers": [
                {"driver": "tf", "gamma0": 2.0, "lambda0": 0.0},
                {"driver": "fi", "gamma0": 1.0, "lambda0": 1.0}
            ],
            "modes": ["semilocal"],
            "betas": [20.0],
            "trotter_step": 0.3125,
            "t_finals": [100, 1000],
            "seeds": [1, 2, 3]
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out.csv");
    let mut args = vec!["--jobs", "2", "sweep", "--config", path(&config), "--out", path(&out)];
    args.extend(instances.iter().map(|p| path(p)));
    ok(&args);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows = data_lines(&text);
    assert_eq!(rows[0], CSV_HEADER);
    assert_eq!(rows.len() - 1, 2 * 2 * 2 * 3);
    assert!(rows[1..].iter().all(|r| r.split(',').nth(9).is_some_and(|v| !v.is_empty())));

    let replay = dir.path().join("replay.csv");
    ok(&["--jobs", "1", "run", "--config", path(&out), "--out", path(&replay)]);
    let replayed = std::fs::read_to_string(&replay).unwrap();
    assert_eq!(data_lines(&replayed), rows);
}

#[test]
fn bad_sweep_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.txt");
    ok(&["gen-instance", "--width", "3", "--height", "3", "--periodic", "--out", path(&inst)]);
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"drivers": [], "modes": [], "betas": [], "trotter_step": 0.1, "t_finals": [], "seeds": [], "extra": 1}"#).unwrap();
    let out = sqa(&["sweep", "--config", path(&config), path(&inst)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));
}

#[test]
fn validate_passes_and_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.csv");
    let args = [
        "validate", "--grid", "custom", "--betas", "1", "--lambdas", "0", "--gammas", "1", "--trotter-step", "0.01",
        "--sweeps", "4000", "--seed", "1", "--out", path(&out),
    ];
    ok(&args);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows = data_lines(&text);
    assert_eq!(rows[0], "beta,lambda,gamma,ed,qmc,qmc_stderr,sigmas,pass");
    assert!(rows[1].ends_with(",true"));

    let mut corrupt = args.to_vec();
    corrupt.extend(["--corrupt-tables", "0.3"]);
    let failed = sqa(&corrupt);
    assert_eq!(failed.status.code(), Some(EXIT_VALIDATION));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(data_lines(&text)[1].ends_with(",false"));
}

#[test]
fn phase_scan_smoke_grid_is_reproducible() {
    let args = [
        "phase-scan", "--width", "3", "--height", "3", "--beta", "2", "--points", "2", "--lambda-max", "1.9",
        "--gamma-max", "1.9", "--sweeps", "100", "--thermalization", "20", "--seed", "9",
    ];
    let a = ok(&args);
    let b = sqa(&args);
    assert_eq!(a, String::from_utf8(b.stdout).unwrap());
    let rows = data_lines(&a);
    assert_eq!(rows[0], "lambda,gamma,zz,zz_stderr,normalized");
    assert_eq!(rows.len(), 5);
    assert!(a.lines().any(|l| l.starts_with("# crossing")));
}

#[test]
fn jobs_can_come_from_the_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_sqa"))
        .args(["gen-instance", "--width", "3", "--height", "3"])
        .env("SQA_JOBS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_sqa"))
        .args(["gen-instance", "--width", "3", "--height", "3"])
        .env("SQA_JOBS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}
