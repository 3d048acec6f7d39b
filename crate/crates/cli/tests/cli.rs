use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn scl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scl")).args(args).output().expect("spawn scl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn hierarchy_prints_burgers_coefficients() {
    let o = scl(&["hierarchy", "--flux", "0,0,0.5", "--order", "2", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "k,coeff,a0,a1,a2,a3");
    // C0 = a0 a1, C1 = a1^2 + a0 a2, C2 = 3 a1 a2.
    for row in ["0,1,1,1,0,0", "1,1,0,2,0,0", "1,1,1,0,1,0", "2,3,0,1,1,0"] {
        assert!(rows.contains(&row), "{row} missing from {text}");
    }
    assert_eq!(rows.len(), 5);

    let o = scl(&["hierarchy", "--order", "1"]);
    assert!(stdout(&o).contains("C1 ="));
}

#[test]
fn solve_writes_one_csv_per_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let o = scl(&[
        "--out",
        path(dir.path()),
        "solve",
        "--flux",
        "0",
        "--nx",
        "64",
        "--times",
        "0.5,1",
        "--u0",
        "sine",
        "--deriv-order",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let times = fs::read_to_string(dir.path().join("times.csv")).unwrap();
    assert_eq!(times, "snapshot,t\n0,0\n1,0.5\n2,1\n");
    let last = fs::read_to_string(dir.path().join("snapshot_002.csv")).unwrap();
    let mut lines = last.lines();
    assert_eq!(lines.next(), Some("x,u,du1,du2"));
    let decay = (-0.1f64).exp();
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - decay * v[0].sin()).abs() < 2e-3);
    }
}

#[test]
fn bad_arguments_exit_with_status_two() {
    let o = scl(&["solve", "--flux", "1,,2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("flux"));
    let o = scl(&["demo", "no-such-demo"]);
    assert_eq!(o.status.code(), Some(2));
    let o = scl(&["verify", "--run", "/nonexistent/run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ensemble_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = scl(&[
        "--out",
        path(&run),
        "--seed",
        "5",
        "ensemble",
        "--members",
        "400",
        "--nx",
        "32",
        "--raw",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read_to_string(run.join("manifest.txt")).unwrap();
    assert!(manifest.contains("base_seed = 5"));
    assert!(manifest.contains("times = 0,0.46,0.48,0.5,0.52,0.54"));
    assert!(run.join("members/member_000399.csv").exists());
    assert_eq!(fs::read_to_string(run.join("xi.csv")).unwrap().lines().count(), 401);

    let report = dir.path().join("report.csv");
    let o = scl(&["--out", path(&report), "verify", "--run", path(&run), "--checks", "mass,side,f1"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("check,location,statistic,value,stderr,tolerance,pass\n"));
    assert!(csv.lines().skip(1).all(|l| l.starts_with("mass,") || l.starts_with("side,") || l.starts_with("f1,")));
    assert!(stdout(&o).contains("overall: PASS"));

    let again = dir.path().join("again.csv");
    let o = scl(&["--out", path(&again), "--workers", "2", "verify", "--run", path(&run), "--checks", "mass,side,f1"]);
    assert!(o.status.success());
    assert_eq!(fs::read(&report).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn closure_writes_fields_and_means() {
    let dir = tempfile::tempdir().unwrap();
    let o = scl(&[
        "--out",
        path(dir.path()),
        "closure",
        "--nx",
        "64",
        "--nv",
        "40",
        "--vbox",
        "-0.5,1.5",
        "--f0",
        "det:tanh-pair",
        "--tend",
        "0.2",
        "--store",
        "0.1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["F_000.csv", "F_001.csv", "F_002.csv", "means.csv", "monotonicity.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let means = fs::read_to_string(dir.path().join("means.csv")).unwrap();
    assert!(means.starts_with("t,x,m\n"));
    assert_eq!(means.lines().count(), 1 + 3 * 64);
    let field = fs::read_to_string(dir.path().join("F_002.csv")).unwrap();
    assert!(field.starts_with("x,v,F\n"));
    assert_eq!(field.lines().count(), 1 + 64 * 41);

    let o = scl(&["--out", path(dir.path()), "closure", "--f0", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn closure_from_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = scl(&["--out", path(&run), "ensemble", "--members", "200", "--nx", "32"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("closure");
    let from = format!("from-run:{}", path(&run));
    let o = scl(&["--out", path(&out), "closure", "--f0", &from, "--vbox", "-1.2,1.2", "--nv", "24", "--tend", "0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("means.csv")).unwrap().lines().count(), 1 + 2 * 32);
}

#[test]
fn demo_and_run_report_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = scl(&["demo", "--list"]);
    assert!(stdout(&o).lines().any(|l| l == "heat-decay"));

    let o = scl(&["--out", path(dir.path()), "demo", "heat-decay"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("overall: PASS"));
    let run_dir = fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    let report = fs::read(run_dir.join("report.csv")).unwrap();

    let again = dir.path().join("again");
    let o = scl(&["--out", path(&again), "run", "--config", path(&run_dir.join("config.txt"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rerun = fs::read_dir(&again).unwrap().next().unwrap().unwrap().path();
    assert_eq!(fs::read(rerun.join("report.csv")).unwrap(), report);

    // Closure recovery on a grid far too coarse for the 1e-2 tolerance.
    let cfg = dir.path().join("fail.txt");
    fs::write(&cfg, "name = failing\nclosure_nx = 16\nclosure_nv = 20\nchecks = closure-det\n").unwrap();
    let o = scl(&["--out", path(dir.path()), "run", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("overall: FAIL"));
}
