use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fgf-chaos"));
    cmd.args(args).env_remove("FGF_SEED").env_remove("FGF_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn entry<'a>(r: &'a Value, name: &str) -> &'a Value {
    r["entries"].as_array().unwrap().iter().find(|e| e["name"] == name).unwrap_or_else(|| panic!("no entry {name}"))
}

#[test]
fn constants_check_reports_the_limit() {
    let out = run(&["constants-check", "--d", "1"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(entry(&r, "C_{0,0} limit: C(1e-4, 1e-4) [fbf]")["verdict"], "pass");
    assert_eq!(r["versions"]["csv-schema"], "1");
}

#[test]
fn chaos_at_gamma_zero_is_lebesgue() {
    let out = run(&["chaos", "--gamma", "0", "--h-ladder", "0.2,0.1", "--replicates", "40"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    for h in ["0.2", "0.1"] {
        let e = entry(&r, &format!("H={h} max |M(A) - |A|| at gamma=0"));
        assert!(e["value"].as_f64().unwrap() < 1e-12);
        assert_eq!(entry(&r, &format!("H={h} mean mass M(A)"))["verdict"], "pass");
    }
}

#[test]
fn negative_gamma_is_a_field_error() {
    let out = run(&["chaos", "--gamma=-1"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma: "));
}

#[test]
fn config_file_is_strict_and_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"gama": 1}"#).unwrap();
    let out = run(&["chaos", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));

    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"gamma": -3, "dim": 2, "seed": 11}"#).unwrap();
    let out = run(&["gamma-star", "--config", good.to_str().unwrap(), "--d", "3"], &[]);
    // gamma in the file is still validated even though gamma-star ignores it
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&good, r#"{"dim": 2, "seed": 11}"#).unwrap();
    let out = run(&["gamma-star", "--config", good.to_str().unwrap(), "--d", "3"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["config"]["dim"], 3);
    assert_eq!(r["config"]["seed"], 11);
}

#[test]
fn failed_runs_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("x.csv");
    // the grid reaches outside the kernel domain [1/64, 1]
    let out = run(
        &["sample", "--field", "x", "--grid", "0:1:8@nodes", "--replicates", "4", "--out", out_path.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside the kernel domain"));
    assert!(!out_path.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

    std::fs::write(&out_path, "previous").unwrap();
    run(&["sample", "--field", "x", "--grid", "0:1:8@nodes", "--out", out_path.to_str().unwrap()], &[]);
    assert_eq!(std::fs::read_to_string(&out_path).unwrap(), "previous");
}

fn sample_csv(path: &Path, extra: &[&str], env: &[(&str, &str)]) -> Vec<u8> {
    let mut args = vec!["sample", "--field", "b", "--grid", "0.1:1:8", "--replicates", "5", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    assert_eq!(run(&args, env).status.code(), Some(0));
    std::fs::read(path).unwrap()
}

#[test]
fn sample_csv_layout_and_seeding() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b.csv");
    let a = sample_csv(&p, &[], &[("FGF_SEED", "5")]);
    let text = String::from_utf8(a.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# fgf-chaos v0.1.0 schema=1");
    assert_eq!(lines.next().unwrap(), "replicate,hurst,x,value");
    assert_eq!(lines.count(), 5 * 8);
    assert_eq!(sample_csv(&p, &["--seed", "5"], &[]), a);
    assert_ne!(sample_csv(&p, &["--seed", "6"], &[("FGF_SEED", "5")]), a);
}

#[test]
fn failing_verdict_exits_one() {
    // a small α leaves bad points, so the good-mass fraction misses a threshold of 1
    let out = run(
        &[
            "roughvol",
            "--hurst-ladder",
            "0.1",
            "--cells",
            "32",
            "--replicates",
            "50",
            "--support-cells",
            "32",
            "--support-replicates",
            "200",
            "--alpha-mult",
            "0.2",
            "--threshold",
            "1",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(r["entries"].as_array().unwrap().iter().any(|e| e["verdict"] == "fail"));
}

#[test]
fn covariance_rows() {
    let out = run(&["covariance", "--x", "0.25", "--y", "0.5", "--y", "0.25", "--hursts", "0.1"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    // the limit kernel is undefined on the diagonal
    assert!(rows[1].ends_with(",,"));
}
