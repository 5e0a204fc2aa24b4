use std::path::Path;
use std::process::{Command, Output};

fn mmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmlab")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SWEEP: &str = "seed = 4\nsweep.L_box = 8\nsweep.L = 1\nsweep.n_samples = 16\nsweep.h = -0.5, 0.5, 1.5\n";

#[test]
fn sweep_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.conf", SWEEP);
    let mut outputs = Vec::new();
    for workers in ["1", "2", "4"] {
        let out = dir.path().join(format!("sweep{workers}.csv"));
        let o = mmlab(&["sweep", "--config", &cfg, "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let meta = std::fs::read(format!("{}.meta", out.display())).unwrap();
        outputs.push((std::fs::read(&out).unwrap(), meta));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    let csv = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(csv.starts_with("d,L_box,L,h,n_samples,n_success,p_hat,ci_lo,ci_hi,seed\n"));
    assert_eq!(csv.lines().count(), 4);
    let meta = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert!(meta.contains("seed=4\n") && meta.contains("streams=0..16\n"));
}

#[test]
fn seed_flag_changes_output_and_stdout_is_default() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.conf", SWEEP);
    let a = mmlab(&["sweep", "--config", &cfg]);
    let b = mmlab(&["sweep", "--config", &cfg, "--seed", "5"]);
    assert!(a.status.success() && b.status.success());
    let a = String::from_utf8(a.stdout).unwrap();
    let b = String::from_utf8(b.stdout).unwrap();
    assert!(a.lines().skip(1).all(|l| l.ends_with(",4")));
    assert!(b.lines().skip(1).all(|l| l.ends_with(",5")));
}

#[test]
fn certify_eps_zero_reports_h_hat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.conf", "certify.eps = 0\ncertify.h_hat = 19.5\ncertify.p1 = 1e-12\n");
    let o = mmlab(&["certify", "--config", &cfg]);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "conditional");
    assert_eq!(row[10], "19.5");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_line = write(dir.path(), "a.conf", "sweep.L_box 8\n");
    let bad_value = write(dir.path(), "b.conf", "sweep.L_box = eight\n");
    let bad_geometry = write(dir.path(), "c.conf", "sweep.L_box = 8\nsweep.L = 3\n");
    for cfg in [&bad_line, &bad_value, &bad_geometry] {
        assert_eq!(mmlab(&["sweep", "--config", cfg]).status.code(), Some(2));
    }
    assert_eq!(mmlab(&["sweep", "--config", "/nonexistent/x.conf"]).status.code(), Some(2));
    assert_eq!(mmlab(&["sweep", "--workers", "0"]).status.code(), Some(2));
    assert_eq!(mmlab(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn resource_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let big = write(dir.path(), "e.conf", "sample.geometry = exact\nsample.radius = 4\n");
    assert_eq!(mmlab(&["sample", "--config", &big]).status.code(), Some(4));
    let cfg = write(dir.path(), "s.conf", SWEEP);
    let o = mmlab(&["sweep", "--config", &cfg, "--out", "/nonexistent/dir/out.csv"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn numeric_failures_exit_with_three() {
    // An unreachable quadrature tolerance.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.conf", "green.radius = 0\ngreen.n_max = 100\ngreen.tol = 1e-300\n");
    assert_eq!(mmlab(&["green", "--config", &cfg]).status.code(), Some(3));
}
