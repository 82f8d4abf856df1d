use std::path::PathBuf;
use std::process::{Command, Output};

fn case14() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/case14.m")
}

fn dpps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpps")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_reports_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("case14.json");
    let o = dpps(&["solve", "--case", case14().to_str().unwrap(), "--json", json.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("buses 14"), "{text}");
    assert!(text.contains("Z* = 8075.1"), "{text}");
    assert!(json.exists());
}

#[test]
fn run_then_attack() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let case = case14();
    let o = dpps(&[
        "run",
        "--case",
        case.to_str().unwrap(),
        "--zones",
        "1-5;7-10;6,11-14",
        "--epsilon",
        "1",
        "--iters",
        "6",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("1 per iteration, 6 cumulative"), "{}", stdout(&o));
    for f in ["trace.csv", "trace.json", "convergence.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }

    let att = dir.path().join("attack");
    let o = dpps(&[
        "attack",
        "--trace",
        out.to_str().unwrap(),
        "--zone",
        "1",
        "--bus",
        "4",
        "--T",
        "1,3",
        "--out",
        att.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("pooled CoS"));
    let rows = std::fs::read_to_string(att.join("attack.csv")).unwrap();
    // header, six singleton windows, two of length three
    assert_eq!(rows.lines().count(), 1 + 6 + 2);

    let o = dpps(&[
        "attack",
        "--trace",
        out.to_str().unwrap(),
        "--zone",
        "2",
        "--bus",
        "4",
        "--out",
        att.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}

#[test]
fn admm_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("admm");
    let o = dpps(&[
        "admm",
        "--case",
        case14().to_str().unwrap(),
        "--zones",
        "3",
        "--iters",
        "4",
        "--rho",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("inf (non-private)"));
    assert!(out.join("trace.json").exists());
}

#[test]
fn invalid_arguments_fail() {
    let case = case14();
    let case = case.to_str().unwrap();
    for args in [
        vec!["run", "--case", case, "--epsilon", "zero", "--out", "x"],
        vec!["run", "--case", case, "--epsilon", "0", "--out", "x"],
        vec!["run", "--case", case, "--beta", "1.5", "--out", "x"],
        vec!["run", "--case", case, "--rule", "4", "--out", "x"],
        vec!["run", "--case", "/nonexistent.m", "--out", "x"],
        vec!["sweep", "--config", "/nonexistent.toml"],
    ] {
        let o = dpps(&args);
        assert!(!o.status.success(), "accepted {args:?}");
    }
}

#[test]
fn sweep_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        format!(
            "case = \"{}\"\nalgorithm = \"dp-ps\"\nepsilons = [\"inf\"]\niterations = 3\nseeds = [0]\noutput = \"out\"\n\n[partition]\nk = 3\nseed = 0\n",
            case14().display()
        ),
    )
    .unwrap();
    let o = dpps(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // relative output paths resolve next to the config
    assert!(dir.path().join("out/manifest.json").exists());
}
