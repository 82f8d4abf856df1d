mod common;

use dpps_core::experiment::{
    run_experiment, AlgorithmName, Epsilon, ExperimentConfig, PartitionSpec, DEE_CSV_HEADER, ITERATIONS_CSV_HEADER,
    SUMMARY_CSV_HEADER,
};

fn config(out: &std::path::Path) -> String {
    format!(
        r#"
case = "{case}"
algorithm = "dp-ps"
epsilons = ["inf", 1.0]
iterations = 12
seeds = [0, 1]
output = "{out}"

[partition]
zones = [[1, 2, 3, 4, 5], [7, 8, 9, 10], [6, 11, 12, 13, 14]]

[attack]
zone = 1
bus = 4
windows = [1, 5]
"#,
        case = common::data_path("case14.m").display(),
        out = out.display()
    )
}

#[test]
fn toml_config_parses_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(&config(dir.path())).unwrap();
    assert_eq!(cfg.algorithm, AlgorithmName::DpPs);
    assert_eq!(cfg.epsilons, vec![Epsilon(f64::INFINITY), Epsilon(1.0)]);
    assert_eq!(cfg.beta, 0.05);
    assert_eq!(cfg.rule, 3);
    assert_eq!(cfg.chi, 1.5);
    assert!(matches!(cfg.partition, PartitionSpec::Lists { .. }));
    let attack = cfg.attack.unwrap();
    assert_eq!((attack.zone, attack.bus, attack.gamma, attack.gbar), (1, 4, 1e3, 1.0));

    let greedy = config(dir.path()).replace(
        "[partition]\nzones = [[1, 2, 3, 4, 5], [7, 8, 9, 10], [6, 11, 12, 13, 14]]",
        "[partition]\nk = 3\nseed = 2",
    );
    let cfg = ExperimentConfig::from_toml(&greedy).unwrap();
    assert_eq!(cfg.partition, PartitionSpec::Greedy { k: 3, seed: 2 });
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let base = config(dir.path());
    for bad in [
        base.replace(r#"epsilons = ["inf", 1.0]"#, "epsilons = []"),
        base.replace(r#"epsilons = ["inf", 1.0]"#, "epsilons = [-1.0]"),
        base.replace("seeds = [0, 1]", "seeds = []"),
        base.replace("iterations = 12", "iterations = 0"),
        base.replace("algorithm = \"dp-ps\"", "algorithm = \"dp-ps\"\nchi = 3.0"),
        base.replace("algorithm = \"dp-ps\"", "algorithm = \"sgd\""),
    ] {
        assert!(ExperimentConfig::from_toml(&bad).is_err(), "accepted:\n{bad}");
    }
}

#[test]
fn sweep_writes_tables_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(&config(&dir.path().join("a"))).unwrap();
    let m = run_experiment(&cfg).unwrap();
    assert_eq!(m.cells.len(), 4);
    assert_eq!(m.failed(), 0);
    assert!((m.z_star - 8075.1).abs() < 10.0);
    let out = &cfg.output;
    for f in ["iterations_to_gap.csv", "attack_dee.csv", "summary.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let header = |f: &str| std::fs::read_to_string(out.join(f)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header("iterations_to_gap.csv"), ITERATIONS_CSV_HEADER);
    assert_eq!(header("attack_dee.csv"), DEE_CSV_HEADER);
    assert_eq!(header("summary.csv"), SUMMARY_CSV_HEADER);
    for c in &m.cells {
        let cell = out.join(&c.dir);
        for f in ["trace.csv", "convergence.csv", "attack.csv"] {
            assert!(cell.join(f).exists(), "{}/{f} missing", c.dir);
        }
        assert_eq!(c.attack.len(), 2);
    }
    // two ε̄ levels, one summary row each
    assert_eq!(std::fs::read_to_string(out.join("summary.csv")).unwrap().lines().count(), 3);

    let again = ExperimentConfig::from_toml(&config(&dir.path().join("b"))).unwrap();
    let m2 = run_experiment(&again).unwrap();
    for (a, b) in m.cells.iter().zip(&m2.cells) {
        assert_eq!(a.final_gap, b.final_gap);
        assert_eq!(a.attack, b.attack);
    }
    let table = |root: &std::path::Path| std::fs::read_to_string(root.join("attack_dee.csv")).unwrap();
    assert_eq!(table(out), table(&again.output));
}

#[test]
fn shipped_config_loads() {
    let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/case14_tradeoff.toml");
    let cfg = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!(cfg.epsilons.len(), 6);
    assert!(cfg.case.exists());
}
