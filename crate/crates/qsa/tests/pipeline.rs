use qsa::pipeline::*;
use qsa::Error;
use std::path::PathBuf;

fn scratch_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("qsa-pipeline-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn partition_config(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(Command::Partition);
    c.run.seed = seed;
    c.run.reps = 4;
    c.run.eps = 0.25;
    c.model.spec = Some("independent-sets:P3".into());
    c
}

#[test]
fn same_seed_gives_byte_identical_csv() {
    let a = to_csv(&run_experiment(&partition_config(7)).unwrap()).unwrap();
    let b = to_csv(&run_experiment(&partition_config(7)).unwrap()).unwrap();
    let c = to_csv(&run_experiment(&partition_config(8)).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 5);
    assert!(a.starts_with("seed,estimate,truth,rel_error,reflections,walk_steps,controlled_ops,restored,stage_diagnostics"));
}

#[test]
fn json_report_carries_schema_and_config() {
    let report = run_experiment(&partition_config(3)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&to_json(&report).unwrap()).unwrap();
    assert_eq!(v["schema_version"], SCHEMA_VERSION);
    assert_eq!(v["command"], "partition");
    assert_eq!(v["config"]["model"]["spec"], "independent-sets:P3");
    assert_eq!(v["runs"].as_array().unwrap().len(), 4);
    assert!((v["truth"].as_f64().unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn toml_config_round_trips() {
    let dir = scratch_dir("toml");
    let path = dir.join("exp.toml");
    std::fs::write(
        &path,
        r#"
command = "schedule"
[run]
seed = 9
eps = 0.2
format = "csv"
[model]
spec = "ising:edge"
target_beta = "0.6931"
b = 3.0
"#,
    )
    .unwrap();
    let c = ExperimentConfig::from_toml_file(&path).unwrap();
    assert_eq!(c.command, Command::Schedule);
    assert_eq!(c.run.seed, 9);
    assert_eq!(c.run.format, OutputFormat::Csv);
    assert_eq!(c.model.b, 3.0);
    assert_eq!(c.estimator.t, 8.0);
    let report = run_experiment(&c).unwrap();
    let csv = to_csv(&report).unwrap();
    assert!(csv.starts_with("step,beta_from,beta_to,chebyshev,fidelity"));
    let written = write_report(&report, &dir, OutputFormat::Csv).unwrap();
    assert_eq!(written, dir.join("schedule.csv"));
    assert_eq!(std::fs::read_to_string(written).unwrap(), csv);
}

#[test]
fn config_errors_are_reported() {
    let dir = scratch_dir("bad");
    let path = dir.join("bad.toml");
    std::fs::write(&path, "command = \"mean\"\n[run]\nsede = 3\n").unwrap();
    assert!(matches!(ExperimentConfig::from_toml_file(&path), Err(Error::Config { .. })));
    assert!(matches!(ExperimentConfig::from_toml_file(&dir.join("absent.toml")), Err(Error::Io { .. })));

    let mut c = ExperimentConfig::new(Command::Mean);
    c.run.eps = 1.5;
    assert!(matches!(run_experiment(&c), Err(Error::Config { .. })));
    let mut c = ExperimentConfig::new(Command::Partition);
    c.model.spec = None;
    assert!(matches!(run_experiment(&c), Err(Error::Config { .. })));
    let mut c = ExperimentConfig::new(Command::Partition);
    c.model.target_beta = Some("warm".into());
    assert!(matches!(run_experiment(&c), Err(Error::Config { .. })));
}

#[test]
fn missing_model_file_is_an_io_error() {
    let mut c = ExperimentConfig::new(Command::Partition);
    c.model.spec = Some("matchings:/definitely/not/here.edges".into());
    assert!(matches!(run_experiment(&c), Err(Error::Io { .. })));
}

#[test]
fn beta_parsing() {
    assert_eq!(parse_beta("inf"), Some(qsa::gibbs::Beta::Infinite));
    assert_eq!(parse_beta(" 1.5 "), Some(qsa::gibbs::Beta::Finite(1.5)));
    assert_eq!(parse_beta("nan"), None);
}

#[test]
fn classical_baseline_is_accurate() {
    let mut c = partition_config(5);
    c.estimator.classical = true;
    c.run.reps = 10;
    let report = run_experiment(&c).unwrap();
    assert!(report.runs.iter().all(|r| r.rel_error < 0.25));
    assert!(report.reports.iter().all(|r| r.ledger.samples > 0));
}

#[test]
fn synthetic_product_runs_from_config() {
    let mut c = ExperimentConfig::new(Command::Product);
    c.inputs.stages = 2;
    c.run.reps = 3;
    let report = run_experiment(&c).unwrap();
    assert_eq!(report.runs.len(), 3);
    assert!(report.reports.iter().all(|r| r.stages.len() == 2));
}
