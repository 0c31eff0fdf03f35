use std::process::{Command, Output};

fn qsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsa")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn upe_prints_csv_rows() {
    let o = qsa(&["upe", "--reps", "3", "--format", "csv", "--theta", "0.25", "--t", "8"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.contains(",0.25,")));
}

#[test]
fn csv_output_is_reproducible() {
    let args = ["mean", "--reps", "2", "--format", "csv", "--values", "0,1,3", "--probs", "0.5,0.3,0.2", "--seed", "4"];
    assert_eq!(stdout(&qsa(&args)), stdout(&qsa(&args)));
}

#[test]
fn out_directory_receives_the_report() {
    let dir = std::env::temp_dir().join(format!("qsa-cli-out-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let o = qsa(&["schedule", "--model", "matchings:triangle", "--eps", "0.2", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("schedule.json")).unwrap()).unwrap();
    assert_eq!(json["command"], "schedule");
    assert!(json["schedule"]["betas"].as_array().unwrap().len() >= 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = std::env::temp_dir().join(format!("qsa-cli-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.toml");
    std::fs::write(&path, "command = \"ae\"\n[run]\nreps = 5\nformat = \"csv\"\n[inputs]\np = 0.3\n").unwrap();
    let o = qsa(&["ae", "--config", path.to_str().unwrap(), "--reps", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn bad_inputs_exit_with_two() {
    assert_eq!(qsa(&["partition", "--model", "ising:/missing/graph.edges"]).status.code(), Some(2));
    assert_eq!(qsa(&["partition", "--model", "nonsense:edge"]).status.code(), Some(2));
    assert_eq!(qsa(&["mean", "--eps", "2"]).status.code(), Some(2));
    assert_eq!(qsa(&["mean", "--config", "/missing/config.toml"]).status.code(), Some(2));
    assert_eq!(qsa(&["upe", "--theta", "0.8"]).status.code(), Some(2));
}
