use clap::{Args, Parser, Subcommand};
use qsa::pipeline::{run_experiment, to_csv, to_json, write_report, Command, ExperimentConfig, OutputFormat};
use qsa::suite;
use qsa::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulator and verification harness for nondestructive unbiased
/// estimators and partition-function estimation.
#[derive(Parser)]
#[command(name = "qsa", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Unbiased phase estimation on a fixed phase.
    Upe(Common),
    /// Nondestructive amplitude estimation (or the unbiased variant).
    Ae(Common),
    /// Unbiased mean estimation of a finite table.
    Mean(Common),
    /// Median estimation of a finite table.
    Median(Common),
    /// Product estimation on the synthetic stage suite.
    Product(Common),
    /// Cooling schedule for a Gibbs model.
    Schedule(Common),
    /// Partition-function estimation for a Gibbs model.
    Partition(Common),
    /// Run every acceptance criterion.
    Suite(Common),
}

#[derive(Args, Default)]
struct Common {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Directory for the report; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// `family:graph[:k]`, graph being a built-in name or an edge-list file.
    #[arg(long)]
    model: Option<String>,
    /// Target inverse temperature, a number or `inf`.
    #[arg(long)]
    beta: Option<String>,
    /// Schedule bound B.
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    walk_constant: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Perturb every converted oracle by its full error allowance.
    #[arg(long)]
    adversarial_oracles: bool,
    #[arg(long)]
    averaging_constant_scale: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Comma-separated outcomes.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    /// Comma-separated probabilities matching --values.
    #[arg(long, value_delimiter = ',')]
    probs: Option<Vec<f64>>,
    /// Number of synthetic product stages.
    #[arg(long)]
    stages: Option<usize>,
    /// `ae`: run the unbiased estimator.
    #[arg(long)]
    unbiased: bool,
    /// `partition`: run the classical baseline.
    #[arg(long)]
    classical: bool,
}

fn build_config(command: Command, c: Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::from_toml_file(path)?,
        None => ExperimentConfig::new(command),
    };
    cfg.command = command;
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(cfg.run.seed, c.seed);
    set!(cfg.run.reps, c.reps);
    set!(cfg.run.eps, c.eps);
    set!(cfg.run.format, c.format);
    set!(cfg.model.b, c.b);
    set!(cfg.model.walk_constant, c.walk_constant);
    set!(cfg.estimator.t, c.t);
    set!(cfg.estimator.eta, c.eta);
    set!(cfg.estimator.averaging_constant_scale, c.averaging_constant_scale);
    set!(cfg.inputs.theta, c.theta);
    set!(cfg.inputs.p, c.p);
    set!(cfg.inputs.values, c.values);
    set!(cfg.inputs.probs, c.probs);
    set!(cfg.inputs.stages, c.stages);
    if c.out.is_some() {
        cfg.run.out = c.out;
    }
    if c.model.is_some() {
        cfg.model.spec = c.model;
    }
    if c.beta.is_some() {
        cfg.model.target_beta = c.beta;
    }
    cfg.estimator.adversarial_oracles |= c.adversarial_oracles;
    cfg.estimator.unbiased |= c.unbiased;
    cfg.estimator.classical |= c.classical;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Model(_) | Error::Io { .. } | Error::Precondition(_) => 2,
        _ => 1,
    }
}

fn run_suite(cfg: &ExperimentConfig, seed_given: bool) -> Result<bool, Error> {
    let seed = if seed_given { cfg.run.seed } else { suite::DEFAULT_SEED };
    let mut all = true;
    let mut text = String::new();
    for (id, _, _) in suite::CRITERIA {
        let r = suite::run_criterion(id, seed).expect("known criterion");
        println!("{}", r.line());
        text.push_str(&r.line());
        text.push('\n');
        all &= r.passed;
    }
    if let Some(dir) = &cfg.run.out {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })?;
        let path = dir.join("suite.txt");
        std::fs::write(&path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Sub::Upe(c) => (Command::Upe, c),
        Sub::Ae(c) => (Command::Ae, c),
        Sub::Mean(c) => (Command::Mean, c),
        Sub::Median(c) => (Command::Median, c),
        Sub::Product(c) => (Command::Product, c),
        Sub::Schedule(c) => (Command::Schedule, c),
        Sub::Partition(c) => (Command::Partition, c),
        Sub::Suite(c) => (Command::Suite, c),
    };
    let seed_given = common.seed.is_some();
    let cfg = match build_config(command, common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    if command == Command::Suite {
        return match run_suite(&cfg, seed_given) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        };
    }
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let written = match &cfg.run.out {
        Some(dir) => write_report(&report, dir, cfg.run.format).map(|p| eprintln!("wrote {}", p.display())),
        None => match cfg.run.format {
            OutputFormat::Json => to_json(&report),
            OutputFormat::Csv => to_csv(&report),
        }
        .map(|s| print!("{s}")),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    if report.success {
        ExitCode::SUCCESS
    } else {
        eprintln!("success criterion not met");
        ExitCode::from(1)
    }
}
