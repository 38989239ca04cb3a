//! The `quasimargin` command line.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{DatasetSpec, ExperimentConfig, SCHEMA_VERSION};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "quasimargin", version, about = "Gradient flow on quasi-homogeneous classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Homogeneous vs quasi-homogeneous logistic flow on two Gaussian clouds.
    Logistic(RunArgs),
    /// Robustness of trained classifiers on the two-ball problem across radii.
    TwoballsSweep(RunArgs),
    /// Cross-entropy flow on unconstrained normalized features.
    Nc(RunArgs),
    /// Scaling law and Euler identity of built-in models.
    Verify(RunArgs),
    /// Approximate KKT certificates along a flow.
    KktProbe(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Logistic(a)
            | Command::TwoballsSweep(a)
            | Command::Nc(a)
            | Command::Verify(a)
            | Command::KktProbe(a) => a,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Command::Logistic(_) => "logistic",
            Command::TwoballsSweep(_) => "twoballs_sweep",
            Command::Nc(_) => "nc",
            Command::Verify(_) => "verify",
            Command::KktProbe(_) => "kkt_probe",
        }
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Experiment manifest (JSON). Without it the experiment's defaults are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Main output file; side files share its stem. Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Exit with status 4 if an acceptance threshold is missed.
    #[arg(long)]
    pub check: bool,
}

/// Reads the manifest for `command`. A missing `experiment` field is filled
/// in from the subcommand; a different one is an error.
pub fn load_config(command: &Command) -> crate::Result<ExperimentConfig> {
    let args = command.args();
    let mut value: serde_json::Value = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?
        }
        None => serde_json::json!({ "schema_version": SCHEMA_VERSION }),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::InvalidConfig("manifest must be a JSON object".into()))?;
    match obj.get("experiment") {
        None => {
            obj.insert("experiment".into(), command.tag().into());
        }
        Some(tag) if tag == command.tag() => {}
        Some(tag) => {
            return Err(Error::InvalidConfig(format!(
                "manifest is for experiment {tag}, not {}",
                command.tag()
            )))
        }
    }
    let mut cfg = ExperimentConfig::from_json(&value.to_string())?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

/// Exit status for an error: 2 for anything wrong with the inputs, 3 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidModel(_)
        | Error::InvalidDataset(_)
        | Error::InvalidLambda(_)
        | Error::Dimension { .. }
        | Error::Io(_)
        | Error::Unsupported(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Parses `argv` and runs the command, returning the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cfg = match load_config(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let args = cli.command.args();
    let out = args.out.as_deref().or(cfg.out());
    let result = match &cfg {
        ExperimentConfig::Logistic(c) => commands::logistic(c, out),
        ExperimentConfig::TwoballsSweep(c) => commands::twoballs_sweep(c, out, args.jobs),
        ExperimentConfig::Nc(c) => commands::nc(c, out),
        ExperimentConfig::Verify(c) => commands::verify(c, out),
        ExperimentConfig::KktProbe(c) => commands::kkt_probe(c, out),
    };
    match result {
        Ok(outcome) => {
            for line in &outcome.summary {
                if out.is_some() {
                    println!("{line}");
                } else {
                    eprintln!("{line}");
                }
            }
            if args.check && !outcome.violations.is_empty() {
                for v in &outcome.violations {
                    eprintln!("check failed: {v}");
                }
                return EXIT_CHECK;
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}: {e}", cfg.name());
            exit_code(&e)
        }
    }
}
