use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use speciation::commands::{self, RunError};
use speciation::output::{write_csv, Fingerprint};
use speciation::{ConfigError, ExperimentConfig, RayonExecutor, Table};

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Entropy profiles, speciation windows and posterior tracking for Gaussian
/// mixture diffusions.
#[derive(Debug, Parser)]
#[command(name = "speciation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML). Optional for `validate`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted and the config has no output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `estimator.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Entropy and entropy production on the configured grid.
    Profile,
    /// Transition window for each dimension in `sweep.d_list`.
    SpeciationSweep,
    /// Online-tracked partitioned entropy along reverse trajectories.
    Track,
    /// Entropy production with and without guidance.
    GuidanceDistortion,
    /// Runs the oracle suite and writes a JSON report.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Profile => "profile",
            Command::SpeciationSweep => "speciation-sweep",
            Command::Track => "track",
            Command::GuidanceDistortion => "guidance-distortion",
            Command::Validate => "validate",
        }
    }
}

enum Failure {
    Config(ConfigError),
    Other(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Config(c),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(format!("write failed: {e}"))
    }
}

fn open_output(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let cfg = match &cli.config {
        Some(p) => Some(
            ExperimentConfig::load(p)
                .and_then(|c| c.resolve(cli.seed))
                .map_err(Failure::Config)?,
        ),
        None => None,
    };
    let exec =
        RayonExecutor::new(cli.threads).map_err(|e| Failure::Other(format!("thread pool: {e}")))?;

    if let Command::Validate = cli.command {
        let seed = cli
            .seed
            .or(cfg.as_ref().map(|c| c.estimator.seed))
            .unwrap_or(0);
        let scale = cfg.as_ref().map_or(1.0, |c| c.validate.tolerance_scale);
        let report = speciation::validate::run(seed, scale, &exec)?;
        let out_path = cli
            .out
            .clone()
            .or_else(|| cfg.as_ref().and_then(|c| c.output.path.clone()));
        let mut value = serde_json::to_value(&report).expect("report serializes");
        if let Some(c) = &cfg {
            value["config_sha256"] = Fingerprint::new("validate", c).sha256.into();
        }
        let mut out = open_output(out_path.as_ref())?;
        serde_json::to_writer_pretty(&mut out, &value)
            .map_err(|e| Failure::Other(e.to_string()))?;
        writeln!(out)?;
        out.flush()?;
        for c in &report.checks {
            eprintln!(
                "{} {} measured={} tolerance={}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.tolerance
            );
        }
        return Ok(report.passed);
    }

    let cfg = cfg.ok_or_else(|| {
        Failure::Config(ConfigError::new(
            "config",
            format!("`{}` needs --config", cli.command.name()),
        ))
    })?;
    let table: Table = match cli.command {
        Command::Profile => commands::profile(&cfg, &exec)?,
        Command::SpeciationSweep => commands::speciation_sweep(&cfg, &exec)?,
        Command::Track => commands::track(&cfg, &exec)?,
        Command::GuidanceDistortion => commands::guidance_distortion(&cfg, &exec)?,
        Command::Validate => unreachable!(),
    };
    let fp = Fingerprint::new(cli.command.name(), &cfg);
    let out_path = cli.out.clone().or_else(|| cfg.output.path.clone());
    let mut out = open_output(out_path.as_ref())?;
    write_csv(&mut out, &fp, &table)?;
    out.flush()?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(Failure::Config(e)) => {
            eprintln!("error: config error at {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
