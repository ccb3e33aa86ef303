use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use haptolab::config::{parse_config, ExperimentKind};
use haptolab::experiment::{exit_code, run_experiment, summarize};
use haptolab::Error;

/// Environment variable that replaces the configured output root.
const OUTPUT_ENV: &str = "HAPTOLAB_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "haptolab", version, about = "Diffuse- and sharp-interface haptotaxis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the diffuse-interface solver.
    SimulateDiffuse(RunArgs),
    /// Run the sharp-interface level-set solver.
    SimulateSharp(RunArgs),
    /// Run both solvers and compare interfaces and fields.
    Compare(RunArgs),
    /// Check the early-time generation bounds.
    Generation(RunArgs),
    /// Compare diffuse runs at decreasing eps with the sharp limit.
    Convergence(RunArgs),
    /// Tabulate the standing-wave profile.
    Profile(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the configuration and the environment.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 4 if any acceptance check fails.
    #[arg(long)]
    assert: bool,
}

impl Command {
    fn split(&self) -> (ExperimentKind, &RunArgs) {
        match self {
            Command::SimulateDiffuse(a) => (ExperimentKind::Diffuse, a),
            Command::SimulateSharp(a) => (ExperimentKind::Sharp, a),
            Command::Compare(a) => (ExperimentKind::Compare, a),
            Command::Generation(a) => (ExperimentKind::Generation, a),
            Command::Convergence(a) => (ExperimentKind::Convergence, a),
            Command::Profile(a) => (ExperimentKind::Profile, a),
        }
    }
}

fn output_dir(flag: Option<&Path>, configured: &Path) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root),
        _ => configured.to_path_buf(),
    }
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<bool, Error> {
    let cfg = parse_config(&args.config)?;
    if cfg.kind != kind {
        return Err(Error::Config(format!(
            "config describes a `{}` experiment, not `{}`",
            cfg.kind.name(),
            kind.name()
        )));
    }
    let out = output_dir(args.out.as_deref(), &cfg.output_dir);
    let outcome = run_experiment(&cfg, &out)?;
    let mut stdout = std::io::stdout().lock();
    let _ = write!(stdout, "{}", summarize(&outcome.checks));
    let _ = writeln!(stdout, "wrote {} files to {}", outcome.files.len() + 1, outcome.dir.display());
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match run(kind, args) {
        Ok(passed) if passed || !args.assert => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("acceptance check failed");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
