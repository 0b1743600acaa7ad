use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use schatten_ot_cli::{configure_threads, Command, ExperimentConfig, Provenance, RunError};

#[derive(Parser)]
#[command(name = "schatten-ot", version, about = "Schatten-p regularized optimal transport experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Quality metrics across a lambda grid.
    Sweep(Flags),
    /// Per-iteration excess objective against a reference optimum.
    Convergence(Flags),
    /// Optimality certificates for solver output or the planted coupling.
    Certify(Flags),
    /// Closed-form Gaussian solutions across a lambda grid.
    Gaussian(Flags),
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces `instance.seeds` with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn run(command: Command, flags: Flags) -> Result<PathBuf, RunError> {
    let (mut cfg, bytes) = ExperimentConfig::load(&flags.config, command)?;
    if let Some(seed) = flags.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = flags.out {
        cfg.output_dir = out;
    }
    if let Some(t) = flags.threads {
        if t == 0 {
            return Err(RunError::Config(schatten_ot_cli::ConfigError::Invalid(vec![schatten_ot_cli::FieldError {
                path: "--threads".into(),
                message: "must be at least 1".into(),
            }])));
        }
        if let Err(e) = configure_threads(t) {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let prov = Provenance::new(&bytes, cfg.seeds());
    match command {
        Command::Sweep => schatten_ot_cli::run_sweep(&cfg, &prov),
        Command::Convergence => schatten_ot_cli::run_convergence(&cfg, &prov),
        Command::Certify => schatten_ot_cli::run_certify(&cfg, &prov),
        Command::Gaussian => schatten_ot_cli::run_gaussian(&cfg, &prov),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Cmd::Sweep(f) => (Command::Sweep, f),
        Cmd::Convergence(f) => (Command::Convergence, f),
        Cmd::Certify(f) => (Command::Certify, f),
        Cmd::Gaussian(f) => (Command::Gaussian, f),
    };
    match run(command, flags) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
