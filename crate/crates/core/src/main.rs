use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use railgnss::cli::{run, Command, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "railgnss", version, about = "Railway GNSS local-error extraction, classification and simulation")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Pseudorange residuals from observations, navigation data and truth.
    Extract,
    /// Per-epoch signal features with labels.
    Featurize,
    /// Train the environment classifier.
    Train,
    /// Confusion matrix and permutation importance on the held-out split.
    Evaluate,
    /// Robust Gaussian error models per environment.
    FitErrors,
    /// Error stream for a signal simulator.
    Simulate,
    /// Synthetic journey with known errors.
    Synth,
}

impl From<&Cmd> for Command {
    fn from(c: &Cmd) -> Self {
        match c {
            Cmd::Extract => Command::Extract,
            Cmd::Featurize => Command::Featurize,
            Cmd::Train => Command::Train,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::FitErrors => Command::FitErrors,
            Cmd::Simulate => Command::Simulate,
            Cmd::Synth => Command::Synth,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = (|| {
        let mut cfg = match &cli.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        run(Command::from(&cli.command), &cfg, &cli.out)
    })();
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
