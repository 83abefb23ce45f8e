use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mastereq_cli::commands::{cmd_evolve, cmd_finite, cmd_spectrum, cmd_verify, load_config, CommonOptions, Outcome};
use mastereq_cli::verify::VerifyOptions;
use mastereq_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "mastereq", version, about = "Spectral analysis of rank-one detailed-balance master equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prefix outputs with a generation-time comment.
    #[arg(long)]
    stamp: bool,
}

impl Common {
    fn options(&self) -> CommonOptions {
        CommonOptions { out: self.out.clone(), stamp: self.stamp }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve for all eigenvalues and write the spectrum file.
    Spectrum(Common),
    /// Propagate an initial state and write trajectory CSVs.
    Evolve(Common),
    /// Run the invariant suite and write a pass/fail report.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Fail when the model lies outside the completeness hypotheses.
        #[arg(long)]
        strict: bool,
    },
    /// Analyse the finite model from the `[finite]` section.
    Finite(Common),
}

fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Spectrum(c) => cmd_spectrum(&load_config(&c.config)?, &c.options()),
        Command::Evolve(c) => cmd_evolve(&load_config(&c.config)?, &c.options()),
        Command::Verify { common, strict } => {
            cmd_verify(&load_config(&common.config)?, &common.options(), VerifyOptions { strict })
        }
        Command::Finite(c) => cmd_finite(&load_config(&c.config)?, &c.options()),
    }
}

fn fail(err: &CliError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            for line in &outcome.messages {
                println!("{line}");
            }
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            outcome.failure.as_ref().map_or(ExitCode::SUCCESS, fail)
        }
        Err(err) => fail(&err),
    }
}
