use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use lieccm_tools::commands::{
    cmd_export_sdpa, cmd_geodesic, cmd_simulate, cmd_synthesize, cmd_verify, Outcome,
};
use lieccm_tools::{ToolError, EXIT_INPUT, EXIT_OK};

#[derive(Parser)]
#[command(name = "lieccm", version, about = "Contraction-metric synthesis and tracking on matrix Lie groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a certificate and write it.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Certificate path; overrides `[output] certificate`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a certificate on fresh random samples.
    Verify {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 99)]
        seed: u64,
        /// Where to write the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the sampled-data tracking controller and write its trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        /// Trace path; overrides `[output] trace`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the group geodesic between two points.
    Geodesic {
        /// One of rn, o2xr, so3, se3.
        #[arg(long)]
        group: String,
        /// Comma-separated ambient coordinates.
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        #[arg(long, default_value_t = 33)]
        nodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the sampled feasibility problem in SDPA sparse format.
    ExportSdpa {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Outcome, ToolError> {
    match cli.command {
        Command::Synthesize { config, out } => cmd_synthesize(&config, out.as_deref()),
        Command::Verify {
            cert,
            samples,
            seed,
            out,
        } => cmd_verify(&cert, samples, seed, out.as_deref()),
        Command::Simulate { config, cert, out } => cmd_simulate(&config, &cert, out.as_deref()),
        Command::Geodesic {
            group,
            from,
            to,
            nodes,
            out,
        } => cmd_geodesic(&group, &from, &to, nodes, &out),
        Command::ExportSdpa { config, out } => cmd_export_sdpa(&config, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
