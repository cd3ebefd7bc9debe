use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mnet::{run, Command, Overrides, RunConfig};
use mnet_core::graph::Precision;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Phantom,
    Train,
    Evaluate,
    InspectArch,
    Gradcheck,
    ExperimentAnisotropy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

/// Mesh network for anisotropic volumetric segmentation.
#[derive(Debug, Parser)]
#[command(name = "mnet", version)]
struct Cli {
    command: Cmd,
    /// JSON run document; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `mesh` or `subnet:<moves>`, e.g. `subnet:RRRRDDDD`.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let command = match cli.command {
        Cmd::Phantom => Command::Phantom,
        Cmd::Train => Command::Train,
        Cmd::Evaluate => Command::Evaluate,
        Cmd::InspectArch => Command::InspectArch,
        Cmd::Gradcheck => Command::Gradcheck,
        Cmd::ExperimentAnisotropy => Command::ExperimentAnisotropy,
    };
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        arch: cli.arch,
        precision: cli.precision.map(|p| match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }),
        threads: cli.threads,
    };
    let result = cli
        .config
        .as_deref()
        .map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
        .and_then(|mut config| {
            config.apply(&overrides);
            run(command, &config)
        });
    match result {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("mnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
