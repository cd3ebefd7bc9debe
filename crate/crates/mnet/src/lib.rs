//! File formats, checkpoints, experiment drivers and the command-line runner
//! for the mesh segmentation engine in `mnet-core`.

pub mod arch;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod format;
pub mod svg;
pub mod volume_io;

pub use arch::ArchChoice;
pub use config::{Overrides, RunConfig};
pub use error::{Error, Result};

use format::sig6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Phantom,
    Train,
    Evaluate,
    InspectArch,
    Gradcheck,
    ExperimentAnisotropy,
}

/// What a command printed and the exit code it asks for.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { stdout, exit_code: 0 }
    }
}

/// Runs `command` on a pool of `config.threads` workers (rayon's default
/// when unset).
pub fn run(command: Command, config: &RunConfig) -> Result<Outcome> {
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(command, config)),
        None => dispatch(command, config),
    }
}

fn dispatch(command: Command, config: &RunConfig) -> Result<Outcome> {
    let out = config.output_dir.display();
    match command {
        Command::Phantom => {
            let m = commands::cmd_phantom(config)?;
            Ok(Outcome::ok(format!("wrote {} cases to {out}\n", m.cases.len())))
        }
        Command::Train => {
            let r = commands::cmd_train(config)?;
            let last = r.rows.last().map_or(String::new(), |row| {
                format!(", final loss {} (main {})", sig6(row.loss_total), sig6(row.loss_main))
            });
            Ok(Outcome::ok(format!("trained {} epochs{last}; outputs in {out}\n", r.rows.len())))
        }
        Command::Evaluate => Ok(Outcome::ok(commands::cmd_evaluate(config)?.to_csv())),
        Command::InspectArch => Ok(Outcome::ok(commands::cmd_inspect_arch(config)?.render(config.inspect.format))),
        Command::Gradcheck => {
            let r = commands::cmd_gradcheck(config)?;
            Ok(Outcome { stdout: r.to_text(), exit_code: if r.passed() { 0 } else { 2 } })
        }
        Command::ExperimentAnisotropy => {
            let rows = commands::cmd_experiment_anisotropy(config)?;
            Ok(Outcome::ok(format!("{} sweep points written to {out}\n", rows.len())))
        }
    }
}
