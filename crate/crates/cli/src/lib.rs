//! The `hssnb` command-line tool: synthetic data, training, evaluation,
//! classification maps, gradient checks and window-size sweeps.

pub mod args;
pub mod commands;
pub mod config;
pub mod failure;
pub mod ppm;

use args::{Cli, Command};
use config::ExperimentConfig;
use failure::Failure;

pub fn run(cli: Cli) -> Result<(), Failure> {
    let file = cli.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let base = file.clone().unwrap_or_default();
    match &cli.command {
        Command::Synth(a) => commands::synth(a, file.as_ref()),
        Command::Train(a) => commands::train(a, base),
        Command::Eval(a) => commands::eval(a, file.as_ref()),
        Command::Map(a) => commands::map(a, file.as_ref()),
        Command::Gradcheck(a) => commands::gradcheck(a, file.as_ref()),
        Command::Sweep(a) => commands::sweep(a, base),
    }
}
