//! Command-line front end: argument parsing, commands and the session
//! server behind `evobot serve`.

pub mod args;
pub mod commands;
pub mod error;
pub mod server;

use std::io::Write;

pub use args::{Cli, Command};
pub use error::CliError;

pub fn run(cli: Cli, out: &mut impl Write) -> Result<(), CliError> {
    use commands::*;
    match cli.command {
        Command::Parse { file } => cmd_parse(&file, out),
        Command::Evolve { common, mode, checkpoint } => cmd_evolve(&common, mode, checkpoint.as_deref(), out),
        Command::Simulate { common, controller, start, failure, severity, onset, failure_seed, full_length } => {
            cmd_simulate(
                &common,
                controller.as_deref(),
                start,
                failure.as_deref(),
                severity,
                onset,
                failure_seed,
                full_length,
                out,
            )
        }
        Command::Diagnose { common, controller, traces } => cmd_diagnose(&common, &controller, &traces, out),
        Command::Experiment { common, plot_data } => cmd_experiment(&common, plot_data, out),
        Command::Serve { common, host, port, timeout_secs } => cmd_serve(&common, &host, port, timeout_secs, out),
    }
}
