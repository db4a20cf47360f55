//! Command-line workflows and the HTTP service.

pub mod bench;
pub mod cli;
mod commands;
pub mod payload;
pub mod service;

use thiserror::Error;

/// Malformed invocation that the argument parser cannot catch.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub fn run(cli: cli::Cli) -> anyhow::Result<()> {
    use cli::Command::*;
    match &cli.command {
        Synth(a) => commands::synth(a),
        Train(a) => commands::train_cmd(a),
        Grid(a) => commands::grid_cmd(a),
        Eval(a) => commands::eval_cmd(a),
        Explain(a) => commands::explain_cmd(a),
        Flops(a) => commands::flops_cmd(a),
        Bench(a) => commands::bench_cmd(a),
        Serve(a) => commands::serve_cmd(a),
    }
}

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}
