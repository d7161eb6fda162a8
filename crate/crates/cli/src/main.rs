//! `activeeval`: offline replay, embedding, reporting, live campaigns and
//! the campaign server.

mod args;
mod commands;
mod error;
mod live;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).parse_default_env().init();
    let result = match &cli.command {
        Command::Replay(a) => commands::replay(&cli, a),
        Command::Embed(a) => commands::embed(&cli, a),
        Command::Report(a) => commands::report(&cli, a),
        Command::Live(a) => live::run(&cli, a),
        Command::Serve(a) => commands::serve(&cli, a),
        Command::Synth(a) => commands::synth(&cli, a),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
