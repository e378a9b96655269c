use std::process::ExitCode;

use clap::Parser;
use jumps::cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
