use std::process::ExitCode;

use clap::Parser;
use env_logger::Env;
use orlicz_flow::cli::{execute, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("ORLICZ_FLOW_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    ExitCode::from(execute(cli, &mut stdout.lock()))
}
