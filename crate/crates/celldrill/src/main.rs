use std::process::ExitCode;

use celldrill::cli::{Cli, Command};
use celldrill::run::{drill_main, ingest_main, CliError};
use celldrill::service::serve;
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Ingest(args) => ingest_main(args),
        Command::Drill(args) => drill_main(args),
        Command::Serve(args) => tokio::runtime::Runtime::new()
            .map_err(|e| CliError::Other(e.into()))
            .and_then(|rt| rt.block_on(serve(&args.out, args.grid, args.listen, args.assets.clone()))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("celldrill: {e}");
            e.exit_code()
        }
    }
}
