use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "celldrill", version, about = "Drill OpenCellID dumps down to each operator's busiest tracking area")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, validate and pre-select a dump; writes ingest.json and database.csv
    Ingest(IngestArgs),
    /// Run the full drill and write the report files
    Drill(DrillArgs),
    /// Serve a drill output directory to the demarcation UI
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// OpenCellID CSV dump, plain or gzip; `-` reads stdin
    #[arg(long)]
    pub input: PathBuf,

    /// Run configuration (TOML); defaults to the bundled Spain profile
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DrillArgs {
    #[command(flatten)]
    pub source: SourceArgs,

    /// Override the CBS lower bound
    #[arg(long)]
    pub a: Option<u64>,

    /// Override the CBS upper bound
    #[arg(long)]
    pub b: Option<u64>,

    /// Override the number of top cells kept per operator
    #[arg(long = "n-c")]
    pub n_c: Option<usize>,

    /// Worker threads (0 = one per core)
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Directory produced by `celldrill drill`
    #[arg(long)]
    pub out: PathBuf,

    /// Default density grid resolution
    #[arg(long, default_value = "20x20", value_parser = parse_grid)]
    pub grid: (usize, usize),

    /// Address to listen on
    #[arg(long, env = "CELLDRILL_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,

    /// Built UI assets to serve at `/`
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

/// Parses `ROWSxCOLS`, both at least 1.
pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got `{s}`"))?;
    let rows: usize = r.trim().parse().map_err(|_| format!("bad row count `{r}`"))?;
    let cols: usize = c.trim().parse().map_err(|_| format!("bad column count `{c}`"))?;
    if rows == 0 || cols == 0 {
        return Err("grid dimensions must be at least 1".into());
    }
    Ok((rows, cols))
}
