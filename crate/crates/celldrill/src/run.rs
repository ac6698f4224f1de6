//! Batch subcommands: `ingest` and `drill`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use celldrill_core::config::Config;
use celldrill_core::ingest::{load_matrix, open_input, IngestError};
use celldrill_core::ndd::CbsBounds;
use celldrill_core::pipeline::{build_document, drill_stream, with_threads, PipelineError};
use celldrill_core::report::{write_outputs, DrillDocument};
use thiserror::Error;

use crate::cli::{DrillArgs, IngestArgs, SourceArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub const USAGE_EXIT: u8 = 2;
    pub const DATA_EXIT: u8 = 3;

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(Self::USAGE_EXIT),
            CliError::Data(_) => ExitCode::from(Self::DATA_EXIT),
            CliError::Other(_) => ExitCode::FAILURE,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Ingest(IngestError::EmptySelection { .. }) => CliError::Data(e.to_string()),
            PipelineError::Ingest(IngestError::Open { .. }) => CliError::Usage(e.to_string()),
            PipelineError::Ingest(IngestError::Config(_)) => CliError::Usage(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

/// Resolved settings for a batch run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub out: PathBuf,
    pub config: Config,
    pub threads: usize,
}

fn load_source(src: &SourceArgs) -> Result<Config, CliError> {
    if src.input.as_os_str() != "-" && !src.input.is_file() {
        return Err(CliError::Usage(format!("input {} does not exist", src.input.display())));
    }
    match &src.config {
        Some(path) => Config::load(path).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(Config::spain_profile()),
    }
}

impl RunConfig {
    pub fn from_drill_args(args: &DrillArgs) -> Result<Self, CliError> {
        let mut config = load_source(&args.source)?;
        if args.a.is_some() || args.b.is_some() {
            let a = args.a.unwrap_or(config.cbs.lower());
            let b = args.b.unwrap_or(config.cbs.upper());
            config.cbs = CbsBounds::new(a, b).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if let Some(n_c) = args.n_c {
            if n_c == 0 {
                return Err(CliError::Usage("--n-c must be at least 1".into()));
            }
            config.n_c = n_c;
        }
        Ok(Self {
            input: args.source.input.clone(),
            out: args.source.out.clone(),
            config,
            threads: args.threads,
        })
    }
}

fn one_line(doc: &DrillDocument) -> Vec<String> {
    doc.summary
        .mnos
        .iter()
        .map(|m| match (&m.error, m.httac, m.httac_total_samples) {
            (None, Some(h), Some(t)) => format!(
                "{} (mnc {}): HTTAC {h} with {t} samples, {} top cell(s), {} unique cell(s), {} row(s) removed by CBS",
                m.label, m.mnc, m.top_cell_count, m.unique_cell_count, m.rows_removed_cbs
            ),
            (Some(e), ..) => format!("{} (mnc {}): {e}", m.label, m.mnc),
            _ => format!("{} (mnc {}): no result", m.label, m.mnc),
        })
        .collect()
}

/// Ingest, drill and write every report file. Returns the written document.
pub fn cmd_drill(run: &RunConfig) -> Result<DrillDocument, CliError> {
    let input = open_input(&run.input).map_err(|e| CliError::Usage(e.to_string()))?;
    let config = &run.config;
    let output = with_threads(run.threads, || drill_stream(input, config))??;
    let doc = build_document(config, output)?;
    write_outputs(&run.out, &doc).map_err(|e| CliError::Other(e.into()))?;
    for line in one_line(&doc) {
        println!("{line}");
    }
    Ok(doc)
}

pub fn drill_main(args: &DrillArgs) -> Result<(), CliError> {
    let run = RunConfig::from_drill_args(args)?;
    cmd_drill(&run).map(|_| ())
}

pub const INGEST_JSON: &str = "ingest.json";
pub const DATABASE_CSV: &str = "database.csv";

/// Writes the ingest counters and the selected database matrix.
pub fn ingest_main(args: &IngestArgs) -> Result<(), CliError> {
    let config = load_source(&args.source)?;
    let input = open_input(&args.source.input).map_err(|e| CliError::Usage(e.to_string()))?;
    let (matrix, report) = load_matrix(input, &config.schema, config.mcc, &config.mnos)
        .map_err(|e| CliError::from(PipelineError::from(e)))?;
    write_ingest(&args.source.out, &matrix, &report).map_err(CliError::Other)?;
    println!(
        "read {} line(s), rejected {}, retained {} for mcc {}",
        report.rows_read, report.rows_rejected, report.selection.rows_retained, config.mcc
    );
    Ok(())
}

fn write_ingest(
    out: &Path,
    matrix: &celldrill_core::DatabaseMatrix,
    report: &celldrill_core::ingest::IngestReport,
) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(out.join(INGEST_JSON), json)?;
    let file = fs::File::create(out.join(DATABASE_CSV))?;
    matrix.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}
