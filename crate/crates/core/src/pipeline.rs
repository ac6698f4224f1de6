//! Single-pass ingest-and-drill over a CSV stream.

use std::collections::BTreeMap;
use std::io::Read;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::Config;
use crate::geo::{suggest_5gda, GeoError};
use crate::ingest::{ingest_stream, IngestError, IngestReport};
use crate::ndd::{MnoDrill, MnoRun};
use crate::report::{check_summary, summarize, DrillDocument, ReportError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
pub struct DrillOutput {
    pub ingest: IngestReport,
    pub runs: Vec<MnoRun>,
}

/// Streams `input` once. Rows are routed straight into per-operator folds, so
/// memory tracks the number of unique (TAC, CID) keys, not the row count.
/// Operators are finished in parallel on the current rayon pool.
pub fn drill_stream<R: Read>(input: R, config: &Config) -> Result<DrillOutput, PipelineError> {
    let mut drills: Vec<MnoDrill> = config
        .mnos
        .iter()
        .map(|m| MnoDrill::new(m.mnc, config.cbs))
        .collect();
    let ingest = ingest_stream(input, &config.schema, config.mcc, &config.mnos, |idx, rec| {
        drills[idx].push(&rec)
    })?;
    if ingest.selection.rows_retained == 0 {
        return Err(IngestError::EmptySelection { mcc: config.mcc }.into());
    }
    let n_c = config.n_c;
    let runs = drills.into_par_iter().map(|d| d.finish(n_c)).collect();
    Ok(DrillOutput { ingest, runs })
}

/// Assembles and self-checks the `summary.json` document.
pub fn build_document(config: &Config, out: DrillOutput) -> Result<DrillDocument, PipelineError> {
    let mut demarcations = BTreeMap::new();
    if let Some(fraction) = config.suggest_mass_fraction {
        for run in &out.runs {
            if let Ok(r) = &run.outcome {
                demarcations.insert(run.mnc, suggest_5gda(run.mnc, &r.top_cells, fraction)?);
            }
        }
    }
    let summary = summarize(config, &out.ingest, &out.runs, &demarcations)?;
    check_summary(&summary, &out.ingest, &out.runs)?;
    Ok(DrillDocument::new(summary, out.ingest, &out.runs))
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}
