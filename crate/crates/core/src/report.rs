//! Output documents: the versioned `summary.json`, a plain-text summary,
//! per-operator GeoJSON and top-cell CSV files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::Config;
use crate::geo::DemarcationRect;
use crate::ingest::IngestReport;
use crate::ndd::{CbsBounds, MnoRun, NddCounters, NddResult};

/// Version of the `summary.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no drill results to summarize")]
    NoResults,
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
    #[error("summary check failed for mnc {mnc}: {field} is {found}, expected {expected}")]
    Mismatch {
        mnc: u32,
        field: &'static str,
        found: String,
        expected: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnoSummary {
    pub label: String,
    pub mnc: u32,
    pub market_share: f64,
    pub accumulative_samples: BTreeMap<String, u64>,
    pub rows_in: u64,
    pub rows_removed_cbs: u64,
    pub rows_post_cbs: u64,
    pub unique_cell_count: u64,
    pub httac: Option<u64>,
    pub httac_total_samples: Option<u64>,
    pub top_cell_count: usize,
    pub demarcation: Option<DemarcationRect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub mcc: u32,
    pub cbs: CbsBounds,
    pub n_c: usize,
    pub mnos: Vec<MnoSummary>,
}

/// Per-operator entry of `summary.json`: the full result, or the error that
/// stopped the drill for that operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnoResultDoc {
    pub mnc: u32,
    pub counters: NddCounters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<NddResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&MnoRun> for MnoResultDoc {
    fn from(run: &MnoRun) -> Self {
        Self {
            mnc: run.mnc,
            counters: run.counters,
            result: run.outcome.as_ref().ok().cloned(),
            error: run.outcome.as_ref().err().map(ToString::to_string),
        }
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrillDocument {
    pub schema_version: u32,
    pub summary: SummaryReport,
    pub ingest: IngestReport,
    pub results: Vec<MnoResultDoc>,
}

impl DrillDocument {
    pub fn new(summary: SummaryReport, ingest: IngestReport, runs: &[MnoRun]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            summary,
            ingest,
            results: runs.iter().map(MnoResultDoc::from).collect(),
        }
    }

    pub fn result(&self, mnc: u32) -> Option<&NddResult> {
        self.results.iter().find(|r| r.mnc == mnc)?.result.as_ref()
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn summarize(
    config: &Config,
    ingest: &IngestReport,
    runs: &[MnoRun],
    demarcations: &BTreeMap<u32, DemarcationRect>,
) -> Result<SummaryReport, ReportError> {
    if runs.is_empty() {
        return Err(ReportError::NoResults);
    }
    let configured: BTreeSet<u32> = config.mnos.iter().map(|m| m.mnc).collect();
    let counted: BTreeSet<u32> = ingest.selection.mnos.keys().copied().collect();
    let drilled: BTreeSet<u32> = runs.iter().map(|r| r.mnc).collect();
    if configured != counted || configured != drilled || drilled.len() != runs.len() {
        return Err(ReportError::Inconsistent(format!(
            "operator sets differ: config {configured:?}, ingest {counted:?}, results {drilled:?}"
        )));
    }
    if let Some(stray) = demarcations.keys().find(|k| !configured.contains(k)) {
        return Err(ReportError::Inconsistent(format!(
            "demarcation for unconfigured mnc {stray}"
        )));
    }

    let mnos = config
        .mnos
        .iter()
        .map(|m| {
            let run = runs.iter().find(|r| r.mnc == m.mnc).expect("checked above");
            let ok = run.outcome.as_ref().ok();
            MnoSummary {
                label: m.label.clone(),
                mnc: m.mnc,
                market_share: m.market_share,
                accumulative_samples: ingest.selection.mnos[&m.mnc].samples_by_rat.clone(),
                rows_in: run.counters.rows_in,
                rows_removed_cbs: run.counters.rows_removed_cbs,
                rows_post_cbs: run.counters.rows_kept,
                unique_cell_count: ok.map_or(0, |r| r.unique_cell_count),
                httac: ok.map(|r| r.httac),
                httac_total_samples: ok.map(|r| r.httac_total_samples),
                top_cell_count: ok.map_or(0, |r| r.top_cells.len()),
                demarcation: demarcations.get(&m.mnc).cloned(),
                error: run.outcome.as_ref().err().map(ToString::to_string),
            }
        })
        .collect();

    Ok(SummaryReport {
        mcc: config.mcc,
        cbs: config.cbs,
        n_c: config.n_c,
        mnos,
    })
}

fn expect_eq<T: PartialEq + std::fmt::Debug>(
    mnc: u32,
    field: &'static str,
    found: T,
    expected: T,
) -> Result<(), ReportError> {
    if found == expected {
        Ok(())
    } else {
        Err(ReportError::Mismatch {
            mnc,
            field,
            found: format!("{found:?}"),
            expected: format!("{expected:?}"),
        })
    }
}

/// Re-derives every summary number from the raw counters and results and
/// reports the first disagreement.
pub fn check_summary(summary: &SummaryReport, ingest: &IngestReport, runs: &[MnoRun]) -> Result<(), ReportError> {
    for block in &summary.mnos {
        let mnc = block.mnc;
        let run = runs
            .iter()
            .find(|r| r.mnc == mnc)
            .ok_or_else(|| ReportError::Inconsistent(format!("no result for mnc {mnc}")))?;
        let counted = ingest
            .selection
            .mnos
            .get(&mnc)
            .ok_or_else(|| ReportError::Inconsistent(format!("no ingest counters for mnc {mnc}")))?;

        expect_eq(mnc, "accumulative_samples", &block.accumulative_samples, &counted.samples_by_rat)?;
        expect_eq(mnc, "rows_in", block.rows_in, counted.retained_rows)?;
        expect_eq(mnc, "rows_in", block.rows_in, run.counters.rows_in)?;
        expect_eq(mnc, "rows_removed_cbs", block.rows_removed_cbs, run.counters.rows_removed_cbs)?;
        expect_eq(
            mnc,
            "rows_post_cbs",
            block.rows_post_cbs,
            run.counters.rows_in - run.counters.rows_removed_cbs,
        )?;

        let Ok(result) = &run.outcome else {
            expect_eq(mnc, "httac", block.httac, None)?;
            continue;
        };
        expect_eq(mnc, "unique_cell_count", block.unique_cell_count, result.unique_cell_count)?;
        expect_eq(mnc, "httac", block.httac, Some(result.httac))?;
        expect_eq(mnc, "top_cell_count", block.top_cell_count, result.top_cells.len())?;

        let httac_agg = result
            .all_tacs
            .iter()
            .find(|a| a.tac == result.httac)
            .map(|a| a.total_samples);
        expect_eq(mnc, "httac_total_samples", block.httac_total_samples, httac_agg)?;
        let best = result.all_tacs.iter().map(|a| a.total_samples).max();
        expect_eq(mnc, "httac_total_samples", block.httac_total_samples, best)?;
        let cells: u64 = result.all_tacs.iter().map(|a| a.cell_count).sum();
        if cells > result.unique_cell_count {
            return Err(ReportError::Mismatch {
                mnc,
                field: "unique_cell_count",
                found: result.unique_cell_count.to_string(),
                expected: format!(">= {cells}"),
            });
        }
        expect_eq(
            mnc,
            "duplicate_rows_merged",
            result.counters.duplicate_rows_merged,
            result.counters.rows_kept - result.unique_cell_count,
        )?;
        if let Some(d) = &block.demarcation {
            expect_eq(mnc, "demarcation.mnc", d.mnc, mnc)?;
            expect_eq(mnc, "demarcation.area_km2", d.area_km2, d.rect.area_km2())?;
        }
    }
    Ok(())
}

/// Human-readable rendering of the summary. Areas use two decimals.
pub fn render_text(summary: &SummaryReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "celldrill summary");
    let _ = writeln!(
        out,
        "mcc {}  cbs [{}, {}]  N_c {}",
        summary.mcc,
        summary.cbs.lower(),
        summary.cbs.upper(),
        summary.n_c
    );
    for m in &summary.mnos {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{} (mnc {}), market share {:.2}%",
            m.label,
            m.mnc,
            m.market_share * 100.0
        );
        let acc: u64 = m.accumulative_samples.values().sum();
        let per_rat = m
            .accumulative_samples
            .iter()
            .map(|(rat, n)| format!("{rat} {n}"))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(out, "  accumulative samples: {acc} ({per_rat})");
        let _ = writeln!(
            out,
            "  rows selected: {}, removed by CBS: {}, post-CBS: {}",
            m.rows_in, m.rows_removed_cbs, m.rows_post_cbs
        );
        if let Some(err) = &m.error {
            let _ = writeln!(out, "  drill failed: {err}");
            continue;
        }
        let _ = writeln!(out, "  unique cells: {}", m.unique_cell_count);
        if let (Some(h), Some(t)) = (m.httac, m.httac_total_samples) {
            let _ = writeln!(out, "  HTTAC: {h} ({t} samples)");
        }
        let _ = writeln!(out, "  top cells: {}", m.top_cell_count);
        match &m.demarcation {
            Some(d) => {
                let r = &d.rect;
                let _ = writeln!(
                    out,
                    "  5GDA ({}): {:.2} km2, lat [{}, {}] lon [{}, {}], {} cells, {} samples",
                    match d.source {
                        crate::geo::RectSource::Manual => "manual",
                        crate::geo::RectSource::Suggested => "suggested",
                    },
                    d.area_km2,
                    r.lat_min(),
                    r.lat_max(),
                    r.lon_min(),
                    r.lon_max(),
                    d.contained_cells,
                    d.contained_samples
                );
            }
            None => {
                let _ = writeln!(out, "  5GDA: not demarcated");
            }
        }
    }
    out
}

/// FeatureCollection with one Point per top cell (in rank order) and, when
/// given, the demarcation Polygon.
pub fn to_geojson(result: &NddResult, demarcation: Option<&DemarcationRect>) -> Value {
    let mut features: Vec<Value> = result
        .top_cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [c.loc.lon, c.loc.lat],
                },
                "properties": {
                    "rank": i + 1,
                    "tac": c.key.tac,
                    "cid": c.key.cid,
                    "samples": c.samples,
                },
            })
        })
        .collect();
    if let Some(d) = demarcation {
        features.push(json!({
            "type": "Feature",
            "geometry": {
                "type": "Polygon",
                "coordinates": [d.rect.ring()],
            },
            "properties": {
                "area_km2": d.area_km2,
                "source": d.source,
                "contained_cells": d.contained_cells,
                "contained_samples": d.contained_samples,
            },
        }));
    }
    json!({
        "type": "FeatureCollection",
        "features": features,
    })
}

/// `rank,tac,cid,lat,lon,samples` rows for the top cells.
pub fn top_cells_csv(result: &NddResult) -> String {
    let mut out = String::from("rank,tac,cid,lat,lon,samples\n");
    for (i, c) in result.top_cells.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            i + 1,
            c.key.tac,
            c.key.cid,
            c.loc.lat,
            c.loc.lon,
            c.samples
        );
    }
    out
}

pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TXT: &str = "summary.txt";

pub fn geojson_file_name(mnc: u32) -> String {
    format!("mno_{mnc}.geojson")
}

pub fn top_cells_file_name(mnc: u32) -> String {
    format!("mno_{mnc}_top_cells.csv")
}

/// Writes every report file into `dir` and returns the paths written.
pub fn write_outputs(dir: &Path, doc: &DrillDocument) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> io::Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put(SUMMARY_JSON.into(), doc.to_json()?)?;
    put(SUMMARY_TXT.into(), render_text(&doc.summary))?;
    for block in &doc.summary.mnos {
        let Some(result) = doc.result(block.mnc) else {
            continue;
        };
        let mut gj = serde_json::to_string_pretty(&to_geojson(result, block.demarcation.as_ref()))?;
        gj.push('\n');
        put(geojson_file_name(block.mnc), gj)?;
        put(top_cells_file_name(block.mnc), top_cells_csv(result))?;
    }
    Ok(written)
}
