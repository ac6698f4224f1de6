//! Per-operator drilling: CBS filtering, (TAC, CID) de-duplication, per-TAC
//! aggregation, highest-traffic TAC selection and top-cell ranking.
//!
//! Each stage is exposed on its own; [`MnoDrill`] fuses the first two into a
//! streaming fold so a run needs memory proportional to the number of unique
//! cells rather than the number of rows.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::LatLon;
use crate::ingest::{CellRecord, DatabaseMatrix, MnoConfig};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NddError {
    #[error("invalid CBS bounds: a = {a} exceeds b = {b}")]
    InvalidBounds { a: u64, b: u64 },
    #[error("N_c must be at least 1")]
    InvalidTopCount,
    #[error("database matrix is empty")]
    EmptyMatrix,
    #[error("no tracking areas after filtering")]
    NoTrackingAreas,
    #[error("HTTAC {0} has no cells")]
    HttacHasNoCells(u64),
}

/// Inclusive sample-count interval `[a, b]` a row must fall in to be kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds", into = "RawBounds")]
pub struct CbsBounds {
    a: u64,
    b: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    a: u64,
    b: u64,
}

impl TryFrom<RawBounds> for CbsBounds {
    type Error = NddError;
    fn try_from(r: RawBounds) -> Result<Self, NddError> {
        CbsBounds::new(r.a, r.b)
    }
}

impl From<CbsBounds> for RawBounds {
    fn from(c: CbsBounds) -> Self {
        RawBounds { a: c.a, b: c.b }
    }
}

impl Default for CbsBounds {
    fn default() -> Self {
        Self { a: 100, b: 1000 }
    }
}

impl CbsBounds {
    pub fn new(a: u64, b: u64) -> Result<Self, NddError> {
        if a > b {
            return Err(NddError::InvalidBounds { a, b });
        }
        Ok(Self { a, b })
    }

    /// Bounds that keep every row.
    pub fn unbounded() -> Self {
        Self { a: 0, b: u64::MAX }
    }

    pub fn lower(&self) -> u64 {
        self.a
    }

    pub fn upper(&self) -> u64 {
        self.b
    }

    pub fn keeps(&self, samples: u64) -> bool {
        !(samples < self.a || samples > self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub tac: u64,
    pub cid: u64,
}

/// All rows of one (TAC, CID) merged into a single cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniqueCell {
    pub key: CellKey,
    pub samples: u64,
    pub loc: LatLon,
    pub row_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacAggregate {
    pub tac: u64,
    pub total_samples: u64,
    /// Unique cells in this TAC with a non-zero sample count.
    pub cell_count: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NddCounters {
    pub rows_in: u64,
    pub rows_removed_cbs: u64,
    pub rows_kept: u64,
    pub duplicate_rows_merged: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NddResult {
    pub mnc: u32,
    pub httac: u64,
    pub httac_total_samples: u64,
    pub n_c: usize,
    pub top_cells: Vec<UniqueCell>,
    pub all_tacs: Vec<TacAggregate>,
    pub unique_cell_count: u64,
    pub counters: NddCounters,
}

/// Outcome of drilling one operator. A failure here does not abort the other
/// operators.
#[derive(Debug, Clone, PartialEq)]
pub struct MnoRun {
    pub mnc: u32,
    pub counters: NddCounters,
    pub outcome: Result<NddResult, NddError>,
}

// Coordinates are accumulated as integer nano-degrees so that merging partial
// sums is exact and independent of row order.
const COORD_SCALE: f64 = 1e9;

fn to_fixed(v: f64) -> i128 {
    (v * COORD_SCALE).round() as i128
}

fn from_fixed(sum: i128, weight: u64) -> f64 {
    let w = i128::from(weight);
    let q = sum.div_euclid(w);
    let r = sum.rem_euclid(w);
    (q as f64 + r as f64 / w as f64) / COORD_SCALE
}

#[derive(Debug, Clone, Copy, Default)]
struct CellAccum {
    samples: u64,
    rows: u64,
    w_lat: i128,
    w_lon: i128,
    lat: i128,
    lon: i128,
}

impl CellAccum {
    fn add(&mut self, rec: &CellRecord) {
        let (lat, lon) = (to_fixed(rec.loc.lat), to_fixed(rec.loc.lon));
        let w = i128::from(rec.samples);
        self.samples += rec.samples;
        self.rows += 1;
        self.w_lat += w * lat;
        self.w_lon += w * lon;
        self.lat += lat;
        self.lon += lon;
    }

    fn merge(&mut self, o: &CellAccum) {
        self.samples += o.samples;
        self.rows += o.rows;
        self.w_lat += o.w_lat;
        self.w_lon += o.w_lon;
        self.lat += o.lat;
        self.lon += o.lon;
    }

    /// Sample-weighted centroid; plain mean when every row has zero samples.
    fn centroid(&self) -> LatLon {
        if self.samples > 0 {
            LatLon::new(from_fixed(self.w_lat, self.samples), from_fixed(self.w_lon, self.samples))
        } else {
            LatLon::new(from_fixed(self.lat, self.rows), from_fixed(self.lon, self.rows))
        }
    }
}

/// Streaming state for one operator: CBS filter plus the unique-cell fold.
#[derive(Debug, Clone)]
pub struct MnoDrill {
    mnc: u32,
    bounds: CbsBounds,
    rows_in: u64,
    rows_removed: u64,
    cells: HashMap<CellKey, CellAccum>,
}

impl MnoDrill {
    pub fn new(mnc: u32, bounds: CbsBounds) -> Self {
        Self {
            mnc,
            bounds,
            rows_in: 0,
            rows_removed: 0,
            cells: HashMap::new(),
        }
    }

    pub fn push(&mut self, rec: &CellRecord) {
        self.rows_in += 1;
        if !self.bounds.keeps(rec.samples) {
            self.rows_removed += 1;
            return;
        }
        self.cells
            .entry(CellKey {
                tac: rec.tac,
                cid: rec.cid,
            })
            .or_default()
            .add(rec);
    }

    /// Folds another partial state of the same operator into this one.
    pub fn merge(self, other: MnoDrill) -> MnoDrill {
        debug_assert_eq!(self.mnc, other.mnc);
        let (mut big, small) = if self.cells.len() >= other.cells.len() {
            (self, other)
        } else {
            (other, self)
        };
        big.rows_in += small.rows_in;
        big.rows_removed += small.rows_removed;
        for (k, acc) in small.cells {
            big.cells.entry(k).or_default().merge(&acc);
        }
        big
    }

    pub fn unique_cell_count(&self) -> usize {
        self.cells.len()
    }

    fn counters(&self) -> NddCounters {
        let kept = self.rows_in - self.rows_removed;
        NddCounters {
            rows_in: self.rows_in,
            rows_removed_cbs: self.rows_removed,
            rows_kept: kept,
            duplicate_rows_merged: kept - self.cells.len() as u64,
        }
    }

    fn into_unique(self) -> BTreeMap<CellKey, UniqueCell> {
        self.cells
            .into_iter()
            .map(|(key, acc)| {
                let cell = UniqueCell {
                    key,
                    samples: acc.samples,
                    loc: acc.centroid(),
                    row_count: acc.rows,
                };
                (key, cell)
            })
            .collect()
    }

    pub fn finish(self, n_c: usize) -> MnoRun {
        let mnc = self.mnc;
        let counters = self.counters();
        let outcome = drill_cells(mnc, self.into_unique(), n_c, counters);
        MnoRun { mnc, counters, outcome }
    }
}

fn drill_cells(
    mnc: u32,
    cells: BTreeMap<CellKey, UniqueCell>,
    n_c: usize,
    counters: NddCounters,
) -> Result<NddResult, NddError> {
    let all_tacs = aggregate_tacs(&cells);
    let (httac, httac_total_samples) = select_httac(&all_tacs)?;
    let top = top_cells(&cells, httac, n_c)?;
    if top.len() < n_c {
        log::warn!(
            "mnc {mnc}: HTTAC {httac} holds {} cell(s), fewer than N_c = {n_c}",
            top.len()
        );
    }
    Ok(NddResult {
        mnc,
        httac,
        httac_total_samples,
        n_c,
        top_cells: top,
        all_tacs,
        unique_cell_count: cells.len() as u64,
        counters,
    })
}

/// Splits rows into those inside the bounds and a count of the removed ones.
pub fn cbs_filter<'a, I>(records: I, bounds: CbsBounds) -> (Vec<CellRecord>, u64)
where
    I: IntoIterator<Item = &'a CellRecord>,
{
    let mut removed = 0;
    let kept = records
        .into_iter()
        .filter(|r| {
            let keep = bounds.keeps(r.samples);
            removed += u64::from(!keep);
            keep
        })
        .cloned()
        .collect();
    (kept, removed)
}

/// Merges rows sharing a (TAC, CID) pair. Samples are summed and the location
/// is the sample-weighted centroid of the merged rows.
pub fn unique_cells<'a, I>(kept: I) -> BTreeMap<CellKey, UniqueCell>
where
    I: IntoIterator<Item = &'a CellRecord>,
{
    let mut drill = MnoDrill::new(0, CbsBounds::unbounded());
    for r in kept {
        drill.push(r);
    }
    drill.into_unique()
}

/// Total samples per TAC, in ascending TAC order.
pub fn aggregate_tacs(cells: &BTreeMap<CellKey, UniqueCell>) -> Vec<TacAggregate> {
    let mut out: Vec<TacAggregate> = Vec::new();
    for cell in cells.values() {
        let nonzero = u64::from(cell.samples > 0);
        match out.last_mut() {
            Some(agg) if agg.tac == cell.key.tac => {
                agg.total_samples += cell.samples;
                agg.cell_count += nonzero;
            }
            _ => out.push(TacAggregate {
                tac: cell.key.tac,
                total_samples: cell.samples,
                cell_count: nonzero,
            }),
        }
    }
    out
}

/// The TAC with the most samples; ties go to the smallest TAC id.
pub fn select_httac(aggs: &[TacAggregate]) -> Result<(u64, u64), NddError> {
    aggs.iter()
        .min_by(|x, y| y.total_samples.cmp(&x.total_samples).then(x.tac.cmp(&y.tac)))
        .map(|a| (a.tac, a.total_samples))
        .ok_or(NddError::NoTrackingAreas)
}

/// Cells of `httac` ranked by samples (descending, ties by CID), truncated to
/// `n_c`.
pub fn top_cells(
    cells: &BTreeMap<CellKey, UniqueCell>,
    httac: u64,
    n_c: usize,
) -> Result<Vec<UniqueCell>, NddError> {
    if n_c == 0 {
        return Err(NddError::InvalidTopCount);
    }
    let lo = CellKey { tac: httac, cid: 0 };
    let hi = CellKey {
        tac: httac,
        cid: u64::MAX,
    };
    let mut ranked: Vec<UniqueCell> = cells.range(lo..=hi).map(|(_, c)| c.clone()).collect();
    if ranked.is_empty() {
        return Err(NddError::HttacHasNoCells(httac));
    }
    ranked.sort_by(|x, y| y.samples.cmp(&x.samples).then(x.key.cid.cmp(&y.key.cid)));
    ranked.truncate(n_c);
    Ok(ranked)
}

const PARALLEL_CHUNK: usize = 64 * 1024;

/// Runs the full drill for every configured operator, in configuration order.
/// Operators are processed in parallel on the current rayon pool; large
/// partitions are additionally folded in parallel chunks.
pub fn net_data_drilling(
    d: &DatabaseMatrix,
    mnos: &[MnoConfig],
    bounds: CbsBounds,
    n_c: usize,
) -> Result<Vec<MnoRun>, NddError> {
    if d.is_empty() {
        return Err(NddError::EmptyMatrix);
    }
    if n_c == 0 {
        return Err(NddError::InvalidTopCount);
    }
    Ok(mnos
        .par_iter()
        .map(|m| {
            let rows: Vec<&CellRecord> = d.mno_records(m.mnc).collect();
            let drill = rows
                .par_chunks(PARALLEL_CHUNK)
                .map(|chunk| {
                    let mut part = MnoDrill::new(m.mnc, bounds);
                    chunk.iter().for_each(|r| part.push(r));
                    part
                })
                .reduce(|| MnoDrill::new(m.mnc, bounds), MnoDrill::merge);
            drill.finish(n_c)
        })
        .collect())
}
