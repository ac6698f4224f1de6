//! OpenCellID ingest: CSV parsing, row validation and the pre-selection of
//! one country's operators and radio technologies.

mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::LatLon;

pub use parse::{maybe_gunzip, open_input, parse_csv, CsvRows, ParsedLine, RawRow, Schema};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {reason}")]
    Open { path: String, reason: String },
    #[error("read failure: {0}")]
    Read(String),
    #[error("invalid operator configuration: {0}")]
    Config(String),
    #[error("empty selection: no rows matched mcc {mcc} and the configured operators")]
    EmptySelection { mcc: u32 },
}

/// Radio access technology of a row. Matching is case-insensitive; anything
/// other than GSM/UMTS/LTE is kept verbatim as `Other` and never passes an
/// allowlist.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rat {
    Gsm,
    Umts,
    Lte,
    Other(String),
}

impl Rat {
    pub fn parse(text: &str) -> Rat {
        let t = text.trim();
        if t.eq_ignore_ascii_case("LTE") {
            Rat::Lte
        } else if t.eq_ignore_ascii_case("UMTS") {
            Rat::Umts
        } else if t.eq_ignore_ascii_case("GSM") {
            Rat::Gsm
        } else {
            Rat::Other(t.to_owned())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Rat::Gsm => "GSM",
            Rat::Umts => "UMTS",
            Rat::Lte => "LTE",
            Rat::Other(s) => s,
        }
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, Rat::Other(_))
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Rat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Rat::parse(&s))
    }
}

/// A validated row of the operator database.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub rat: Rat,
    pub mnc: u32,
    pub tac: u64,
    pub cid: u64,
    pub loc: LatLon,
    pub samples: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("lat out of range: {0}")]
    LatOutOfRange(f64),
    #[error("lon out of range: {0}")]
    LonOutOfRange(f64),
    #[error("negative samples: {0}")]
    NegativeSamples(i64),
    #[error("negative tac: {0}")]
    NegativeTac(i64),
    #[error("negative cid: {0}")]
    NegativeCid(i64),
    #[error("mnc out of range: {0}")]
    MncOutOfRange(i64),
}

impl ValidationError {
    pub fn key(&self) -> &'static str {
        match self {
            ValidationError::LatOutOfRange(_) => "lat_out_of_range",
            ValidationError::LonOutOfRange(_) => "lon_out_of_range",
            ValidationError::NegativeSamples(_) => "negative_samples",
            ValidationError::NegativeTac(_) => "negative_tac",
            ValidationError::NegativeCid(_) => "negative_cid",
            ValidationError::MncOutOfRange(_) => "mnc_out_of_range",
        }
    }
}

/// Why a data line was dropped.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RejectReason {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("non-numeric value in column `{column}`")]
    NonNumeric { column: &'static str },
    #[error("numeric value out of range in column `{column}`")]
    NumericOutOfRange { column: &'static str },
    #[error("invalid UTF-8 in column `{column}`")]
    InvalidUtf8 { column: &'static str },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

impl RejectReason {
    /// Stable counter name used in the ingest report.
    pub fn key(&self) -> &'static str {
        match self {
            RejectReason::FieldCount { .. } => "field_count",
            RejectReason::NonNumeric { .. } => "non_numeric",
            RejectReason::NumericOutOfRange { .. } => "numeric_out_of_range",
            RejectReason::InvalidUtf8 { .. } => "invalid_utf8",
            RejectReason::Invalid(v) => v.key(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {reason}")]
pub struct RowError {
    pub line: u64,
    pub reason: RejectReason,
}

pub fn validate(row: &RawRow) -> Result<CellRecord, ValidationError> {
    if !(-90.0..=90.0).contains(&row.lat) {
        return Err(ValidationError::LatOutOfRange(row.lat));
    }
    if !(-180.0..=180.0).contains(&row.lon) {
        return Err(ValidationError::LonOutOfRange(row.lon));
    }
    if row.samples < 0 {
        return Err(ValidationError::NegativeSamples(row.samples));
    }
    if row.area < 0 {
        return Err(ValidationError::NegativeTac(row.area));
    }
    if row.cell < 0 {
        return Err(ValidationError::NegativeCid(row.cell));
    }
    let mnc = u32::try_from(row.net).map_err(|_| ValidationError::MncOutOfRange(row.net))?;
    Ok(CellRecord {
        rat: Rat::parse(&row.radio),
        mnc,
        tac: row.area as u64,
        cid: row.cell as u64,
        loc: LatLon::new(row.lat, row.lon),
        samples: row.samples as u64,
    })
}

/// One operator selected for analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnoConfig {
    pub mnc: u32,
    pub label: String,
    pub market_share: f64,
    pub allowed_rats: BTreeSet<Rat>,
}

impl MnoConfig {
    pub fn allows(&self, rat: &Rat) -> bool {
        rat.is_known() && self.allowed_rats.contains(rat)
    }
}

pub fn check_mnos(mnos: &[MnoConfig]) -> Result<(), IngestError> {
    if mnos.is_empty() {
        return Err(IngestError::Config("at least one operator is required".into()));
    }
    let mut seen = BTreeSet::new();
    for m in mnos {
        if !seen.insert(m.mnc) {
            return Err(IngestError::Config(format!("mnc {} listed twice", m.mnc)));
        }
        if !(0.0..=1.0).contains(&m.market_share) {
            return Err(IngestError::Config(format!(
                "mnc {}: market_share {} outside [0, 1]",
                m.mnc, m.market_share
            )));
        }
        if m.allowed_rats.is_empty() {
            return Err(IngestError::Config(format!("mnc {}: allowed_rats is empty", m.mnc)));
        }
        if let Some(bad) = m.allowed_rats.iter().find(|r| !r.is_known()) {
            return Err(IngestError::Config(format!(
                "mnc {}: unknown radio technology `{bad}` in allowed_rats",
                m.mnc
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MnoIngestCounters {
    /// Rows passing the country, operator and RAT filters.
    pub retained_rows: u64,
    /// Samples of every row of this operator, whatever its RAT.
    pub samples_by_rat: BTreeMap<String, u64>,
    pub rows_by_rat: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounters {
    pub rows_other_mcc: u64,
    pub rows_other_mnc: u64,
    pub rows_rat_excluded: u64,
    pub rows_retained: u64,
    pub mnos: BTreeMap<u32, MnoIngestCounters>,
}

/// Filters validated rows down to one country and its configured operators.
pub struct Preselector<'a> {
    mcc: u32,
    mnos: &'a [MnoConfig],
    index: HashMap<u32, usize>,
    counters: SelectionCounters,
}

impl<'a> Preselector<'a> {
    pub fn new(mcc: u32, mnos: &'a [MnoConfig]) -> Result<Self, IngestError> {
        check_mnos(mnos)?;
        let index = mnos.iter().enumerate().map(|(i, m)| (m.mnc, i)).collect();
        let counters = SelectionCounters {
            mnos: mnos.iter().map(|m| (m.mnc, MnoIngestCounters::default())).collect(),
            ..Default::default()
        };
        Ok(Self {
            mcc,
            mnos,
            index,
            counters,
        })
    }

    /// Returns the operator's position in the configuration when the record is
    /// kept.
    pub fn offer(&mut self, mcc: i64, rec: &CellRecord) -> Option<usize> {
        if mcc != i64::from(self.mcc) {
            self.counters.rows_other_mcc += 1;
            return None;
        }
        let Some(&idx) = self.index.get(&rec.mnc) else {
            self.counters.rows_other_mnc += 1;
            return None;
        };
        let mno = self.counters.mnos.get_mut(&rec.mnc).expect("counter per configured mnc");
        let rat = rec.rat.as_str();
        match mno.samples_by_rat.get_mut(rat) {
            Some(s) => {
                *s += rec.samples;
                *mno.rows_by_rat.get_mut(rat).expect("rows tracked with samples") += 1;
            }
            None => {
                mno.samples_by_rat.insert(rat.to_owned(), rec.samples);
                mno.rows_by_rat.insert(rat.to_owned(), 1);
            }
        }
        if !self.mnos[idx].allows(&rec.rat) {
            self.counters.rows_rat_excluded += 1;
            return None;
        }
        mno.retained_rows += 1;
        self.counters.rows_retained += 1;
        Some(idx)
    }

    pub fn finish(self) -> SelectionCounters {
        self.counters
    }
}

/// The selected rows of one country, with a per-operator row index.
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DatabaseMatrix {
    mcc: u32,
    records: Vec<CellRecord>,
    by_mno: BTreeMap<u32, Vec<usize>>,
}

impl DatabaseMatrix {
    pub fn mcc(&self) -> u32 {
        self.mcc
    }

    pub fn records(&self) -> &[CellRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn mno_records(&self, mnc: u32) -> impl Iterator<Item = &CellRecord> + '_ {
        self.by_mno
            .get(&mnc)
            .into_iter()
            .flatten()
            .map(move |&i| &self.records[i])
    }

    pub fn retained_count(&self, mnc: u32) -> usize {
        self.by_mno.get(&mnc).map_or(0, Vec::len)
    }

    /// Writes the matrix back out in the default OpenCellID column layout.
    /// Columns the pipeline does not read are filled with zeros.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Schema::OPENCELLID_HEADER.split(','))?;
        for r in &self.records {
            w.write_record([
                r.rat.as_str().to_owned(),
                self.mcc.to_string(),
                r.mnc.to_string(),
                r.tac.to_string(),
                r.cid.to_string(),
                "0".into(),
                r.loc.lon.to_string(),
                r.loc.lat.to_string(),
                "0".into(),
                r.samples.to_string(),
                "1".into(),
                "0".into(),
                "0".into(),
                "0".into(),
            ])?;
        }
        w.flush()
    }
}

#[derive(Debug)]
pub struct Preselection {
    pub matrix: DatabaseMatrix,
    pub counters: SelectionCounters,
}

/// Builds the database matrix from `(source mcc, record)` pairs.
pub fn preselect<I>(records: I, mcc: u32, mnos: &[MnoConfig]) -> Result<Preselection, IngestError>
where
    I: IntoIterator<Item = (i64, CellRecord)>,
{
    let mut selector = Preselector::new(mcc, mnos)?;
    let mut kept = Vec::new();
    let mut by_mno: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (row_mcc, rec) in records {
        if selector.offer(row_mcc, &rec).is_some() {
            by_mno.entry(rec.mnc).or_default().push(kept.len());
            kept.push(rec);
        }
    }
    if kept.is_empty() {
        return Err(IngestError::EmptySelection { mcc });
    }
    Ok(Preselection {
        matrix: DatabaseMatrix {
            mcc,
            records: kept,
            by_mno,
        },
        counters: selector.finish(),
    })
}

/// Machine-readable ingest counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: u64,
    pub rows_valid: u64,
    pub rows_rejected: u64,
    pub rejected_by_reason: BTreeMap<String, u64>,
    pub selection: SelectionCounters,
}

impl IngestReport {
    fn reject(&mut self, err: &RowError) {
        log::debug!("skipping {err}");
        self.rows_rejected += 1;
        *self.rejected_by_reason.entry(err.reason.key().to_owned()).or_default() += 1;
    }
}

/// Single pass over a CSV stream: parse, validate, pre-select. Each kept record
/// is handed to `sink` with its operator's configuration index; nothing is
/// buffered here.
pub fn ingest_stream<R, F>(
    input: R,
    schema: &Schema,
    mcc: u32,
    mnos: &[MnoConfig],
    mut sink: F,
) -> Result<IngestReport, IngestError>
where
    R: Read,
    F: FnMut(usize, CellRecord),
{
    schema.check().map_err(IngestError::Config)?;
    let mut selector = Preselector::new(mcc, mnos)?;
    let mut report = IngestReport::default();
    for parsed in parse_csv(input, schema) {
        let ParsedLine { line, row } = parsed?;
        report.rows_read += 1;
        let raw = match row {
            Ok(raw) => raw,
            Err(e) => {
                report.reject(&e);
                continue;
            }
        };
        let rec = match validate(&raw) {
            Ok(rec) => rec,
            Err(v) => {
                report.reject(&RowError {
                    line,
                    reason: v.into(),
                });
                continue;
            }
        };
        report.rows_valid += 1;
        if let Some(idx) = selector.offer(raw.mcc, &rec) {
            sink(idx, rec);
        }
    }
    report.selection = selector.finish();
    if report.rows_rejected > 0 {
        log::warn!(
            "skipped {} malformed line(s) of {}: {:?}",
            report.rows_rejected,
            report.rows_read,
            report.rejected_by_reason
        );
    }
    log::info!(
        "read {} line(s), retained {} for mcc {}",
        report.rows_read,
        report.selection.rows_retained,
        mcc
    );
    Ok(report)
}

/// Materializes the database matrix from a CSV stream.
pub fn load_matrix<R: Read>(
    input: R,
    schema: &Schema,
    mcc: u32,
    mnos: &[MnoConfig],
) -> Result<(DatabaseMatrix, IngestReport), IngestError> {
    let mut records = Vec::new();
    let mut by_mno: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let report = ingest_stream(input, schema, mcc, mnos, |_, rec| {
        by_mno.entry(rec.mnc).or_default().push(records.len());
        records.push(rec);
    })?;
    if records.is_empty() {
        return Err(IngestError::EmptySelection { mcc });
    }
    Ok((
        DatabaseMatrix {
            mcc,
            records,
            by_mno,
        },
        report,
    ))
}
