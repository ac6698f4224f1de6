use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::num::IntErrorKind;
use std::path::Path;

use csv::ByteRecord;
use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use super::{IngestError, RejectReason, RowError};

/// Column positions of the fields the pipeline reads. Defaults follow the
/// public OpenCellID dump layout:
/// `radio,mcc,net,area,cell,unit,lon,lat,range,samples,changeable,created,updated,averageSignal`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub has_header: bool,
    pub field_count: usize,
    pub radio: usize,
    pub mcc: usize,
    pub net: usize,
    pub area: usize,
    pub cell: usize,
    pub lon: usize,
    pub lat: usize,
    pub range: usize,
    pub samples: usize,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            has_header: true,
            field_count: 14,
            radio: 0,
            mcc: 1,
            net: 2,
            area: 3,
            cell: 4,
            lon: 6,
            lat: 7,
            range: 8,
            samples: 9,
        }
    }
}

impl Schema {
    pub const OPENCELLID_HEADER: &'static str =
        "radio,mcc,net,area,cell,unit,lon,lat,range,samples,changeable,created,updated,averageSignal";

    pub fn check(&self) -> Result<(), String> {
        let cols = [
            ("radio", self.radio),
            ("mcc", self.mcc),
            ("net", self.net),
            ("area", self.area),
            ("cell", self.cell),
            ("lon", self.lon),
            ("lat", self.lat),
            ("range", self.range),
            ("samples", self.samples),
        ];
        for (i, (name, pos)) in cols.iter().enumerate() {
            if *pos >= self.field_count {
                return Err(format!(
                    "column `{name}` at position {pos} is outside field_count {}",
                    self.field_count
                ));
            }
            if let Some((other, _)) = cols[..i].iter().find(|(_, p)| p == pos) {
                return Err(format!("columns `{other}` and `{name}` share position {pos}"));
            }
        }
        Ok(())
    }
}

/// One data line as read, before any semantic validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub radio: String,
    pub mcc: i64,
    pub net: i64,
    pub area: i64,
    pub cell: i64,
    pub lon: f64,
    pub lat: f64,
    pub range: i64,
    pub samples: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLine {
    pub line: u64,
    pub row: Result<RawRow, RowError>,
}

/// Streaming row reader. Holds one record buffer, so memory does not grow with
/// the input.
pub struct CsvRows<R: Read> {
    reader: csv::Reader<R>,
    record: ByteRecord,
    schema: Schema,
    skip_header: bool,
}

pub fn parse_csv<R: Read>(input: R, schema: &Schema) -> CsvRows<R> {
    let reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .buffer_capacity(1 << 16)
        .from_reader(input);
    CsvRows {
        reader,
        record: ByteRecord::new(),
        schema: schema.clone(),
        skip_header: schema.has_header,
    }
}

impl<R: Read> Iterator for CsvRows<R> {
    type Item = Result<ParsedLine, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.reader.read_byte_record(&mut self.record) {
                Ok(false) => return None,
                Ok(true) => {}
                Err(e) => return Some(Err(IngestError::Read(e.to_string()))),
            }
            if self.skip_header {
                self.skip_header = false;
                continue;
            }
            let line = self.record.position().map_or(0, |p| p.line());
            let row = parse_record(&self.record, &self.schema).map_err(|reason| RowError { line, reason });
            return Some(Ok(ParsedLine { line, row }));
        }
    }
}

fn field<'r>(rec: &'r ByteRecord, idx: usize, column: &'static str) -> Result<&'r str, RejectReason> {
    let raw = rec.get(idx).unwrap_or_default();
    std::str::from_utf8(raw)
        .map(str::trim)
        .map_err(|_| RejectReason::InvalidUtf8 { column })
}

fn int_field(rec: &ByteRecord, idx: usize, column: &'static str) -> Result<i64, RejectReason> {
    field(rec, idx, column)?.parse::<i64>().map_err(|e| match e.kind() {
        IntErrorKind::PosOverflow | IntErrorKind::NegOverflow => RejectReason::NumericOutOfRange { column },
        _ => RejectReason::NonNumeric { column },
    })
}

fn float_field(rec: &ByteRecord, idx: usize, column: &'static str) -> Result<f64, RejectReason> {
    let v: f64 = field(rec, idx, column)?
        .parse()
        .map_err(|_| RejectReason::NonNumeric { column })?;
    if v.is_nan() {
        Err(RejectReason::NonNumeric { column })
    } else if v.is_infinite() {
        Err(RejectReason::NumericOutOfRange { column })
    } else {
        Ok(v)
    }
}

fn parse_record(rec: &ByteRecord, schema: &Schema) -> Result<RawRow, RejectReason> {
    if rec.len() != schema.field_count {
        return Err(RejectReason::FieldCount {
            expected: schema.field_count,
            found: rec.len(),
        });
    }
    Ok(RawRow {
        radio: field(rec, schema.radio, "radio")?.to_owned(),
        mcc: int_field(rec, schema.mcc, "mcc")?,
        net: int_field(rec, schema.net, "net")?,
        area: int_field(rec, schema.area, "area")?,
        cell: int_field(rec, schema.cell, "cell")?,
        lon: float_field(rec, schema.lon, "lon")?,
        lat: float_field(rec, schema.lat, "lat")?,
        range: int_field(rec, schema.range, "range")?,
        samples: int_field(rec, schema.samples, "samples")?,
    })
}

/// Opens a CSV source: a plain or gzip-compressed file, or stdin for `-`.
/// Compression is detected from the gzip magic bytes, not the file name.
pub fn open_input(path: &Path) -> Result<Box<dyn Read + Send>, IngestError> {
    let reader: Box<dyn Read + Send> = if path.as_os_str() == "-" {
        Box::new(io::stdin())
    } else {
        let file = File::open(path).map_err(|e| IngestError::Open {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Box::new(file)
    };
    maybe_gunzip(reader).map_err(|e| IngestError::Read(e.to_string()))
}

pub fn maybe_gunzip<R: Read + Send + 'static>(reader: R) -> io::Result<Box<dyn Read + Send>> {
    let mut buffered = BufReader::with_capacity(1 << 16, reader);
    let head = buffered.fill_buf()?;
    if head.starts_with(&[0x1f, 0x8b]) {
        Ok(Box::new(MultiGzDecoder::new(buffered)))
    } else {
        Ok(Box::new(buffered))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = Schema::OPENCELLID_HEADER;

    fn rows(text: &str) -> Vec<ParsedLine> {
        parse_csv(text.as_bytes(), &Schema::default())
            .collect::<Result<Vec<_>, _>>()
            .unwrap()
    }

    #[test]
    fn parses_reference_line() {
        let text = format!("{HEADER}\nLTE,214,1,10,100,0,-3.70,40.00,1000,500,1,0,0,0\n");
        let out = rows(&text);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].line, 2);
        assert_eq!(
            out[0].row.as_ref().unwrap(),
            &RawRow {
                radio: "LTE".into(),
                mcc: 214,
                net: 1,
                area: 10,
                cell: 100,
                lon: -3.70,
                lat: 40.00,
                range: 1000,
                samples: 500,
            }
        );
    }

    #[test]
    fn header_only_is_empty() {
        assert!(rows(&format!("{HEADER}\n")).is_empty());
        assert!(rows("").is_empty());
    }

    #[test]
    fn non_numeric_cid_is_row_error() {
        let text = format!("{HEADER}\nLTE,214,1,10,abc,0,-3.70,40.00,1000,500,1,0,0,0\n");
        let out = rows(&text);
        let err = out[0].row.as_ref().unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.reason, RejectReason::NonNumeric { column: "cell" });
    }

    #[test]
    fn bad_lines_do_not_stop_the_stream() {
        let text = format!(
            "{HEADER}\nLTE,214,1\nLTE,214,1,10,100,0,-3.7,40.0,0,5,1,0,0,0\nLTE,214,1,10,99999999999999999999,0,-3.7,40.0,0,5,1,0,0,0\nLTE,214,1,10,100,0,inf,40.0,0,5,1,0,0,0\n"
        );
        let out = rows(&text);
        assert_eq!(out.len(), 4);
        assert_eq!(
            out[0].row.as_ref().unwrap_err().reason,
            RejectReason::FieldCount { expected: 14, found: 3 }
        );
        assert!(out[1].row.is_ok());
        assert_eq!(
            out[2].row.as_ref().unwrap_err().reason,
            RejectReason::NumericOutOfRange { column: "cell" }
        );
        assert_eq!(
            out[3].row.as_ref().unwrap_err().reason,
            RejectReason::NumericOutOfRange { column: "lon" }
        );
        assert_eq!(out.iter().map(|l| l.line).collect::<Vec<_>>(), vec![2, 3, 4, 5]);
    }

    #[test]
    fn headerless_custom_layout() {
        let schema = Schema {
            has_header: false,
            field_count: 9,
            radio: 8,
            mcc: 0,
            net: 1,
            area: 2,
            cell: 3,
            lon: 4,
            lat: 5,
            range: 6,
            samples: 7,
        };
        schema.check().unwrap();
        let out: Vec<_> = parse_csv("214,7,5,9,2.1,41.4,0,300,umts\n".as_bytes(), &schema)
            .collect::<Result<_, _>>()
            .unwrap();
        let row = out[0].row.as_ref().unwrap();
        assert_eq!((row.radio.as_str(), row.net, row.cell, row.samples), ("umts", 7, 9, 300));
        assert_eq!(out[0].line, 1);
    }

    #[test]
    fn schema_check_catches_collisions() {
        let schema = Schema {
            lat: 6,
            ..Schema::default()
        };
        assert!(schema.check().is_err());
        let schema = Schema {
            field_count: 8,
            ..Schema::default()
        };
        assert!(schema.check().is_err());
    }

    #[test]
    fn gzip_is_detected() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let text = format!("{HEADER}\nLTE,214,1,10,100,0,-3.70,40.00,1000,500,1,0,0,0\n");
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(text.as_bytes()).unwrap();
        let gz = enc.finish().unwrap();
        let mut out = String::new();
        maybe_gunzip(io::Cursor::new(gz)).unwrap().read_to_string(&mut out).unwrap();
        assert_eq!(out, text);
    }
}
