//! Dataset loading and preparation: CSV parsing, ordinal encoding of
//! categorical columns, min-max scaling, and the 1-d to 2-d layout used by
//! the convolutional encoder.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("header does not match schema: expected {expected:?}, found {found:?}")]
    Header {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row}: expected {expected} cells, found {found}")]
    CellCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: label {value:?} has no mapping")]
    UnmappedLabel { row: usize, value: String },
    #[error("row {row}, column {column:?}: {value:?} is not a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("record {0} carries no label")]
    Unlabeled(usize),
    #[error("no records to fit on")]
    Empty,
    #[error("scaler width {expected} does not match record width {found}")]
    Width { expected: usize, found: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Attack,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Attack => "attack",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "normal" => Some(Label::Normal),
            "attack" => Some(Label::Attack),
            _ => None,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Normal => Label::Attack,
            Label::Attack => Label::Normal,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Column layout of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    /// Whether the first row of the file is a header.
    #[serde(default = "default_true")]
    pub header: bool,
    pub columns: Vec<ColumnSpec>,
    /// Raw label text to binary label.
    #[serde(default)]
    pub label_mapping: BTreeMap<String, Label>,
    /// Label given to label text missing from `label_mapping`. When absent,
    /// such text is an error.
    #[serde(default)]
    pub unmapped_label: Option<Label>,
}

fn default_true() -> bool {
    true
}

impl DatasetSchema {
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let schema: DatasetSchema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Open {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(IngestError::Schema(format!("duplicate column {:?}", c.name)));
            }
        }
        let labels = self.columns.iter().filter(|c| c.kind == ColumnKind::Label).count();
        if labels > 1 {
            return Err(IngestError::Schema(format!("{labels} label columns; at most one allowed")));
        }
        if self.feature_width() == 0 {
            return Err(IngestError::Schema("no numeric or categorical columns".into()));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Number of encoded features (`d`).
    pub fn feature_width(&self) -> usize {
        self.feature_columns().count()
    }

    pub fn feature_columns(&self) -> impl Iterator<Item = (usize, &ColumnSpec)> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.kind, ColumnKind::Numeric | ColumnKind::Categorical))
    }

    pub fn label_column(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.kind == ColumnKind::Label)
    }

    fn map_label(&self, row: usize, text: &str) -> Result<Label, IngestError> {
        self.label_mapping
            .get(text)
            .copied()
            .or(self.unmapped_label)
            .ok_or_else(|| IngestError::UnmappedLabel {
                row,
                value: text.to_string(),
            })
    }
}

/// One traffic record.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub raw: Vec<String>,
    /// Scaled feature vector; empty until [`encode_and_scale`] runs.
    pub encoded: Vec<f64>,
    pub label: Option<Label>,
}

pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<Vec<FeatureRecord>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Open {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, schema)
}

/// Parses CSV rows into records. Row numbers in errors are 1-based and count
/// data rows only.
pub fn read_csv<R: Read>(reader: R, schema: &DatasetSchema) -> Result<Vec<FeatureRecord>, IngestError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    if schema.header {
        let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let expected = schema.column_names();
        // an empty file has no header at all
        if !(found.is_empty() || found.len() == 1 && found[0].is_empty()) && found != expected {
            return Err(IngestError::Header { expected, found });
        }
    }
    let label_col = schema.label_column();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        if row.len() != schema.width() {
            return Err(IngestError::CellCount {
                row: row_no,
                expected: schema.width(),
                found: row.len(),
            });
        }
        let raw: Vec<String> = row.iter().map(str::to_string).collect();
        let label = match label_col {
            Some(c) => Some(schema.map_label(row_no, &raw[c])?),
            None => None,
        };
        out.push(FeatureRecord {
            raw,
            encoded: Vec::new(),
            label,
        });
    }
    Ok(out)
}

/// Ordinal codes for categorical columns, keyed by column name. Codes start
/// at 1; 0 is reserved for values not seen during fitting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalEncoder {
    pub columns: BTreeMap<String, BTreeMap<String, u32>>,
}

pub const UNSEEN_CODE: u32 = 0;

impl CategoricalEncoder {
    pub fn code(&self, column: &str, value: &str) -> u32 {
        self.columns
            .get(column)
            .and_then(|m| m.get(value))
            .copied()
            .unwrap_or(UNSEEN_CODE)
    }
}

/// Assigns codes `1..=k` to each categorical column's distinct training
/// values in lexicographic order.
pub fn fit_categorical(records: &[FeatureRecord], schema: &DatasetSchema) -> CategoricalEncoder {
    let mut columns = BTreeMap::new();
    for (idx, spec) in schema.columns.iter().enumerate() {
        if spec.kind != ColumnKind::Categorical {
            continue;
        }
        let values: BTreeSet<&str> = records.iter().map(|r| r.raw[idx].as_str()).collect();
        let codes = values
            .into_iter()
            .zip(1..)
            .map(|(v, c)| (v.to_string(), c))
            .collect();
        columns.insert(spec.name.clone(), codes);
    }
    CategoricalEncoder { columns }
}

/// Feature vector before scaling: categorical codes and parsed numbers.
pub fn numeralize(
    record: &FeatureRecord,
    row: usize,
    schema: &DatasetSchema,
    encoder: &CategoricalEncoder,
) -> Result<Vec<f64>, IngestError> {
    schema
        .feature_columns()
        .map(|(idx, spec)| {
            let cell = &record.raw[idx];
            match spec.kind {
                ColumnKind::Categorical => Ok(f64::from(encoder.code(&spec.name, cell))),
                _ => cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| IngestError::NonNumeric {
                        row,
                        column: spec.name.clone(),
                        value: cell.clone(),
                    }),
            }
        })
        .collect()
}

/// Per-feature min and max from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, IngestError> {
        let first = rows.first().ok_or(IngestError::Empty)?;
        let mut min = first.clone();
        let mut max = first.clone();
        for r in rows {
            if r.len() != min.len() {
                return Err(IngestError::Width {
                    expected: min.len(),
                    found: r.len(),
                });
            }
            for (k, &v) in r.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    /// `(x - min) / (max - min)` clipped to `[0, 1]`; constant features map to 0.
    pub fn transform(&self, values: &[f64]) -> Result<Vec<f64>, IngestError> {
        if values.len() != self.width() {
            return Err(IngestError::Width {
                expected: self.width(),
                found: values.len(),
            });
        }
        Ok(values
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| {
                if hi > lo {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// Fits the scaler on numeralized training records.
pub fn fit_scaler(
    records: &[FeatureRecord],
    schema: &DatasetSchema,
    encoder: &CategoricalEncoder,
) -> Result<MinMaxScaler, IngestError> {
    let rows = records
        .iter()
        .enumerate()
        .map(|(i, r)| numeralize(r, i + 1, schema, encoder))
        .collect::<Result<Vec<_>, _>>()?;
    MinMaxScaler::fit(&rows)
}

/// Fills `encoded` on every record.
pub fn encode_and_scale(
    mut records: Vec<FeatureRecord>,
    schema: &DatasetSchema,
    encoder: &CategoricalEncoder,
    scaler: &MinMaxScaler,
) -> Result<Vec<FeatureRecord>, IngestError> {
    for (i, r) in records.iter_mut().enumerate() {
        let values = numeralize(r, i + 1, schema, encoder)?;
        r.encoded = scaler.transform(&values)?;
    }
    Ok(records)
}

/// Fitted categorical encoder and scaler together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub encoder: CategoricalEncoder,
    pub scaler: MinMaxScaler,
}

impl Preprocessor {
    pub fn fit(train: &[FeatureRecord], schema: &DatasetSchema) -> Result<Self, IngestError> {
        if train.is_empty() {
            return Err(IngestError::Empty);
        }
        let encoder = fit_categorical(train, schema);
        let scaler = fit_scaler(train, schema, &encoder)?;
        Ok(Self { encoder, scaler })
    }

    pub fn apply(
        &self,
        records: Vec<FeatureRecord>,
        schema: &DatasetSchema,
    ) -> Result<Vec<FeatureRecord>, IngestError> {
        encode_and_scale(records, schema, &self.encoder, &self.scaler)
    }
}

/// Records whose label is normal, in input order.
pub fn filter_normal(records: &[FeatureRecord]) -> Result<Vec<FeatureRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match r.label {
            Some(Label::Normal) => out.push(r.clone()),
            Some(Label::Attack) => {}
            None => return Err(IngestError::Unlabeled(i)),
        }
    }
    Ok(out)
}

/// A record vector laid out row-major on a `rows x cols` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub rows: usize,
    pub cols: usize,
    pub grid: Vec<f64>,
    pub pad_count: usize,
}

impl FeatureMap {
    /// Grid extents for a `d`-dimensional vector: `ceil(sqrt d)` rows and
    /// `ceil(d / rows)` columns.
    pub fn extents(d: usize) -> (usize, usize) {
        let mut rows = (d as f64).sqrt() as usize;
        while rows * rows < d {
            rows += 1;
        }
        let rows = rows.max(1);
        (rows, d.div_ceil(rows).max(1))
    }

    pub fn flatten(&self) -> &[f64] {
        &self.grid
    }

    /// The original vector, padding removed.
    pub fn unpadded(&self) -> &[f64] {
        &self.grid[..self.grid.len() - self.pad_count]
    }
}

pub fn to_feature_map(encoded: &[f64]) -> FeatureMap {
    let (rows, cols) = FeatureMap::extents(encoded.len());
    let mut grid = encoded.to_vec();
    grid.resize(rows * cols, 0.0);
    FeatureMap {
        rows,
        cols,
        pad_count: rows * cols - encoded.len(),
        grid,
    }
}

/// Writes encoded records as `f0..f{d-1},label` with an empty label cell for
/// unlabeled records.
pub fn write_encoded<W: Write>(writer: W, records: &[FeatureRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    let d = records.first().map_or(0, |r| r.encoded.len());
    let mut header: Vec<String> = (0..d).map(|k| format!("f{k}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for r in records {
        let mut row: Vec<String> = r.encoded.iter().map(|v| v.to_string()).collect();
        row.push(r.label.map(|l| l.as_str().to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format produced by [`write_encoded`].
pub fn read_encoded<R: Read>(reader: R) -> Result<Vec<FeatureRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let width = rdr.headers()?.len();
    if width == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        if row.len() != width {
            return Err(IngestError::CellCount {
                row: row_no,
                expected: width,
                found: row.len(),
            });
        }
        let encoded = row
            .iter()
            .take(width - 1)
            .enumerate()
            .map(|(k, v)| {
                v.parse::<f64>().map_err(|_| IngestError::NonNumeric {
                    row: row_no,
                    column: format!("f{k}"),
                    value: v.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cell = &row[width - 1];
        let label = if cell.is_empty() {
            None
        } else {
            Some(Label::parse(cell).ok_or_else(|| IngestError::UnmappedLabel {
                row: row_no,
                value: cell.to_string(),
            })?)
        };
        out.push(FeatureRecord {
            raw: Vec::new(),
            encoded,
            label,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> DatasetSchema {
        DatasetSchema::from_json(
            r#"{
                "header": true,
                "columns": [
                    {"name": "duration", "kind": "numeric"},
                    {"name": "protocol_type", "kind": "categorical"},
                    {"name": "service", "kind": "categorical"},
                    {"name": "id", "kind": "ignore"},
                    {"name": "class", "kind": "label"}
                ],
                "label_mapping": {"normal": "normal", "neptune": "attack"}
            }"#,
        )
        .unwrap()
    }

    const CSV: &str = "duration,protocol_type,service,id,class\n\
                       0,tcp,http,a,normal\n\
                       5,udp,http,b,neptune\n\
                       10,icmp,http,c,normal\n";

    #[test]
    fn loads_rows_and_labels() {
        let recs = read_csv(CSV.as_bytes(), &schema()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[1].label, Some(Label::Attack));
        assert_eq!(filter_normal(&recs).unwrap().len(), 2);
    }

    #[test]
    fn header_only_file_is_empty() {
        let recs = read_csv("duration,protocol_type,service,id,class\n".as_bytes(), &schema()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn short_row_names_its_index() {
        let bad = "duration,protocol_type,service,id,class\n0,tcp,http,a,normal\n1,tcp,http,normal\n";
        match read_csv(bad.as_bytes(), &schema()) {
            Err(IngestError::CellCount { row, expected, found }) => {
                assert_eq!((row, expected, found), (2, 5, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unmapped_label_is_an_error_unless_defaulted() {
        let text = "duration,protocol_type,service,id,class\n0,tcp,http,a,smurf\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &schema()),
            Err(IngestError::UnmappedLabel { row: 1, .. })
        ));
        let mut s = schema();
        s.unmapped_label = Some(Label::Attack);
        assert_eq!(read_csv(text.as_bytes(), &s).unwrap()[0].label, Some(Label::Attack));
    }

    #[test]
    fn header_mismatch_is_reported() {
        let text = "dur,protocol_type,service,id,class\n";
        assert!(matches!(read_csv(text.as_bytes(), &schema()), Err(IngestError::Header { .. })));
    }

    #[test]
    fn schema_rejects_duplicates_and_double_labels() {
        let dup = r#"{"columns": [{"name": "a", "kind": "numeric"}, {"name": "a", "kind": "numeric"}]}"#;
        assert!(DatasetSchema::from_json(dup).is_err());
        let two = r#"{"columns": [{"name": "a", "kind": "numeric"}, {"name": "b", "kind": "label"}, {"name": "c", "kind": "label"}]}"#;
        assert!(DatasetSchema::from_json(two).is_err());
        let none = r#"{"columns": [{"name": "b", "kind": "label"}]}"#;
        assert!(DatasetSchema::from_json(none).is_err());
    }

    #[test]
    fn categorical_codes_are_lexicographic() {
        let recs = read_csv(CSV.as_bytes(), &schema()).unwrap();
        let enc = fit_categorical(&recs, &schema());
        let proto = &enc.columns["protocol_type"];
        assert_eq!(proto["icmp"], 1);
        assert_eq!(proto["tcp"], 2);
        assert_eq!(proto["udp"], 3);
        assert_eq!(enc.columns["service"].len(), 1);
        assert_eq!(enc.columns["service"]["http"], 1);
        assert_eq!(enc.code("protocol_type", "sctp"), UNSEEN_CODE);
        assert_eq!(fit_categorical(&recs, &schema()), enc);
    }

    #[test]
    fn scaling_follows_min_max() {
        let recs = read_csv(CSV.as_bytes(), &schema()).unwrap();
        let pre = Preprocessor::fit(&recs, &schema()).unwrap();
        let enc = pre.apply(recs, &schema()).unwrap();
        let durations: Vec<f64> = enc.iter().map(|r| r.encoded[0]).collect();
        assert_eq!(durations, vec![0.0, 0.5, 1.0]);
        // service is constant
        assert!(enc.iter().all(|r| r.encoded[2] == 0.0));
        assert_eq!(enc[0].encoded.len(), 3);
    }

    #[test]
    fn out_of_range_test_values_are_clipped() {
        let scaler = MinMaxScaler { min: vec![0.0, 3.0], max: vec![10.0, 3.0] };
        assert_eq!(scaler.transform(&[12.0, 3.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(scaler.transform(&[-4.0, 9.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn unseen_category_and_bad_number() {
        let recs = read_csv(CSV.as_bytes(), &schema()).unwrap();
        let pre = Preprocessor::fit(&recs, &schema()).unwrap();
        let test = read_csv(
            "duration,protocol_type,service,id,class\n3,sctp,ftp,z,normal\n".as_bytes(),
            &schema(),
        )
        .unwrap();
        let enc = pre.apply(test, &schema()).unwrap();
        assert_eq!(enc[0].encoded[1], 0.0);
        let bad = read_csv(
            "duration,protocol_type,service,id,class\nabc,tcp,http,z,normal\n".as_bytes(),
            &schema(),
        )
        .unwrap();
        assert!(matches!(pre.apply(bad, &schema()), Err(IngestError::NonNumeric { row: 1, .. })));
    }

    #[test]
    fn unlabeled_record_cannot_be_filtered() {
        let r = FeatureRecord { raw: vec![], encoded: vec![], label: None };
        assert!(matches!(filter_normal(&[r]), Err(IngestError::Unlabeled(0))));
    }

    #[test]
    fn all_attack_filters_to_empty() {
        let r = FeatureRecord { raw: vec![], encoded: vec![], label: Some(Label::Attack) };
        assert!(filter_normal(&[r.clone(), r]).unwrap().is_empty());
    }

    #[test]
    fn feature_map_extents() {
        let m = to_feature_map(&vec![0.5; 41]);
        assert_eq!((m.rows, m.cols, m.pad_count), (7, 6, 1));
        let m = to_feature_map(&vec![0.5; 16]);
        assert_eq!((m.rows, m.cols, m.pad_count), (4, 4, 0));
        assert_eq!(FeatureMap::extents(1), (1, 1));
        assert_eq!(FeatureMap::extents(42), (7, 6));
    }

    #[test]
    fn encoded_csv_roundtrip() {
        let recs = vec![
            FeatureRecord { raw: vec![], encoded: vec![0.1, 1.0 / 3.0], label: Some(Label::Normal) },
            FeatureRecord { raw: vec![], encoded: vec![0.0, 1.0], label: None },
        ];
        let mut buf = Vec::new();
        write_encoded(&mut buf, &recs).unwrap();
        assert_eq!(read_encoded(buf.as_slice()).unwrap(), recs);
    }

    proptest! {
        #[test]
        fn feature_map_roundtrip(v in prop::collection::vec(0.0f64..1.0, 1..200)) {
            let m = to_feature_map(&v);
            prop_assert!(m.rows * m.cols >= v.len());
            prop_assert_eq!(m.rows * m.cols - v.len(), m.pad_count);
            prop_assert_eq!(m.unpadded(), v.as_slice());
            prop_assert!(m.grid[v.len()..].iter().all(|&z| z == 0.0));
        }

        #[test]
        fn scaled_values_are_in_unit_interval_and_refit_is_idempotent(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..30),
            probe in prop::collection::vec(-5e3f64..5e3, 4),
        ) {
            let scaler = MinMaxScaler::fit(&rows).unwrap();
            let scaled: Vec<Vec<f64>> = rows.iter().map(|r| scaler.transform(r).unwrap()).collect();
            for r in scaled.iter().chain(std::iter::once(&scaler.transform(&probe).unwrap())) {
                prop_assert!(r.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
            let refit = MinMaxScaler::fit(&scaled).unwrap();
            for r in &scaled {
                prop_assert_eq!(&refit.transform(r).unwrap(), r);
            }
        }
    }
}
