//! Dataset container, CSV ingestion and train/test splitting.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::rng;
use crate::schema::{FeatureKind, FeatureSpec, Schema};

/// A single cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    /// Index into the feature's categorical domain.
    Category(usize),
    Number(f64),
}

impl Value {
    pub fn as_category(self) -> Option<usize> {
        match self {
            Value::Category(c) => Some(c),
            Value::Number(_) => None,
        }
    }

    pub fn as_number(self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(x),
            Value::Category(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub values: Vec<Value>,
    /// `true` for the positive (second) label value.
    pub label: bool,
}

impl Record {
    pub fn new(values: Vec<Value>, label: bool) -> Self {
        Record { values, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Raw,
    Perturbed,
    ReconstructedSampled,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Raw => "raw",
            Provenance::Perturbed => "perturbed",
            Provenance::ReconstructedSampled => "reconstructed-sampled",
        })
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Provenance::Raw),
            "perturbed" => Ok(Provenance::Perturbed),
            "reconstructed-sampled" => Ok(Provenance::ReconstructedSampled),
            other => Err(Error::InvalidArgument(format!("unknown provenance {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<Schema>,
    records: Vec<Record>,
    provenance: Provenance,
}

impl Dataset {
    /// Validates every record against the schema.
    pub fn new(schema: Arc<Schema>, records: Vec<Record>, provenance: Provenance) -> Result<Self> {
        for (row, record) in records.iter().enumerate() {
            check_record(&schema, record, provenance).map_err(|msg| {
                Error::InvalidArgument(format!("record {row} does not fit schema: {msg}"))
            })?;
        }
        Ok(Dataset {
            schema,
            records,
            provenance,
        })
    }

    pub(crate) fn from_parts_unchecked(
        schema: Arc<Schema>,
        records: Vec<Record>,
        provenance: Provenance,
    ) -> Self {
        Dataset {
            schema,
            records,
            provenance,
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn require_provenance(&self, expected: Provenance) -> Result<()> {
        if self.provenance == expected {
            Ok(())
        } else {
            Err(Error::Provenance {
                expected: expected.to_string(),
                found: self.provenance.to_string(),
            })
        }
    }

    pub(crate) fn with_records(&self, records: Vec<Record>) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            records,
            provenance: self.provenance,
        }
    }

    /// Column values of feature `index`, as numbers.
    pub fn numeric_column(&self, index: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.values[index].as_number())
            .collect()
    }
}

fn check_record(schema: &Schema, record: &Record, provenance: Provenance) -> Result<(), String> {
    if record.values.len() != schema.num_features() {
        return Err(format!(
            "{} values for {} features",
            record.values.len(),
            schema.num_features()
        ));
    }
    for (value, feature) in record.values.iter().zip(&schema.features) {
        match (&feature.kind, value) {
            (FeatureKind::Categorical { domain }, Value::Category(c)) if *c < domain.len() => {}
            (FeatureKind::Numerical { lower, upper, .. }, Value::Number(x)) => {
                if !x.is_finite() {
                    return Err(format!("{:?} is not finite", feature.name));
                }
                if provenance != Provenance::Raw && (x < lower || x > upper) {
                    return Err(format!("{:?} value {x} outside [{lower}, {upper}]", feature.name));
                }
            }
            _ => return Err(format!("{:?} holds {value:?}", feature.name)),
        }
    }
    Ok(())
}

/// Rows dropped during ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped_missing: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "?" | "NA" | "NaN" | "nan")
}

fn parse_cell(feature: &FeatureSpec, cell: &str, row: usize) -> Result<Value> {
    let cell = cell.trim();
    let err = || Error::Parse {
        row,
        column: feature.name.clone(),
        value: cell.to_string(),
    };
    match &feature.kind {
        FeatureKind::Categorical { domain } => domain
            .iter()
            .position(|v| v == cell)
            .map(Value::Category)
            .ok_or_else(err),
        FeatureKind::Numerical { .. } => cell
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Value::Number)
            .ok_or_else(err),
    }
}

/// Load a headered CSV whose columns are the schema features followed by the label.
pub fn load_csv(path: impl AsRef<Path>, schema: Arc<Schema>) -> Result<Dataset> {
    load_csv_with_report(path, schema).map(|(d, _)| d)
}

pub fn load_csv_with_report(
    path: impl AsRef<Path>,
    schema: Arc<Schema>,
) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_reader(file, schema, Provenance::Raw, path)
}

/// Load randomized-response output written by [`write_csv`]. The caller
/// vouches that the file holds perturbed reports.
pub fn load_perturbed_csv(path: impl AsRef<Path>, schema: Arc<Schema>) -> Result<Dataset> {
    let path = path.as_ref();
    if !schema.is_categorical() {
        return Err(Error::Schema("perturbed data must be all-categorical".into()));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_reader(file, schema, Provenance::Perturbed, path).map(|(d, _)| d)
}

pub(crate) fn load_reader<R: std::io::Read>(
    reader: R,
    schema: Arc<Schema>,
    provenance: Provenance,
    path: &Path,
) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h?,
        None => return Err(Error::EmptyFile(path.to_path_buf())),
    };
    let expected = schema.column_names();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::HeaderMismatch {
            expected: expected.join(","),
            found: found.join(","),
        });
    }

    let mut report = LoadReport::default();
    let mut records = Vec::new();
    for (i, row) in rows.enumerate() {
        let row = row?;
        // 1-based data row number, not counting the header
        let row_no = i + 1;
        report.rows_read += 1;
        if row.len() != expected.len() {
            return Err(Error::Parse {
                row: row_no,
                column: "<row>".into(),
                value: format!("{} fields, expected {}", row.len(), expected.len()),
            });
        }
        if row.iter().any(is_missing) {
            report.rows_dropped_missing += 1;
            continue;
        }
        let values = schema
            .features
            .iter()
            .zip(row.iter())
            .map(|(f, cell)| parse_cell(f, cell, row_no))
            .collect::<Result<Vec<_>>>()?;
        let label = match parse_cell(&schema.label, &row[expected.len() - 1], row_no)? {
            Value::Category(c) => c == 1,
            Value::Number(_) => unreachable!("label is categorical"),
        };
        records.push(Record { values, label });
    }
    if report.rows_dropped_missing > 0 {
        log::warn!(
            "{}: dropped {} of {} rows with missing values",
            path.display(),
            report.rows_dropped_missing,
            report.rows_read
        );
    }
    Ok((Dataset::new(schema, records, provenance)?, report))
}

/// Shortest decimal text that parses back to the same `f64`.
pub(crate) fn format_raw_number(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn cell_text(feature: &FeatureSpec, value: Value) -> String {
    match (value, feature.domain()) {
        (Value::Category(c), Some(domain)) => domain[c].clone(),
        (Value::Number(x), _) => format_raw_number(x),
        (Value::Category(c), None) => c.to_string(),
    }
}

pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(dataset, file)
}

pub fn write_csv_to<W: std::io::Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let schema = dataset.schema();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.column_names())?;
    let label_domain = schema.label.domain().expect("label is categorical");
    for record in dataset.records() {
        let mut row: Vec<String> = schema
            .features
            .iter()
            .zip(&record.values)
            .map(|(f, &v)| cell_text(f, v))
            .collect();
        row.push(label_domain[usize::from(record.label)].clone());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Shuffle by `seed` and cut at `floor(0.8 N)`.
pub fn split_train_test(dataset: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "train/test split needs at least 2 records, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let n_train = n * 4 / 5;
    let pick = |idx: &[usize]| idx.iter().map(|&i| dataset.records[i].clone()).collect();
    Ok((
        dataset.with_records(pick(&order[..n_train])),
        dataset.with_records(pick(&order[n_train..])),
    ))
}

/// Keep `floor(fraction * |test|)` records (at least one), chosen uniformly
/// without replacement; original order is preserved.
pub fn subsample_test(test: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = test.len();
    if fraction == 1.0 || n == 0 {
        return Ok(test.clone());
    }
    // guard against 0.1 * 15060 = 1505.9999...
    let m = ((fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n);
    let mut chosen = index::sample(&mut rng::seeded(seed), n, m).into_vec();
    chosen.sort_unstable();
    Ok(test.with_records(chosen.into_iter().map(|i| test.records[i].clone()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(
                "toy",
                vec![
                    FeatureSpec::numerical("age", 0.0, 120.0, true).unwrap(),
                    FeatureSpec::categorical("color", vec!["red".into(), "blue".into()]).unwrap(),
                ],
                FeatureSpec::categorical("y", vec!["0".into(), "1".into()]).unwrap(),
                "gdp",
            )
            .unwrap(),
        )
    }

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn header_only_gives_empty_dataset() {
        let f = write_tmp("age,color,y\n");
        let d = load_csv(f.path(), schema()).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.provenance(), Provenance::Raw);
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("");
        assert!(matches!(load_csv(f.path(), schema()), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn header_mismatch() {
        let f = write_tmp("age,colour,y\n1,red,0\n");
        assert!(matches!(
            load_csv(f.path(), schema()),
            Err(Error::HeaderMismatch { .. })
        ));
    }

    #[test]
    fn parse_error_names_row_and_column() {
        let f = write_tmp("age,color,y\n3,red,1\nabc,blue,0\n");
        match load_csv(f.path(), schema()) {
            Err(Error::Parse { row, column, value }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "age");
                assert_eq!(value, "abc");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_rows_are_dropped_and_counted() {
        let f = write_tmp("age,color,y\n3,red,1\n?,blue,0\n4,,1\n5,blue,0\n");
        let (d, report) = load_csv_with_report(f.path(), schema()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(report.rows_read, 4);
        assert_eq!(report.rows_dropped_missing, 2);
    }

    #[test]
    fn csv_round_trip() {
        let f = write_tmp("age,color,y\n3,red,1\n4.25,blue,0\n");
        let d = load_csv(f.path(), schema()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, out.path()).unwrap();
        let back = load_csv(out.path(), schema()).unwrap();
        assert_eq!(back.records(), d.records());
    }

    fn numbered(n: usize) -> Dataset {
        let records = (0..n)
            .map(|i| Record::new(vec![Value::Number(i as f64), Value::Category(i % 2)], i % 3 == 0))
            .collect();
        Dataset::new(schema(), records, Provenance::Raw).unwrap()
    }

    #[test]
    fn split_sizes_and_partition() {
        let d = numbered(748);
        let (train, test) = split_train_test(&d, 3).unwrap();
        assert_eq!((train.len(), test.len()), (598, 150));
        let mut ids: Vec<f64> = train
            .records()
            .iter()
            .chain(test.records())
            .map(|r| r.values[0].as_number().unwrap())
            .collect();
        ids.sort_by(f64::total_cmp);
        assert_eq!(ids, (0..748).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_deterministic() {
        let d = numbered(10);
        let a = split_train_test(&d, 11).unwrap();
        let b = split_train_test(&d, 11).unwrap();
        assert_eq!(a.0.records(), b.0.records());
        assert_eq!(a.1.records(), b.1.records());
    }

    #[test]
    fn split_needs_two_records() {
        assert!(split_train_test(&numbered(1), 0).is_err());
    }

    #[test]
    fn subsample_sizes() {
        assert_eq!(subsample_test(&numbered(150), 0.75, 1).unwrap().len(), 112);
        assert_eq!(subsample_test(&numbered(15060), 0.1, 1).unwrap().len(), 1506);
        let d = numbered(20);
        assert_eq!(subsample_test(&d, 1.0, 1).unwrap().records(), d.records());
        assert!(subsample_test(&d, 0.0, 1).is_err());
        assert!(subsample_test(&d, 1.5, 1).is_err());
    }
}
