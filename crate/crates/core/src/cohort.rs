//! Cohort representation, CSV input/output and label/feature preprocessing.
//!
//! A cohort file is plain comma-separated text without quoting. The first
//! column holds the record id, the second the label (`POS`, `NEG` or
//! `UNKNOWN`, any case), and the remaining columns the features named in the
//! [`FeatureSchema`]. Binary cells are literal `0`/`1`; continuous cells are
//! finite decimal numbers.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::format::sig17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Pos,
    Neg,
    Unknown,
}

impl Label {
    pub fn is_labeled(self) -> bool {
        self != Label::Unknown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pos => "POS",
            Label::Neg => "NEG",
            Label::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "POS" => Ok(Label::Pos),
            "NEG" => Ok(Label::Neg),
            "UNKNOWN" => Ok(Label::Unknown),
            _ => Err(format!("label {s:?} is not one of POS, NEG, UNKNOWN")),
        }
    }
}

/// Column roles. The order of `binary_names` and `continuous_names` fixes the
/// feature indices used by every downstream computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    binary_names: Vec<String>,
    continuous_names: Vec<String>,
    label_column: String,
    id_column: String,
}

pub(crate) fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '+' | '-'))
}

impl FeatureSchema {
    pub fn new(
        id_column: impl Into<String>,
        label_column: impl Into<String>,
        binary_names: Vec<String>,
        continuous_names: Vec<String>,
    ) -> Result<Self> {
        let schema = Self {
            binary_names,
            continuous_names,
            label_column: label_column.into(),
            id_column: id_column.into(),
        };
        let mut seen = HashSet::new();
        for name in schema.columns() {
            if !valid_name(name) {
                return Err(Error::InvalidSchema(format!(
                    "column name {name:?} must match [A-Za-z0-9._+-]+"
                )));
            }
            if !seen.insert(name) {
                return Err(Error::InvalidSchema(format!("column {name:?} appears twice")));
            }
        }
        Ok(schema)
    }

    /// Schema with binary features only, using `id`/`label` as column names.
    pub fn binary(names: &[&str]) -> Result<Self> {
        Self::new("id", "label", names.iter().map(|s| s.to_string()).collect(), vec![])
    }

    pub fn binary_names(&self) -> &[String] {
        &self.binary_names
    }

    pub fn continuous_names(&self) -> &[String] {
        &self.continuous_names
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn id_column(&self) -> &str {
        &self.id_column
    }

    pub fn n_binary(&self) -> usize {
        self.binary_names.len()
    }

    pub fn n_continuous(&self) -> usize {
        self.continuous_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_binary() + self.n_continuous()
    }

    /// All columns in canonical file order.
    pub fn columns(&self) -> impl Iterator<Item = &str> {
        [self.id_column.as_str(), self.label_column.as_str()]
            .into_iter()
            .chain(self.binary_names.iter().map(String::as_str))
            .chain(self.continuous_names.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub binary: BitVector,
    pub continuous: Vec<f64>,
    pub label: Label,
}

impl Record {
    pub fn new(id: impl Into<String>, binary: BitVector, continuous: Vec<f64>, label: Label) -> Self {
        Self {
            id: id.into(),
            binary,
            continuous,
            label,
        }
    }
}

/// Validated, immutable set of records sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    schema: FeatureSchema,
    records: Vec<Record>,
    continuous_ranges: Vec<(f64, f64)>,
    index: HashMap<String, usize>,
}

impl Cohort {
    pub fn new(schema: FeatureSchema, records: Vec<Record>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.binary.len() != schema.n_binary() {
                return Err(Error::LengthMismatch {
                    left: r.binary.len(),
                    right: schema.n_binary(),
                });
            }
            if r.continuous.len() != schema.n_continuous() {
                return Err(Error::LengthMismatch {
                    left: r.continuous.len(),
                    right: schema.n_continuous(),
                });
            }
            if let Some(v) = r.continuous.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidArguments(format!(
                    "record {:?} has non-finite continuous value {v}",
                    r.id
                )));
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        let continuous_ranges = compute_ranges(schema.n_continuous(), &records);
        Ok(Self {
            schema,
            records,
            continuous_ranges,
            index,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-continuous-feature `(min, max)` over all records, labeled or not.
    pub fn continuous_ranges(&self) -> &[(f64, f64)] {
        &self.continuous_ranges
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.position(id).map(|i| &self.records[i])
    }

    /// Indices of POS/NEG records, in cohort order.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].label.is_labeled())
            .collect()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    /// Copy of the cohort with one record relabeled.
    pub fn with_label(&self, id: &str, label: Label) -> Result<Cohort> {
        let i = self.position(id).ok_or_else(|| Error::UnknownRecord(id.to_string()))?;
        let mut out = self.clone();
        out.records[i].label = label;
        Ok(out)
    }

    /// Projects the cohort onto a subset of its feature columns (a "feature
    /// combination"), in the order given.
    pub fn select_features(&self, binary: &[String], continuous: &[String]) -> Result<Cohort> {
        let lookup = |names: &[String], pool: &[String]| -> Result<Vec<usize>> {
            names
                .iter()
                .map(|n| {
                    pool.iter().position(|p| p == n).ok_or_else(|| Error::SchemaMismatch {
                        expected: n.clone(),
                        found: "<absent from cohort>".to_string(),
                    })
                })
                .collect()
        };
        let bin_idx = lookup(binary, self.schema.binary_names())?;
        let cont_idx = lookup(continuous, self.schema.continuous_names())?;
        let schema = FeatureSchema::new(
            self.schema.id_column.clone(),
            self.schema.label_column.clone(),
            binary.to_vec(),
            continuous.to_vec(),
        )?;
        let records = self
            .records
            .iter()
            .map(|r| Record {
                id: r.id.clone(),
                binary: r.binary.select(&bin_idx),
                continuous: cont_idx.iter().map(|&j| r.continuous[j]).collect(),
                label: r.label,
            })
            .collect();
        Cohort::new(schema, records)
    }
}

fn compute_ranges(n_continuous: usize, records: &[Record]) -> Vec<(f64, f64)> {
    (0..n_continuous)
        .map(|j| {
            let mut it = records.iter().map(|r| r.continuous[j]);
            match it.next() {
                None => (0.0, 0.0),
                Some(first) => it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))),
            }
        })
        .collect()
}

pub fn load_cohort(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Cohort> {
    let file = File::open(path)?;
    read_cohort(BufReader::new(file), schema)
}

/// Parses cohort CSV from any reader. Feature columns may appear in any order
/// in the header; each must belong to `schema` and all schema columns must be
/// present.
pub fn read_cohort<R: BufRead>(reader: R, schema: &FeatureSchema) -> Result<Cohort> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(Error::SchemaMismatch {
                expected: schema.id_column.clone(),
                found: "<empty file>".to_string(),
            })
        }
    };
    let header = header.trim_end_matches('\r');
    let header = header.strip_prefix('\u{feff}').unwrap_or(header);
    let layout = ColumnLayout::from_header(header, schema)?;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (offset, line) in lines.enumerate() {
        let line_no = offset + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let record = layout.parse_row(line, line_no, schema)?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        records.push(record);
    }
    Cohort::new(schema.clone(), records)
}

#[derive(Clone, Copy)]
enum Slot {
    Binary(usize),
    Continuous(usize),
}

struct ColumnLayout {
    slots: Vec<Slot>,
}

impl ColumnLayout {
    fn from_header(header: &str, schema: &FeatureSchema) -> Result<Self> {
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let mismatch = |expected: &str, found: &str| Error::SchemaMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        };
        let end = "<end of header>";
        match cols.first() {
            Some(&c) if c == schema.id_column => {}
            other => return Err(mismatch(&schema.id_column, other.copied().unwrap_or(end))),
        }
        match cols.get(1) {
            Some(&c) if c == schema.label_column => {}
            other => return Err(mismatch(&schema.label_column, other.copied().unwrap_or(end))),
        }

        let mut wanted: HashMap<&str, Slot> = HashMap::new();
        for (i, n) in schema.binary_names.iter().enumerate() {
            wanted.insert(n, Slot::Binary(i));
        }
        for (i, n) in schema.continuous_names.iter().enumerate() {
            wanted.insert(n, Slot::Continuous(i));
        }
        let first_missing = |wanted: &HashMap<&str, Slot>| -> String {
            schema
                .binary_names
                .iter()
                .chain(&schema.continuous_names)
                .find(|n| wanted.contains_key(n.as_str()))
                .cloned()
                .unwrap_or_default()
        };

        let mut slots = Vec::with_capacity(cols.len() - 2);
        for &c in &cols[2..] {
            match wanted.remove(c) {
                Some(slot) => slots.push(slot),
                None => {
                    let expected = first_missing(&wanted);
                    let expected = if expected.is_empty() { end.to_string() } else { expected };
                    return Err(mismatch(&expected, c));
                }
            }
        }
        if !wanted.is_empty() {
            return Err(mismatch(&first_missing(&wanted), end));
        }
        Ok(Self { slots })
    }

    fn parse_row(&self, line: &str, line_no: usize, schema: &FeatureSchema) -> Result<Record> {
        let malformed = |reason: String| Error::MalformedRow { line: line_no, reason };
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != self.slots.len() + 2 {
            return Err(malformed(format!(
                "expected {} cells, found {}",
                self.slots.len() + 2,
                cells.len()
            )));
        }
        let id = cells[0];
        if id.is_empty() {
            return Err(malformed("empty record id".to_string()));
        }
        let label: Label = cells[1].parse().map_err(malformed)?;

        let mut binary = BitVector::zeros(schema.n_binary());
        let mut continuous = vec![0.0; schema.n_continuous()];
        for (slot, &cell) in self.slots.iter().zip(&cells[2..]) {
            match *slot {
                Slot::Binary(j) => match cell {
                    "0" => {}
                    "1" => binary.set(j, true),
                    _ => {
                        return Err(malformed(format!(
                            "binary column {:?} has value {cell:?}, expected 0 or 1",
                            schema.binary_names[j]
                        )))
                    }
                },
                Slot::Continuous(j) => {
                    let name = &schema.continuous_names[j];
                    if cell.is_empty() {
                        return Err(malformed(format!("continuous column {name:?} is empty")));
                    }
                    match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => continuous[j] = v,
                        _ => {
                            return Err(malformed(format!(
                                "continuous column {name:?} has non-numeric value {cell:?}"
                            )))
                        }
                    }
                }
            }
        }
        Ok(Record::new(id, binary, continuous, label))
    }
}

/// Writes `cohort` in canonical column order. Continuous values are printed
/// with 17 significant digits so that reading the file back is exact.
pub fn write_cohort<W: Write>(cohort: &Cohort, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    let header: Vec<&str> = cohort.schema().columns().collect();
    writeln!(w, "{}", header.join(","))?;
    for r in cohort.records() {
        write!(w, "{},{}", r.id, r.label)?;
        for b in r.binary.iter() {
            w.write_all(if b { b",1" } else { b",0" })?;
        }
        for &v in &r.continuous {
            write!(w, ",{}", sig17(v))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    write_cohort(cohort, File::create(path)?)
}

/// Collapses a record's ejection-fraction history to a label using its lowest
/// value: `<= 30` is NEG, `(30, 50]` is UNKNOWN (mid-range), `> 50` is POS.
pub fn aggregate_ef(measurements: &[f64]) -> Result<Label> {
    if measurements.is_empty() {
        return Err(Error::EmptyMeasurements);
    }
    if let Some(&v) = measurements
        .iter()
        .find(|v| !v.is_finite() || !(0.0..=100.0).contains(*v))
    {
        return Err(Error::OutOfRange(v));
    }
    let lowest = measurements.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if lowest <= 30.0 {
        Label::Neg
    } else if lowest <= 50.0 {
        Label::Unknown
    } else {
        Label::Pos
    })
}

/// Drops binary features whose prevalence among labeled records is strictly
/// below `lo` or strictly above `hi`. Continuous features are always kept.
pub fn prevalence_filter(cohort: &Cohort, lo: f64, hi: f64) -> Result<Cohort> {
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidArguments(format!(
            "prevalence bounds must satisfy 0 <= lo < hi <= 1, got lo={lo}, hi={hi}"
        )));
    }
    let labeled: Vec<&Record> = cohort.records().iter().filter(|r| r.label.is_labeled()).collect();
    if labeled.is_empty() {
        return Err(Error::NoLabeledRecords);
    }
    let n = labeled.len() as f64;
    let keep: Vec<String> = cohort
        .schema()
        .binary_names()
        .iter()
        .enumerate()
        .filter(|&(j, _)| {
            let present = labeled.iter().filter(|r| r.binary.get(j)).count();
            let p = present as f64 / n;
            !(p < lo || p > hi)
        })
        .map(|(_, name)| name.clone())
        .collect();
    cohort.select_features(&keep, cohort.schema().continuous_names())
}
