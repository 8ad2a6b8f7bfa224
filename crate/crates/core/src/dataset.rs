//! Employee population schema, CSV ingestion, scope curation and
//! stratified splitting.
//!
//! A [`Dataset`] is immutable once built: every transformation in this crate
//! returns a new dataset. Rows are validated against the [`Schema`] at
//! construction, so downstream code can index level values without checks.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding;

/// Column holding the opaque employee identifier.
pub const ID_COLUMN: &str = "id";
/// Column holding the cohort year tag.
pub const YEAR_COLUMN: &str = "year";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("header mismatch: missing columns {missing:?}, unexpected columns {unexpected:?}")]
    HeaderMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("row {row}, column {column:?}: unknown level {value:?}")]
    UnknownLevel {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: {value:?} is not a finite number")]
    NotNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}, column {column:?}: duplicate id {id:?}")]
    DuplicateId { row: usize, column: String, id: String },
    #[error("row {row}, column {column:?}: invalid label {value:?}")]
    InvalidLabel {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: invalid year {value:?}")]
    InvalidYear {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: unrecognized exit reason {value:?}")]
    InvalidExitReason {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: expected {expected} values, found {found}")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("split fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("cannot split {0} rows into two non-empty partitions")]
    TooFewRows(usize),
    #[error("row {row}: label is Unknown but known labels are required")]
    UnknownLabelPresent { row: usize },
    #[error("csv error: {0}")]
    Csv(String),
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        DatasetError::Csv(e.to_string())
    }
}

/// Value domain of a single feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical {
        levels: Vec<String>,
    },
    Numeric {
        #[serde(default)]
        unit: String,
    },
    /// Ordered bands such as tenure `0-2`, `3-7`, `8+`. When `cut_points` is
    /// present, raw numbers in the source are banded at load time: a value
    /// falls in band `i` where `i` is the number of cut points `<= value`.
    OrdinalBand {
        bands: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cut_points: Option<Vec<f64>>,
    },
}

impl FeatureKind {
    /// Level (or band) labels for discrete kinds, `None` for numeric.
    pub fn levels(&self) -> Option<&[String]> {
        match self {
            FeatureKind::Categorical { levels } => Some(levels),
            FeatureKind::OrdinalBand { bands, .. } => Some(bands),
            FeatureKind::Numeric { .. } => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, FeatureKind::Numeric { .. })
    }

    pub fn is_ordered(&self) -> bool {
        !matches!(self, FeatureKind::Categorical { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    /// Whether retention policies may rewrite this feature.
    #[serde(default)]
    pub actionable: bool,
}

impl FeatureSpec {
    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
            actionable: false,
        }
    }

    pub fn numeric(name: &str, unit: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Numeric {
                unit: unit.to_string(),
            },
            actionable: false,
        }
    }

    pub fn banded(name: &str, bands: &[&str], cut_points: Option<Vec<f64>>) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::OrdinalBand {
                bands: bands.iter().map(|s| s.to_string()).collect(),
                cut_points,
            },
            actionable: false,
        }
    }

    pub fn actionable(mut self) -> Self {
        self.actionable = true;
        self
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.kind.levels()?.iter().position(|l| l == level)
    }

    /// Parses a raw cell into a value, applying band cut points if declared.
    fn parse_cell(&self, raw: &str, row: usize) -> Result<Value, DatasetError> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err(DatasetError::MissingValue {
                row,
                column: self.name.clone(),
            });
        }
        match &self.kind {
            FeatureKind::Categorical { .. } => self
                .level_index(raw)
                .map(|i| Value::Level(i as u32))
                .ok_or_else(|| DatasetError::UnknownLevel {
                    row,
                    column: self.name.clone(),
                    value: raw.to_string(),
                }),
            FeatureKind::Numeric { .. } => match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Value::Number(v)),
                _ => Err(DatasetError::NotNumeric {
                    row,
                    column: self.name.clone(),
                    value: raw.to_string(),
                }),
            },
            FeatureKind::OrdinalBand { cut_points, .. } => {
                if let Some(i) = self.level_index(raw) {
                    return Ok(Value::Level(i as u32));
                }
                match (cut_points, raw.parse::<f64>()) {
                    (Some(cuts), Ok(v)) if v.is_finite() => {
                        let band = cuts.iter().filter(|&&c| c <= v).count();
                        Ok(Value::Level(band as u32))
                    }
                    _ => Err(DatasetError::UnknownLevel {
                        row,
                        column: self.name.clone(),
                        value: raw.to_string(),
                    }),
                }
            }
        }
    }

    /// Renders a value the way [`load_dataset`] reads it back.
    pub fn format_value(&self, value: &Value) -> String {
        match (value, self.kind.levels()) {
            (Value::Level(i), Some(levels)) => levels[*i as usize].clone(),
            (Value::Number(x), _) => format_number(*x),
            (Value::Level(i), None) => i.to_string(),
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub label_name: String,
    /// Pass-through text columns carried alongside each row, e.g. the raw
    /// exit reason consumed by [`curate_scope`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metadata_columns: Vec<String>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>, label_name: &str) -> Result<Self, DatasetError> {
        let schema = Schema {
            features,
            label_name: label_name.to_string(),
            metadata_columns: Vec::new(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn with_metadata(mut self, columns: &[&str]) -> Result<Self, DatasetError> {
        self.metadata_columns = columns.iter().map(|s| s.to_string()).collect();
        self.validate()?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let schema: Schema =
            serde_json::from_str(text).map_err(|e| DatasetError::InvalidSchema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |msg: String| Err(DatasetError::InvalidSchema(msg));
        if self.features.is_empty() {
            return bad("schema declares no features".into());
        }
        let mut seen = HashSet::new();
        let reserved = [ID_COLUMN, YEAR_COLUMN, self.label_name.as_str()];
        for f in &self.features {
            if f.name.is_empty() {
                return bad("empty feature name".into());
            }
            if !seen.insert(f.name.as_str()) {
                return bad(format!("duplicate feature name {:?}", f.name));
            }
            if reserved.contains(&f.name.as_str()) {
                return bad(format!("feature name {:?} collides with a reserved column", f.name));
            }
            if let Some(levels) = f.kind.levels() {
                if levels.is_empty() {
                    return bad(format!("feature {:?} declares no levels", f.name));
                }
                let distinct: HashSet<_> = levels.iter().collect();
                if distinct.len() != levels.len() {
                    return bad(format!("feature {:?} has duplicate levels", f.name));
                }
            }
            if let FeatureKind::OrdinalBand {
                bands,
                cut_points: Some(cuts),
            } = &f.kind
            {
                if cuts.len() + 1 != bands.len() {
                    return bad(format!(
                        "feature {:?}: {} bands need {} cut points, found {}",
                        f.name,
                        bands.len(),
                        bands.len() - 1,
                        cuts.len()
                    ));
                }
                if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
                    return bad(format!(
                        "feature {:?}: cut points must be finite and strictly increasing",
                        f.name
                    ));
                }
            }
        }
        for m in &self.metadata_columns {
            if seen.contains(m.as_str()) || reserved.contains(&m.as_str()) {
                return bad(format!("metadata column {m:?} collides with another column"));
            }
        }
        Ok(())
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    /// Expected CSV header: id, features, label, year, metadata.
    pub fn header(&self) -> Vec<String> {
        let mut cols = vec![ID_COLUMN.to_string()];
        cols.extend(self.features.iter().map(|f| f.name.clone()));
        cols.push(self.label_name.clone());
        cols.push(YEAR_COLUMN.to_string());
        cols.extend(self.metadata_columns.iter().cloned());
        cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Active,
    Terminated,
    Unknown,
}

impl Label {
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim() {
            "Active" => Some(Label::Active),
            "Terminated" => Some(Label::Terminated),
            "Unknown" => Some(Label::Unknown),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Active => "Active",
            Label::Terminated => "Terminated",
            Label::Unknown => "Unknown",
        }
    }

    pub fn is_known(&self) -> bool {
        *self != Label::Unknown
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single cell. Categorical and band values are stored as indices into
/// the feature's declared level list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Level(u32),
    Number(f64),
}

impl Value {
    pub fn level(&self) -> Option<usize> {
        match self {
            Value::Level(i) => Some(*i as usize),
            Value::Number(_) => None,
        }
    }

    pub fn number(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            Value::Level(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmployeeRecord {
    pub id: String,
    pub values: Vec<Value>,
    pub label: Label,
    pub year: u16,
    pub metadata: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    rows: Vec<EmployeeRecord>,
}

impl Dataset {
    /// Builds a dataset, validating every row against the schema.
    pub fn new(schema: Arc<Schema>, rows: Vec<EmployeeRecord>) -> Result<Self, DatasetError> {
        let mut ids = HashSet::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            validate_record(&schema, r, i + 1)?;
            if !ids.insert(r.id.as_str()) {
                return Err(DatasetError::DuplicateId {
                    row: i + 1,
                    column: ID_COLUMN.into(),
                    id: r.id.clone(),
                });
            }
        }
        Ok(Dataset { schema, rows })
    }

    pub fn empty(schema: Arc<Schema>) -> Self {
        Dataset {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    pub fn rows(&self) -> &[EmployeeRecord] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<EmployeeRecord> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.id.as_str()).collect()
    }

    pub fn find(&self, id: &str) -> Option<&EmployeeRecord> {
        self.rows.iter().find(|r| r.id == id)
    }

    /// Rows at the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Rebuilds a dataset over the same schema from new rows.
    pub fn with_rows(&self, rows: Vec<EmployeeRecord>) -> Result<Dataset, DatasetError> {
        Dataset::new(Arc::clone(&self.schema), rows)
    }

    /// Counts of (Active, Terminated, Unknown).
    pub fn class_counts(&self) -> (usize, usize, usize) {
        self.rows.iter().fold((0, 0, 0), |(a, t, u), r| match r.label {
            Label::Active => (a + 1, t, u),
            Label::Terminated => (a, t + 1, u),
            Label::Unknown => (a, t, u + 1),
        })
    }

    pub fn require_known_labels(&self) -> Result<(), DatasetError> {
        match self.rows.iter().position(|r| r.label == Label::Unknown) {
            Some(i) => Err(DatasetError::UnknownLabelPresent { row: i + 1 }),
            None => Ok(()),
        }
    }

    pub fn column(&self, feature: usize) -> Vec<Value> {
        self.rows.iter().map(|r| r.values[feature]).collect()
    }

    /// Writes the dataset in the same CSV layout [`load_dataset`] reads.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema.header())?;
        for r in &self.rows {
            let mut rec = Vec::with_capacity(self.schema.features.len() + 3);
            rec.push(r.id.clone());
            for (f, v) in self.schema.features.iter().zip(&r.values) {
                rec.push(f.format_value(v));
            }
            rec.push(r.label.as_str().to_string());
            rec.push(r.year.to_string());
            rec.extend(r.metadata.iter().cloned());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| DatasetError::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv write");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

fn validate_record(schema: &Schema, r: &EmployeeRecord, row: usize) -> Result<(), DatasetError> {
    if r.values.len() != schema.features.len() {
        return Err(DatasetError::Arity {
            row,
            expected: schema.features.len(),
            found: r.values.len(),
        });
    }
    if r.metadata.len() != schema.metadata_columns.len() {
        return Err(DatasetError::Arity {
            row,
            expected: schema.metadata_columns.len(),
            found: r.metadata.len(),
        });
    }
    if r.id.is_empty() {
        return Err(DatasetError::MissingValue {
            row,
            column: ID_COLUMN.into(),
        });
    }
    for (f, v) in schema.features.iter().zip(&r.values) {
        match (v, f.kind.levels()) {
            (Value::Level(i), Some(levels)) if (*i as usize) < levels.len() => {}
            (Value::Number(x), None) if x.is_finite() => {}
            (Value::Number(x), None) => {
                return Err(DatasetError::NotNumeric {
                    row,
                    column: f.name.clone(),
                    value: x.to_string(),
                })
            }
            _ => {
                return Err(DatasetError::UnknownLevel {
                    row,
                    column: f.name.clone(),
                    value: format!("{v:?}"),
                })
            }
        }
    }
    Ok(())
}

/// Reads header-bearing comma-delimited text. Columns may appear in any
/// order but must be exactly: `id`, every feature, the label, `year`, and any
/// declared metadata columns. Row numbers in errors count data rows from 1.
pub fn load_dataset<R: Read>(source: R, schema: Arc<Schema>) -> Result<Dataset, DatasetError> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();

    let expected = schema.header();
    let missing: Vec<String> = expected
        .iter()
        .filter(|c| !header.contains(c))
        .cloned()
        .collect();
    let mut unexpected: Vec<String> = header
        .iter()
        .filter(|c| !expected.contains(c))
        .cloned()
        .collect();
    let mut dup = HashSet::new();
    for h in &header {
        if !dup.insert(h) && !unexpected.contains(h) {
            unexpected.push(h.clone());
        }
    }
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(DatasetError::HeaderMismatch {
            missing,
            unexpected,
        });
    }
    let pos = |name: &str| header.iter().position(|h| h == name).expect("checked above");
    let id_col = pos(ID_COLUMN);
    let label_col = pos(&schema.label_name);
    let year_col = pos(YEAR_COLUMN);
    let feature_cols: Vec<usize> = schema.features.iter().map(|f| pos(&f.name)).collect();
    let meta_cols: Vec<usize> = schema.metadata_columns.iter().map(|m| pos(m)).collect();

    let mut rows = Vec::new();
    let mut ids = HashSet::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| DatasetError::Csv(format!("row {row}: {e}")))?;
        let id = rec[id_col].to_string();
        if id.is_empty() {
            return Err(DatasetError::MissingValue {
                row,
                column: ID_COLUMN.into(),
            });
        }
        if !ids.insert(id.clone()) {
            return Err(DatasetError::DuplicateId {
                row,
                column: ID_COLUMN.into(),
                id,
            });
        }
        let values = schema
            .features
            .iter()
            .zip(&feature_cols)
            .map(|(f, &c)| f.parse_cell(&rec[c], row))
            .collect::<Result<Vec<_>, _>>()?;
        let label = Label::parse(&rec[label_col]).ok_or_else(|| DatasetError::InvalidLabel {
            row,
            column: schema.label_name.clone(),
            value: rec[label_col].to_string(),
        })?;
        let year = rec[year_col]
            .parse::<u16>()
            .map_err(|_| DatasetError::InvalidYear {
                row,
                column: YEAR_COLUMN.into(),
                value: rec[year_col].to_string(),
            })?;
        let metadata = meta_cols.iter().map(|&c| rec[c].to_string()).collect();
        rows.push(EmployeeRecord {
            id,
            values,
            label,
            year,
            metadata,
        });
    }
    Ok(Dataset { schema, rows })
}

/// Raw exit reasons recognized by [`curate_scope`].
pub const EXIT_VOLUNTARY: &str = "voluntary";
pub const EXIT_INVOLUNTARY: &str = "involuntary";
pub const EXIT_RETIREMENT: &str = "retirement";
pub const EXIT_NONE: &str = "none";

/// Restricts a population to the voluntary-turnover scope: involuntary and
/// retirement exits are dropped, voluntary exits become `Terminated` and
/// stayers become `Active`. Feature values are never touched.
pub fn curate_scope(ds: &Dataset, exit_reason_column: &str) -> Result<Dataset, DatasetError> {
    let col = ds
        .schema
        .metadata_columns
        .iter()
        .position(|m| m == exit_reason_column)
        .ok_or_else(|| DatasetError::UnknownColumn(exit_reason_column.to_string()))?;
    let mut kept = Vec::with_capacity(ds.len());
    for (i, r) in ds.rows.iter().enumerate() {
        let label = match r.metadata[col].as_str() {
            EXIT_VOLUNTARY => Label::Terminated,
            EXIT_NONE => Label::Active,
            EXIT_INVOLUNTARY | EXIT_RETIREMENT => continue,
            other => {
                return Err(DatasetError::InvalidExitReason {
                    row: i + 1,
                    column: exit_reason_column.to_string(),
                    value: other.to_string(),
                })
            }
        };
        kept.push(EmployeeRecord {
            label,
            ..r.clone()
        });
    }
    Ok(Dataset {
        schema: Arc::clone(&ds.schema),
        rows: kept,
    })
}

/// Which row attributes define a stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strata {
    pub label: bool,
    pub year: bool,
}

impl Strata {
    pub const LABEL_AND_YEAR: Strata = Strata {
        label: true,
        year: true,
    };
    pub const LABEL: Strata = Strata {
        label: true,
        year: false,
    };
}

/// Splits `ds` so that each stratum contributes `fraction` of its rows to
/// the first partition.
///
/// Strata are visited in (label, year) order and allocations use cumulative
/// rounding: after visiting strata with `c` rows in total the first partition
/// holds exactly `round(fraction * c)` of them. Every stratum therefore gets
/// `floor` or `ceil` of its own share, and singleton strata alternate between
/// partitions instead of all landing on one side. Both partitions keep the
/// input row order.
pub fn split_stratified(
    ds: &Dataset,
    fraction: f64,
    strata: Strata,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(fraction));
    }
    if ds.len() < 2 {
        return Err(DatasetError::TooFewRows(ds.len()));
    }
    let mut groups: BTreeMap<(Option<Label>, Option<u16>), Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.rows.iter().enumerate() {
        let key = (
            strata.label.then_some(r.label),
            strata.year.then_some(r.year),
        );
        groups.entry(key).or_default().push(i);
    }
    let mut rng = seeding::rng(seed, seeding::Stream::Split);
    let mut first = Vec::new();
    let mut second = Vec::new();
    let mut cumulative = 0usize;
    let mut allocated = 0usize;
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        cumulative += members.len();
        let target = (fraction * cumulative as f64).round() as usize;
        let take = target - allocated;
        allocated = target;
        first.extend_from_slice(&members[..take]);
        second.extend_from_slice(&members[take..]);
    }
    if first.is_empty() || second.is_empty() {
        return Err(DatasetError::TooFewRows(ds.len()));
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((ds.subset(&first), ds.subset(&second)))
}
