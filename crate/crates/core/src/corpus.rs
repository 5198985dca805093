//! Input tables: predictions, pointwise and pairwise annotations, argument metadata.
//!
//! Every loader accepts either a delimited table with a header row or a JSON
//! array of objects carrying the same field names. Records are validated row by
//! row and returned in a canonical order, so permuting input rows never changes
//! the result.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PREDICTION_COLUMNS: [&str; 4] = ["model_id", "argument_id", "repetition", "value"];
pub const POINTWISE_COLUMNS: [&str; 3] = ["annotator_id", "argument_id", "label"];
pub const PAIRWISE_COLUMNS: [&str; 5] = ["annotator_id", "arg_i", "arg_j", "framing", "choice"];
pub const ARGUMENT_COLUMNS: [&str; 4] = ["argument_id", "debate_id", "locution", "proposition"];

/// On-disk encoding of an input table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` selects JSON; anything else is read as CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArgumentRef {
    pub argument_id: String,
    pub debate_id: Option<String>,
    pub locution: Option<String>,
    pub proposition: Option<String>,
}

/// A single repetition outcome: a position score in `[0, 100]` or the NA marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictionValue {
    Score(f64),
    Na,
}

impl PredictionValue {
    pub fn score(self) -> Option<f64> {
        match self {
            PredictionValue::Score(s) => Some(s),
            PredictionValue::Na => None,
        }
    }

    pub fn is_na(self) -> bool {
        matches!(self, PredictionValue::Na)
    }
}

impl fmt::Display for PredictionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictionValue::Score(s) => write!(f, "{s}"),
            PredictionValue::Na => f.write_str("NA"),
        }
    }
}

impl FromStr for PredictionValue {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("na") {
            return Ok(PredictionValue::Na);
        }
        let v: f64 = s.parse().map_err(|_| format!("unparseable value {s:?}"))?;
        if !v.is_finite() || !(0.0..=100.0).contains(&v) {
            return Err(format!("score out of range [0, 100]: {s}"));
        }
        Ok(PredictionValue::Score(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub model_id: String,
    pub argument_id: String,
    pub repetition: u32,
    pub value: PredictionValue,
}

impl PredictionRecord {
    fn key(&self) -> (&str, &str, u32) {
        (&self.model_id, &self.argument_id, self.repetition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Political,
    Apolitical,
}

impl BinaryLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Political => "political",
            BinaryLabel::Apolitical => "apolitical",
        }
    }

    pub fn flip(self) -> Self {
        match self {
            BinaryLabel::Political => BinaryLabel::Apolitical,
            BinaryLabel::Apolitical => BinaryLabel::Political,
        }
    }
}

impl FromStr for BinaryLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "political" => Ok(BinaryLabel::Political),
            "apolitical" => Ok(BinaryLabel::Apolitical),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Which question the annotator answered: "more left-wing?" or "more right-wing?".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framing {
    Left,
    Right,
}

impl Framing {
    pub fn as_str(self) -> &'static str {
        match self {
            Framing::Left => "left",
            Framing::Right => "right",
        }
    }
}

impl FromStr for Framing {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Framing::Left),
            "right" => Ok(Framing::Right),
            other => Err(format!("unknown framing {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    First,
    Second,
    Equal,
}

impl Choice {
    pub fn as_str(self) -> &'static str {
        match self {
            Choice::First => "first",
            Choice::Second => "second",
            Choice::Equal => "equal",
        }
    }
}

impl FromStr for Choice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "first" => Ok(Choice::First),
            "second" => Ok(Choice::Second),
            "equal" => Ok(Choice::Equal),
            other => Err(format!("unknown choice {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PointwiseAnnotation {
    pub annotator_id: String,
    pub argument_id: String,
    pub label: BinaryLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PairwiseAnnotation {
    pub annotator_id: String,
    pub arg_i: String,
    pub arg_j: String,
    pub framing: Framing,
    pub choice: Choice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Pointwise,
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnnotationRecord {
    Pointwise(PointwiseAnnotation),
    Pairwise(PairwiseAnnotation),
}

/// Rows of a table as column-name → cell text, tagged with their source row number.
struct RawTable {
    name: String,
    columns: BTreeSet<String>,
    rows: Vec<(usize, BTreeMap<String, String>)>,
}

impl RawTable {
    fn read<R: Read>(reader: R, format: Format, name: &str) -> Result<RawTable> {
        match format {
            Format::Csv => Self::read_csv(reader, name),
            Format::Json => Self::read_json(reader, name),
        }
    }

    fn read_csv<R: Read>(reader: R, name: &str) -> Result<RawTable> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if headers.iter().all(|h| h.is_empty()) {
            return Err(Error::invalid(format!("{name}: missing header row")));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let map = headers.iter().cloned().zip(rec.iter().map(str::to_owned)).collect();
            rows.push((line, map));
        }
        Ok(RawTable {
            name: name.to_owned(),
            columns: headers.into_iter().collect(),
            rows,
        })
    }

    fn read_json<R: Read>(reader: R, name: &str) -> Result<RawTable> {
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        let items = value
            .as_array()
            .ok_or_else(|| Error::invalid(format!("{name}: expected a JSON array of objects")))?;
        let mut columns = BTreeSet::new();
        let mut rows = Vec::with_capacity(items.len());
        for (idx, item) in items.iter().enumerate() {
            let obj = item
                .as_object()
                .ok_or_else(|| Error::row(name, idx + 1, "expected an object"))?;
            let mut map = BTreeMap::new();
            for (k, v) in obj {
                let text = match v {
                    serde_json::Value::String(s) => s.trim().to_owned(),
                    serde_json::Value::Null => String::new(),
                    other => other.to_string(),
                };
                columns.insert(k.clone());
                map.insert(k.clone(), text);
            }
            rows.push((idx + 1, map));
        }
        Ok(RawTable {
            name: name.to_owned(),
            columns,
            rows,
        })
    }

    fn require(&self, required: &[&str]) -> Result<()> {
        // An empty JSON array carries no column names; nothing to check.
        if self.rows.is_empty() && self.columns.is_empty() {
            return Ok(());
        }
        let missing: Vec<&str> = required
            .iter()
            .copied()
            .filter(|c| !self.columns.contains(*c))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{}: missing column(s) {}",
                self.name,
                missing.join(", ")
            )))
        }
    }
}

fn field<'a>(table: &str, row: usize, map: &'a BTreeMap<String, String>, col: &str) -> Result<&'a str> {
    let v = map.get(col).map(String::as_str).unwrap_or("");
    if v.is_empty() {
        Err(Error::row(table, row, format!("empty {col}")))
    } else {
        Ok(v)
    }
}

fn parse_field<T: FromStr<Err = String>>(
    table: &str,
    row: usize,
    map: &BTreeMap<String, String>,
    col: &str,
) -> Result<T> {
    field(table, row, map, col)?
        .parse()
        .map_err(|e| Error::row(table, row, e))
}

/// Reads and validates prediction rows; output sorted by (model, argument, repetition).
pub fn load_predictions<R: Read>(reader: R, format: Format, name: &str) -> Result<Vec<PredictionRecord>> {
    let table = RawTable::read(reader, format, name)?;
    table.require(&PREDICTION_COLUMNS)?;
    let mut out = Vec::with_capacity(table.rows.len());
    let mut seen: BTreeMap<(String, String, u32), usize> = BTreeMap::new();
    for (row, map) in &table.rows {
        let row = *row;
        let model_id = field(name, row, map, "model_id")?.to_owned();
        let argument_id = field(name, row, map, "argument_id")?.to_owned();
        let rep_text = field(name, row, map, "repetition")?;
        let repetition: u32 = rep_text.parse().ok().filter(|r| *r >= 1).ok_or_else(|| {
            Error::row(
                name,
                row,
                format!("repetition must be an integer >= 1, got {rep_text:?}"),
            )
        })?;
        let value: PredictionValue = parse_field(name, row, map, "value")?;
        let key = (model_id.clone(), argument_id.clone(), repetition);
        if let Some(prev) = seen.insert(key, row) {
            return Err(Error::row(
                name,
                row,
                format!("duplicate (model_id, argument_id, repetition) = ({model_id}, {argument_id}, {repetition}), first seen at row {prev}"),
            ));
        }
        out.push(PredictionRecord {
            model_id,
            argument_id,
            repetition,
            value,
        });
    }
    out.sort_by(|a, b| a.key().cmp(&b.key()));
    Ok(out)
}

/// Reads annotations of the given task kind.
pub fn load_annotations<R: Read>(reader: R, format: Format, task: Task, name: &str) -> Result<Vec<AnnotationRecord>> {
    Ok(match task {
        Task::Pointwise => load_pointwise(reader, format, name)?
            .into_iter()
            .map(AnnotationRecord::Pointwise)
            .collect(),
        Task::Pairwise => load_pairwise(reader, format, name)?
            .into_iter()
            .map(AnnotationRecord::Pairwise)
            .collect(),
    })
}

pub fn load_pointwise<R: Read>(reader: R, format: Format, name: &str) -> Result<Vec<PointwiseAnnotation>> {
    let table = RawTable::read(reader, format, name)?;
    table.require(&POINTWISE_COLUMNS)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, map) in &table.rows {
        let row = *row;
        if map.get("framing").is_some_and(|f| !f.is_empty()) {
            return Err(Error::row(name, row, "framing is only valid on pairwise records"));
        }
        out.push(PointwiseAnnotation {
            annotator_id: field(name, row, map, "annotator_id")?.to_owned(),
            argument_id: field(name, row, map, "argument_id")?.to_owned(),
            label: parse_field(name, row, map, "label")?,
        });
    }
    out.sort_by(|a, b| (&a.argument_id, &a.annotator_id, a.label).cmp(&(&b.argument_id, &b.annotator_id, b.label)));
    Ok(out)
}

pub fn load_pairwise<R: Read>(reader: R, format: Format, name: &str) -> Result<Vec<PairwiseAnnotation>> {
    let table = RawTable::read(reader, format, name)?;
    table.require(&PAIRWISE_COLUMNS)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, map) in &table.rows {
        let row = *row;
        let arg_i = field(name, row, map, "arg_i")?.to_owned();
        let arg_j = field(name, row, map, "arg_j")?.to_owned();
        if arg_i == arg_j {
            return Err(Error::row(name, row, format!("self-pair ({arg_i}, {arg_j})")));
        }
        out.push(PairwiseAnnotation {
            annotator_id: field(name, row, map, "annotator_id")?.to_owned(),
            arg_i,
            arg_j,
            framing: parse_field(name, row, map, "framing")?,
            choice: parse_field(name, row, map, "choice")?,
        });
    }
    out.sort_by(|a, b| {
        (&a.arg_i, &a.arg_j, a.framing, &a.annotator_id, a.choice).cmp(&(
            &b.arg_i,
            &b.arg_j,
            b.framing,
            &b.annotator_id,
            b.choice,
        ))
    });
    Ok(out)
}

pub fn load_arguments<R: Read>(reader: R, format: Format, name: &str) -> Result<Vec<ArgumentRef>> {
    let table = RawTable::read(reader, format, name)?;
    table.require(&ARGUMENT_COLUMNS[..1])?;
    let mut out = Vec::with_capacity(table.rows.len());
    let mut seen = BTreeSet::new();
    let opt = |map: &BTreeMap<String, String>, col: &str| map.get(col).filter(|v| !v.is_empty()).cloned();
    for (row, map) in &table.rows {
        let argument_id = field(name, *row, map, "argument_id")?.to_owned();
        if !seen.insert(argument_id.clone()) {
            return Err(Error::row(name, *row, format!("duplicate argument_id {argument_id}")));
        }
        out.push(ArgumentRef {
            argument_id,
            debate_id: opt(map, "debate_id"),
            locution: opt(map, "locution"),
            proposition: opt(map, "proposition"),
        });
    }
    out.sort();
    Ok(out)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn display_name(path: &Path) -> String {
    path.display().to_string()
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    load_predictions(open(path)?, Format::from_path(path), &display_name(path))
}

pub fn read_pointwise(path: &Path) -> Result<Vec<PointwiseAnnotation>> {
    load_pointwise(open(path)?, Format::from_path(path), &display_name(path))
}

pub fn read_pairwise(path: &Path) -> Result<Vec<PairwiseAnnotation>> {
    load_pairwise(open(path)?, Format::from_path(path), &display_name(path))
}

pub fn read_arguments(path: &Path) -> Result<Vec<ArgumentRef>> {
    load_arguments(open(path)?, Format::from_path(path), &display_name(path))
}

pub fn write_predictions<W: Write>(writer: W, records: &[PredictionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PREDICTION_COLUMNS)?;
    for r in records {
        w.write_record([
            r.model_id.as_str(),
            r.argument_id.as_str(),
            &r.repetition.to_string(),
            &r.value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<predictions writer>", e))?;
    Ok(())
}

pub fn write_pointwise<W: Write>(writer: W, records: &[PointwiseAnnotation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(POINTWISE_COLUMNS)?;
    for r in records {
        w.write_record([r.annotator_id.as_str(), r.argument_id.as_str(), r.label.as_str()])?;
    }
    w.flush().map_err(|e| Error::io("<pointwise writer>", e))?;
    Ok(())
}

pub fn write_pairwise<W: Write>(writer: W, records: &[PairwiseAnnotation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PAIRWISE_COLUMNS)?;
    for r in records {
        w.write_record([
            r.annotator_id.as_str(),
            r.arg_i.as_str(),
            r.arg_j.as_str(),
            r.framing.as_str(),
            r.choice.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<pairwise writer>", e))?;
    Ok(())
}

pub fn write_arguments<W: Write>(writer: W, records: &[ArgumentRef]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ARGUMENT_COLUMNS)?;
    for r in records {
        w.write_record([
            r.argument_id.as_str(),
            r.debate_id.as_deref().unwrap_or(""),
            r.locution.as_deref().unwrap_or(""),
            r.proposition.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<arguments writer>", e))?;
    Ok(())
}
