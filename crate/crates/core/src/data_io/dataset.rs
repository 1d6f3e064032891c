use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl DatasetFormat {
    /// Guesses from the file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(DatasetFormat::Jsonl),
            "csv" => Ok(DatasetFormat::Csv),
            other => Err(Error::config("format", format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub label: String,
}

/// Records of one split plus the label vocabulary (sorted).
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub records: Vec<Record>,
    pub labels: Vec<String>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    /// Label indices into `labels`.
    pub fn label_indices(&self) -> Vec<usize> {
        self.records
            .iter()
            .map(|r| {
                self.labels
                    .binary_search(&r.label)
                    .expect("labels are validated at load time")
            })
            .collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }
}

fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn parse_jsonl(path: &Path, content: &str) -> Result<Vec<(usize, Option<String>, String, String)>> {
    let mut rows = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, lineno, format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::parse(path, lineno, "expected a JSON object"))?;
        let text = obj
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(path, lineno, "missing string field `text`"))?
            .to_string();
        let label = obj
            .get("label")
            .and_then(scalar_to_string)
            .ok_or_else(|| Error::parse(path, lineno, "missing field `label`"))?;
        let id = match obj.get("id") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                scalar_to_string(v)
                    .ok_or_else(|| Error::parse(path, lineno, "field `id` must be a scalar"))?,
            ),
        };
        rows.push((lineno, id, text, label));
    }
    Ok(rows)
}

fn parse_csv(path: &Path, content: &str) -> Result<Vec<(usize, Option<String>, String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(content.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let text_col = col("text").ok_or_else(|| Error::parse(path, 1, "header lacks `text`"))?;
    let label_col = col("label").ok_or_else(|| Error::parse(path, 1, "header lacks `label`"))?;
    let id_col = col("id");
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, format!("malformed row: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| {
            record
                .get(c)
                .map(str::to_string)
                .ok_or_else(|| Error::parse(path, line, "row is missing columns"))
        };
        let id = match id_col {
            Some(c) => Some(field(c)?).filter(|s| !s.is_empty()),
            None => None,
        };
        rows.push((line, id, field(text_col)?, field(label_col)?));
    }
    Ok(rows)
}

/// Reads one split.
///
/// Missing ids become the 0-based record position. When `vocabulary` is
/// given (e.g. the train split's labels while reading the test split),
/// labels outside it are rejected; otherwise the vocabulary is the sorted set
/// of labels found.
pub fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    vocabulary: Option<&[String]>,
) -> Result<RawDataset> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = match format {
        DatasetFormat::Jsonl => parse_jsonl(path, &content)?,
        DatasetFormat::Csv => parse_csv(path, &content)?,
    };
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(rows.len());
    for (pos, (line, id, text, label)) in rows.into_iter().enumerate() {
        let id = id.unwrap_or_else(|| pos.to_string());
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id `{id}`")));
        }
        if let Some(vocab) = vocabulary {
            if !vocab.iter().any(|l| *l == label) {
                return Err(Error::parse(path, line, format!("unknown label `{label}`")));
            }
        }
        records.push(Record { id, text, label });
    }
    let labels = match vocabulary {
        Some(v) => {
            let mut v = v.to_vec();
            v.sort();
            v.dedup();
            v
        }
        None => records
            .iter()
            .map(|r| r.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    Ok(RawDataset { records, labels })
}
