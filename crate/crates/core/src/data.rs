//! Task datasets stored as line-delimited JSON.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seeds::rng_from_seed;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate row id `{0}`")]
    DuplicateId(String),
    #[error("row `{0}` has an empty label")]
    EmptyLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// One task case. Fields other than `id`, `input`, `label` and `context`
/// are kept in `extra`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub input: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Row {
    pub fn new(id: impl Into<String>, input: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            input: input.into(),
            label: label.into(),
            context: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_context(mut self, context: impl Into<String>) -> Self {
        self.context = Some(context.into());
        self
    }

    /// An extra field rendered as text.
    pub fn field(&self, name: &str) -> Option<String> {
        self.extra.get(name).map(|v| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub split: Split,
    pub rows: Vec<Row>,
}

impl Dataset {
    pub fn new(split: Split, rows: Vec<Row>) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for row in &rows {
            if !seen.insert(row.id.as_str()) {
                return Err(DataError::DuplicateId(row.id.clone()));
            }
            if row.label.trim().is_empty() {
                return Err(DataError::EmptyLabel(row.id.clone()));
            }
        }
        Ok(Self { split, rows })
    }

    pub fn parse_jsonl(split: Split, text: &str) -> Result<Self, DataError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = serde_json::from_str(line).map_err(|source| DataError::Json { line: i + 1, source })?;
            rows.push(row);
        }
        Self::new(split, rows)
    }

    pub fn load(split: Split, path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_jsonl(split, &text)
    }

    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("rows serialise") + "\n")
            .collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Uniform sample without replacement, deterministic per seed. Asking for
/// more rows than exist returns all of them in shuffled order.
pub fn sample_rows(rows: &[Row], n: usize, seed: u64) -> Vec<Row> {
    let mut rng = rng_from_seed(seed);
    rows.choose_multiple(&mut rng, n.min(rows.len())).cloned().collect()
}
