use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EngineError;

/// One scored evaluation of an individual on a training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub generation: usize,
    /// Digest of the individual's phenotype.
    pub individual: String,
    pub f_train: f64,
    /// Digest of the ids of the sampled rows.
    pub sample: String,
    pub prompt: String,
    /// Digest of the configuration that produced the record.
    pub config: String,
}

/// Append-only record of evaluations, kept in memory and optionally
/// mirrored to a line-delimited JSON file.
#[derive(Debug, Default)]
pub struct Journal {
    records: Vec<JournalRecord>,
    file: Option<(PathBuf, BufWriter<File>)>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl Journal {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Starts a fresh journal file, replacing any existing one.
    pub fn create(path: &Path) -> Result<Self, EngineError> {
        let file = File::create(path).map_err(io_err(path))?;
        Ok(Self {
            records: Vec::new(),
            file: Some((path.to_path_buf(), BufWriter::new(file))),
        })
    }

    /// Reopens a journal file keeping only its first `keep` records, so a
    /// resumed run continues exactly where its checkpoint was taken.
    pub fn resume(path: &Path, keep: usize) -> Result<Self, EngineError> {
        let records = Self::read_prefix(path, keep)?;
        if records.len() < keep {
            return Err(EngineError::Checkpoint(format!(
                "journal {} has {} records but the checkpoint expects {keep}",
                path.display(),
                records.len()
            )));
        }
        let mut writer = BufWriter::new(File::create(path).map_err(io_err(path))?);
        for r in &records {
            serde_json::to_writer(&mut writer, r).map_err(|e| EngineError::Checkpoint(e.to_string()))?;
            writer.write_all(b"\n").map_err(io_err(path))?;
        }
        writer.flush().map_err(io_err(path))?;
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        Ok(Self {
            records,
            file: Some((path.to_path_buf(), BufWriter::new(file))),
        })
    }

    pub fn read(path: &Path) -> Result<Vec<JournalRecord>, EngineError> {
        Self::read_prefix(path, usize::MAX)
    }

    /// The first `limit` records. Lines after them are not parsed, so a
    /// record torn by a crash past the limit is harmless.
    fn read_prefix(path: &Path, limit: usize) -> Result<Vec<JournalRecord>, EngineError> {
        let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            if out.len() == limit {
                break;
            }
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| {
                EngineError::Checkpoint(format!("{}:{}: {e}", path.display(), i + 1))
            })?);
        }
        Ok(out)
    }

    pub fn append(&mut self, record: JournalRecord) -> Result<(), EngineError> {
        if let Some((path, writer)) = &mut self.file {
            serde_json::to_writer(&mut *writer, &record).map_err(|e| EngineError::Checkpoint(e.to_string()))?;
            writer.write_all(b"\n").map_err(io_err(path))?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), EngineError> {
        if let Some((path, writer)) = &mut self.file {
            writer.flush().map_err(io_err(path))?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[JournalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(generation: usize, f: f64) -> JournalRecord {
        JournalRecord {
            generation,
            individual: format!("i{generation}"),
            f_train: f,
            sample: "s".into(),
            prompt: "line one\nline two".into(),
            config: "c".into(),
        }
    }

    #[test]
    fn file_round_trip_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        let mut j = Journal::create(&path).unwrap();
        for g in 0..4 {
            j.append(record(g, g as f64 / 4.0)).unwrap();
        }
        j.flush().unwrap();
        drop(j);
        assert_eq!(Journal::read(&path).unwrap().len(), 4);
        let mut j = Journal::resume(&path, 2).unwrap();
        j.append(record(9, 1.0)).unwrap();
        j.flush().unwrap();
        let back = Journal::read(&path).unwrap();
        assert_eq!(back.iter().map(|r| r.generation).collect::<Vec<_>>(), [0, 1, 9]);
        assert!(Journal::resume(&path, 10).is_err());
    }
}
