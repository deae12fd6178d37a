use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use log::warn;

use super::LlmError;

/// Response cache keyed by request digest, optionally persisted as an
/// append-only file of `digest<TAB>base64(response)` lines.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: Mutex<HashMap<String, String>>,
    file: Option<Mutex<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads existing records from `path` and appends new ones to it.
    /// Malformed lines, such as a record cut short by an interrupted run,
    /// are skipped.
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let io = |e: std::io::Error| LlmError::Cache(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                let decoded = line
                    .split_once('\t')
                    .and_then(|(d, b)| Some((d.to_string(), String::from_utf8(STANDARD.decode(b).ok()?).ok()?)));
                match decoded {
                    Some((digest, text)) => {
                        entries.insert(digest, text);
                    }
                    None if line.is_empty() => {}
                    None => warn!("{}:{}: skipping malformed cache record", path.display(), i + 1),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let needs_newline = std::fs::read(path).map_err(io)?.last().is_some_and(|b| *b != b'\n');
        if needs_newline {
            file.write_all(b"\n").map_err(io)?;
        }
        Ok(Self {
            entries: Mutex::new(entries),
            file: Some(Mutex::new(file)),
        })
    }

    pub fn get(&self, digest: &str) -> Option<String> {
        self.entries.lock().expect("cache lock").get(digest).cloned()
    }

    pub fn insert(&self, digest: &str, text: &str) -> Result<(), LlmError> {
        let fresh = self
            .entries
            .lock()
            .expect("cache lock")
            .insert(digest.to_string(), text.to_string())
            .is_none();
        if let (true, Some(file)) = (fresh, &self.file) {
            let mut file = file.lock().expect("cache file lock");
            writeln!(file, "{digest}\t{}", STANDARD.encode(text.as_bytes()))
                .and_then(|_| file.flush())
                .map_err(|e| LlmError::Cache(e.to_string()))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
