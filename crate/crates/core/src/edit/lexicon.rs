//! Stop-word and synonym lexicons for the dictionary-backed edits.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::EditError;

pub const ENGLISH_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");
pub const ENGLISH_SYNONYMS: &str = include_str!("../../data/synonyms_en.tsv");

#[derive(Debug, Clone, Default)]
pub struct Lexicons {
    stopwords: HashSet<String>,
    synonyms: HashMap<String, Vec<String>>,
}

impl Lexicons {
    /// The embedded English stop-word list and synonym table.
    pub fn english() -> Self {
        Self::from_texts(ENGLISH_STOPWORDS, ENGLISH_SYNONYMS).expect("embedded lexicons are well-formed")
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Parses a stop-word list (one word per line) and a synonym table
    /// (`word<TAB>syn1,syn2,...`). Blank lines and `#` comments are skipped.
    pub fn from_texts(stopwords: &str, synonyms: &str) -> Result<Self, EditError> {
        let stopwords = content_lines(stopwords)
            .map(|(_, line)| line.to_lowercase())
            .collect();
        let mut table = HashMap::new();
        for (number, line) in content_lines(synonyms) {
            let (word, syns) = line.split_once('\t').ok_or_else(|| EditError::Lexicon {
                line: number,
                message: "expected `word<TAB>synonyms`".into(),
            })?;
            let word = word.trim().to_lowercase();
            let syns: Vec<String> = syns
                .split(',')
                .map(|s| s.trim().replace('_', " "))
                .filter(|s| !s.is_empty() && s.to_lowercase() != word)
                .collect();
            if !syns.is_empty() {
                table.entry(word).or_insert(syns);
            }
        }
        Ok(Self {
            stopwords,
            synonyms: table,
        })
    }

    pub fn load(stopwords: &Path, synonyms: &Path) -> Result<Self, EditError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| EditError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        Self::from_texts(&read(stopwords)?, &read(synonyms)?)
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(&word.to_lowercase())
    }

    pub fn synonym(&self, word: &str) -> Option<&str> {
        self.synonyms
            .get(&word.to_lowercase())
            .and_then(|s| s.first())
            .map(String::as_str)
    }

    pub fn stopword_count(&self) -> usize {
        self.stopwords.len()
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}
