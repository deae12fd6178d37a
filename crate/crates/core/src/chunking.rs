//! Non-destructive segmentation of section text.
//!
//! Chunk boundaries always fall on whitespace runs, which are kept verbatim as
//! separators, so reassembling an untouched [`ChunkList`] reproduces the input
//! byte for byte. Placeholders such as `__CONTEXT__` contain no whitespace and
//! therefore never straddle a boundary.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkLevel {
    Word,
    Phrase,
    Sentence,
}

impl ChunkLevel {
    pub const ALL: [ChunkLevel; 3] = [ChunkLevel::Word, ChunkLevel::Phrase, ChunkLevel::Sentence];

    pub fn as_str(self) -> &'static str {
        match self {
            ChunkLevel::Word => "word",
            ChunkLevel::Phrase => "phrase",
            ChunkLevel::Sentence => "sentence",
        }
    }
}

impl fmt::Display for ChunkLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChunkLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word" => Ok(ChunkLevel::Word),
            "phrase" => Ok(ChunkLevel::Phrase),
            "sentence" => Ok(ChunkLevel::Sentence),
            other => Err(format!("unknown chunk level `{other}`")),
        }
    }
}

/// Chunks of a string plus the exact text between them.
/// `separators.len() == chunks.len() + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkList {
    pub level: ChunkLevel,
    pub chunks: Vec<String>,
    pub separators: Vec<String>,
}

impl ChunkList {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Concatenates separators and chunks in order.
    pub fn reassemble(&self) -> String {
        let mut out = String::new();
        for (i, sep) in self.separators.iter().enumerate() {
            out.push_str(sep);
            if let Some(chunk) = self.chunks.get(i) {
                out.push_str(chunk);
            }
        }
        out
    }
}

pub fn reassemble(list: &ChunkList) -> String {
    list.reassemble()
}

pub trait Chunker: Send + Sync {
    fn name(&self) -> &str;
    fn chunk(&self, text: &str, level: ChunkLevel) -> ChunkList;
}

/// Whitespace-boundary chunker.
///
/// * word: every whitespace run is a boundary (punctuation stays attached).
/// * sentence: a run is a boundary after `.`, `!` or `?` (optionally followed
///   by closing quotes or brackets), or when it contains a newline.
/// * phrase: sentence boundaries, plus runs after `,` `;` `:` and before a
///   coordinating conjunction.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedChunker;

const CONJUNCTIONS: [&str; 5] = ["and", "or", "but", "nor", "yet"];
const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '*', '`'];

fn ends_with_any(token: &str, marks: &[char]) -> bool {
    token
        .trim_end_matches(CLOSERS)
        .chars()
        .last()
        .is_some_and(|c| marks.contains(&c))
}

fn is_conjunction(token: &str) -> bool {
    let core = token.trim_matches(|c: char| !c.is_alphanumeric());
    CONJUNCTIONS.iter().any(|c| core.eq_ignore_ascii_case(c)) && core.len() == token.len()
}

impl RuleBasedChunker {
    fn is_boundary(level: ChunkLevel, before: &str, gap: &str, after: &str) -> bool {
        let sentence = ends_with_any(before, &['.', '!', '?']) || gap.contains('\n');
        match level {
            ChunkLevel::Word => true,
            ChunkLevel::Sentence => sentence,
            ChunkLevel::Phrase => sentence || ends_with_any(before, &[',', ';', ':']) || is_conjunction(after),
        }
    }
}

/// Splits into maximal non-whitespace tokens and the whitespace around them;
/// `gaps.len() == tokens.len() + 1`.
pub(crate) fn split_whitespace_exact(text: &str) -> (Vec<&str>, Vec<&str>) {
    let mut tokens = Vec::new();
    let mut gaps = Vec::new();
    let mut gap_start = 0;
    let mut token_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), token_start) {
            (false, None) => {
                gaps.push(&text[gap_start..i]);
                token_start = Some(i);
            }
            (true, Some(start)) => {
                tokens.push(&text[start..i]);
                token_start = None;
                gap_start = i;
            }
            _ => {}
        }
    }
    match token_start {
        Some(start) => {
            tokens.push(&text[start..]);
            gaps.push("");
        }
        None => gaps.push(&text[gap_start..]),
    }
    (tokens, gaps)
}

impl Chunker for RuleBasedChunker {
    fn name(&self) -> &str {
        "rule_based"
    }

    fn chunk(&self, text: &str, level: ChunkLevel) -> ChunkList {
        let (tokens, gaps) = split_whitespace_exact(text);
        let mut chunks = Vec::new();
        let mut separators = vec![gaps[0].to_string()];
        let mut current = String::new();
        for (i, token) in tokens.iter().enumerate() {
            current.push_str(token);
            let gap = gaps[i + 1];
            match tokens.get(i + 1) {
                Some(next) if !Self::is_boundary(level, token, gap, next) => current.push_str(gap),
                _ => {
                    chunks.push(std::mem::take(&mut current));
                    separators.push(gap.to_string());
                }
            }
        }
        ChunkList {
            level,
            chunks,
            separators,
        }
    }
}

/// Looks up a chunker by its configured name.
pub fn chunker_by_name(name: &str) -> Option<Arc<dyn Chunker>> {
    match name {
        "rule_based" => Some(Arc::new(RuleBasedChunker)),
        _ => None,
    }
}

pub fn chunk(text: &str, level: ChunkLevel) -> ChunkList {
    RuleBasedChunker.chunk(text, level)
}

/// An index argument of an edit operation: a single chunk or an inclusive span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViewIndex {
    Atomic(u32),
    Slice(u32, u32),
}

impl fmt::Display for ViewIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViewIndex::Atomic(a) => write!(f, "[{a}]"),
            ViewIndex::Slice(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

/// Inclusive chunk range `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Maps an index onto `n` chunks modulo `n`; slice endpoints are reduced
/// independently and then ordered. `None` when there are no chunks.
pub fn resolve(index: ViewIndex, n: usize) -> Option<Span> {
    if n == 0 {
        return None;
    }
    let m = |v: u32| v as usize % n;
    Some(match index {
        ViewIndex::Atomic(a) => Span {
            start: m(a),
            end: m(a),
        },
        ViewIndex::Slice(a, b) => Span {
            start: m(a).min(m(b)),
            end: m(a).max(m(b)),
        },
    })
}

/// A chunk under edit. `origin` is the inclusive range of original chunk
/// positions it still covers contiguously, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub text: String,
    pub origin: Option<(usize, usize)>,
}

/// Mutable view of a [`ChunkList`] that reassembles with the original
/// separators wherever two pieces were adjacent in the input, and a single
/// space elsewhere.
#[derive(Debug, Clone)]
pub struct EditBuffer {
    pub pieces: Vec<Piece>,
    separators: Vec<String>,
}

impl EditBuffer {
    pub fn new(list: ChunkList) -> Self {
        let pieces = list
            .chunks
            .into_iter()
            .enumerate()
            .map(|(i, text)| Piece {
                text,
                origin: Some((i, i)),
            })
            .collect();
        Self {
            pieces,
            separators: list.separators,
        }
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Joins pieces `span` into one piece, keeping contiguous provenance.
    pub fn merged(&self, span: Span) -> Piece {
        self.merge_slice(&self.pieces[span.start..=span.end])
    }

    /// Joins `slice` (pieces taken from this buffer) into one piece.
    pub fn merge_slice(&self, slice: &[Piece]) -> Piece {
        let text = self.join(slice);
        let origin = slice
            .iter()
            .try_fold(None::<(usize, usize)>, |acc, p| {
                let (s, e) = p.origin?;
                match acc {
                    None => Some(Some((s, e))),
                    Some((a, b)) if b + 1 == s => Some(Some((a, e))),
                    Some(_) => None,
                }
            })
            .flatten();
        Piece { text, origin }
    }

    fn separator_between(&self, left: &Piece, right: &Piece) -> &str {
        match (left.origin, right.origin) {
            (Some((_, l)), Some((r, _))) if l + 1 == r => &self.separators[r],
            _ => " ",
        }
    }

    fn join(&self, pieces: &[Piece]) -> String {
        let mut out = String::new();
        let mut prev: Option<&Piece> = None;
        for piece in pieces.iter().filter(|p| !p.text.is_empty()) {
            if let Some(left) = prev {
                out.push_str(self.separator_between(left, piece));
            }
            out.push_str(&piece.text);
            prev = Some(piece);
        }
        out
    }

    pub fn reassemble(&self) -> String {
        let leading = self.separators.first().map(String::as_str).unwrap_or("");
        let trailing = if self.separators.len() > 1 {
            self.separators.last().map(String::as_str).unwrap_or("")
        } else {
            ""
        };
        format!("{leading}{}{trailing}", self.join(&self.pieces))
    }
}
