//! Interpreter for per-section edit programs.
//!
//! Programs are parsed into an [`Expr`] and evaluated innermost-first. Each
//! operation rechunks its input at its own level, edits the chunk list and
//! reassembles it. Removed spans go to a FIFO queue shared by all operations
//! of one program execution, from which `readd_element` reinserts them.

mod exec;
mod expr;
mod lexicon;

pub use exec::{
    execute, execute_program, remove_stopwords_text, synonimise_text, Bindings, EditContext, ExecutionTrace,
    OpRecord, Rewriter, Value,
};
pub use expr::{Expr, OpCall, OpKind};
pub use lexicon::{Lexicons, ENGLISH_STOPWORDS, ENGLISH_SYNONYMS};

#[derive(Debug, thiserror::Error)]
pub enum EditError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
