//! Edit-program expressions: AST, parser and canonical printer.
//!
//! The surface syntax is the one produced by the edit grammar, e.g.
//! `swap_elements(index1=[3], index2=[5,7], level=phrase, texts=BASE)`.
//! Arguments are keyword arguments in any order; `+` concatenates.

use std::fmt;

use crate::chunking::{ChunkLevel, ViewIndex};

use super::EditError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    /// The section's base text.
    Base,
    /// The null string, rendered as a single space.
    Null,
    /// The list of demonstration placeholders.
    Demos,
    /// A literal list of strings.
    List(Vec<String>),
    /// Both sides rendered as text, non-empty parts joined by a newline.
    Concat(Box<Expr>, Box<Expr>),
    Op(Box<OpCall>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Swap { index1: ViewIndex, index2: ViewIndex },
    Remove { index: ViewIndex },
    Readd { index: u32 },
    Duplicate { index1: ViewIndex, index2: u32 },
    RemoveStopwords { index: ViewIndex },
    Synonimise { index: ViewIndex },
    Paraphrase { index: ViewIndex },
    /// `tenths` is the target length ratio in tenths (1..=9).
    Summarise { tenths: u8, index: ViewIndex },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Swap { .. } => "swap_elements",
            OpKind::Remove { .. } => "remove_element",
            OpKind::Readd { .. } => "readd_element",
            OpKind::Duplicate { .. } => "duplicate_element",
            OpKind::RemoveStopwords { .. } => "remove_stopwords",
            OpKind::Synonimise { .. } => "synonimise",
            OpKind::Paraphrase { .. } => "paraphrase",
            OpKind::Summarise { .. } => "summarise",
        }
    }

    /// List operations rearrange chunks; the others rewrite text.
    pub fn is_list_op(&self) -> bool {
        matches!(
            self,
            OpKind::Swap { .. } | OpKind::Remove { .. } | OpKind::Readd { .. } | OpKind::Duplicate { .. }
        )
    }

    pub fn is_llm_op(&self) -> bool {
        matches!(self, OpKind::Paraphrase { .. } | OpKind::Summarise { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OpCall {
    pub kind: OpKind,
    /// `None` when the call omits `level`; text operations then default to
    /// sentence level.
    pub level: Option<ChunkLevel>,
    pub texts: Expr,
}

impl OpCall {
    pub fn effective_level(&self) -> ChunkLevel {
        self.level.unwrap_or(ChunkLevel::Sentence)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, EditError> {
        let tokens = lex(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            len: source.len(),
        };
        let expr = parser.concat()?;
        if let Some(tok) = parser.peek() {
            return Err(parser.error_at(tok.offset, "unexpected trailing input"));
        }
        Ok(expr)
    }

    /// Number of operator applications.
    pub fn op_count(&self) -> usize {
        match self {
            Expr::Op(call) => 1 + call.texts.op_count(),
            Expr::Concat(a, b) => a.op_count() + b.op_count(),
            _ => 0,
        }
    }

    /// Visits every index value in textual order. A slice contributes two
    /// values.
    pub fn visit_indices_mut(&mut self, f: &mut dyn FnMut(&mut u32)) {
        match self {
            Expr::Op(call) => {
                let visit_view = |v: &mut ViewIndex, f: &mut dyn FnMut(&mut u32)| match v {
                    ViewIndex::Atomic(a) => f(a),
                    ViewIndex::Slice(a, b) => {
                        f(a);
                        f(b);
                    }
                };
                match &mut call.kind {
                    OpKind::Swap { index1, index2 } => {
                        visit_view(index1, f);
                        visit_view(index2, f);
                    }
                    OpKind::Remove { index }
                    | OpKind::RemoveStopwords { index }
                    | OpKind::Synonimise { index }
                    | OpKind::Paraphrase { index }
                    | OpKind::Summarise { index, .. } => visit_view(index, f),
                    OpKind::Readd { index } => f(index),
                    OpKind::Duplicate { index1, index2 } => {
                        visit_view(index1, f);
                        f(index2);
                    }
                }
                call.texts.visit_indices_mut(f);
            }
            Expr::Concat(a, b) => {
                a.visit_indices_mut(f);
                b.visit_indices_mut(f);
            }
            _ => {}
        }
    }

    pub fn index_values(&self) -> Vec<u32> {
        let mut out = Vec::new();
        self.clone().visit_indices_mut(&mut |v| out.push(*v));
        out
    }

    /// Returns a copy with the `slot`-th index value (textual order) replaced.
    pub fn with_index_value(&self, slot: usize, value: u32) -> Expr {
        let mut out = self.clone();
        let mut k = 0usize;
        out.visit_indices_mut(&mut |v| {
            if k == slot {
                *v = value;
            }
            k += 1;
        });
        out
    }
}

fn quote(s: &str) -> String {
    let mut out = String::from("'");
    for c in s.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Base => f.write_str("BASE"),
            Expr::Null => f.write_str("NULL"),
            Expr::Demos => f.write_str("DEMOS"),
            Expr::List(items) => {
                let parts: Vec<String> = items.iter().map(|s| quote(s)).collect();
                write!(f, "[{}]", parts.join(","))
            }
            Expr::Concat(a, b) => write!(f, "{a} + {b}"),
            Expr::Op(call) => write!(f, "{call}"),
        }
    }
}

impl fmt::Display for OpCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind.name())?;
        match self.kind {
            OpKind::Swap { index1, index2 } => write!(f, "index1={index1}, index2={index2}")?,
            OpKind::Remove { index }
            | OpKind::RemoveStopwords { index }
            | OpKind::Synonimise { index }
            | OpKind::Paraphrase { index } => write!(f, "index={index}")?,
            OpKind::Readd { index } => write!(f, "index=[{index}]")?,
            OpKind::Duplicate { index1, index2 } => write!(f, "index1={index1}, index2=[{index2}]")?,
            OpKind::Summarise { tenths, index } => write!(f, "percent=0.{tenths}, index={index}")?,
        }
        if let Some(level) = self.level {
            write!(f, ", level={level}")?;
        }
        write!(f, ", texts={})", self.texts)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn lex(source: &str) -> Result<Vec<Token>, EditError> {
    let mut out = Vec::new();
    let mut chars = source.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(Token { tok: Tok::Ident(s), offset: i });
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_ascii_digit() || c == '.' {
                    s.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(Token { tok: Tok::Number(s), offset: i });
        } else if c == '\'' || c == '"' {
            chars.next();
            let mut s = String::new();
            let mut closed = false;
            while let Some((_, d)) = chars.next() {
                match d {
                    '\\' => match chars.next() {
                        Some((_, 'n')) => s.push('\n'),
                        Some((_, e)) => s.push(e),
                        None => break,
                    },
                    d if d == c => {
                        closed = true;
                        break;
                    }
                    d => s.push(d),
                }
            }
            if !closed {
                return Err(EditError::Parse {
                    offset: i,
                    message: "unterminated string literal".into(),
                });
            }
            out.push(Token { tok: Tok::Str(s), offset: i });
        } else if "()[]=,+".contains(c) {
            chars.next();
            out.push(Token { tok: Tok::Punct(c), offset: i });
        } else {
            return Err(EditError::Parse {
                offset: i,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    len: usize,
}

enum Arg {
    View(ViewIndex),
    Level(ChunkLevel),
    Number(String),
    Texts(Expr),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.len, |t| t.offset)
    }

    fn error_at(&self, offset: usize, message: &str) -> EditError {
        EditError::Parse {
            offset,
            message: message.to_string(),
        }
    }

    fn error(&self, message: &str) -> EditError {
        self.error_at(self.offset(), message)
    }

    fn next(&mut self) -> Option<Tok> {
        let tok = self.tokens.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        tok
    }

    fn eat(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Token { tok: Tok::Punct(p), .. }) if *p == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), EditError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }

    fn concat(&mut self) -> Result<Expr, EditError> {
        let mut expr = self.primary()?;
        while self.eat('+') {
            let rhs = self.primary()?;
            expr = Expr::Concat(Box::new(expr), Box::new(rhs));
        }
        Ok(expr)
    }

    fn primary(&mut self) -> Result<Expr, EditError> {
        let offset = self.offset();
        match self.next() {
            Some(Tok::Ident(name)) => match name.as_str() {
                "BASE" => Ok(Expr::Base),
                "NULL" => Ok(Expr::Null),
                "DEMOS" => Ok(Expr::Demos),
                _ => self.call(&name, offset),
            },
            Some(Tok::Punct('[')) => {
                let mut items = Vec::new();
                if !self.eat(']') {
                    loop {
                        match self.next() {
                            Some(Tok::Str(s)) => items.push(s),
                            _ => return Err(self.error("expected a string list item")),
                        }
                        if self.eat(']') {
                            break;
                        }
                        self.expect(',')?;
                    }
                }
                Ok(Expr::List(items))
            }
            Some(Tok::Punct('(')) => {
                let inner = self.concat()?;
                self.expect(')')?;
                Ok(inner)
            }
            _ => Err(self.error_at(offset, "expected an expression")),
        }
    }

    fn number(&self, s: &str, offset: usize) -> Result<u32, EditError> {
        s.parse::<u32>()
            .map_err(|_| self.error_at(offset, "expected a non-negative integer index"))
    }

    fn view(&mut self) -> Result<ViewIndex, EditError> {
        self.expect('[')?;
        let offset = self.offset();
        let a = match self.next() {
            Some(Tok::Number(s)) => self.number(&s, offset)?,
            _ => return Err(self.error_at(offset, "expected an index")),
        };
        if self.eat(']') {
            return Ok(ViewIndex::Atomic(a));
        }
        self.expect(',')?;
        let offset = self.offset();
        let b = match self.next() {
            Some(Tok::Number(s)) => self.number(&s, offset)?,
            _ => return Err(self.error_at(offset, "expected an index")),
        };
        self.expect(']')?;
        Ok(ViewIndex::Slice(a, b))
    }

    fn arg_value(&mut self, key: &str) -> Result<Arg, EditError> {
        let offset = self.offset();
        match key {
            "index" | "index1" | "index2" => Ok(Arg::View(self.view()?)),
            "level" => match self.next() {
                Some(Tok::Ident(s)) | Some(Tok::Str(s)) => s
                    .parse()
                    .map(Arg::Level)
                    .map_err(|e: String| self.error_at(offset, &e)),
                _ => Err(self.error_at(offset, "expected a chunk level")),
            },
            "percent" => match self.next() {
                Some(Tok::Number(s)) => Ok(Arg::Number(s)),
                _ => Err(self.error_at(offset, "expected a ratio")),
            },
            "texts" => Ok(Arg::Texts(self.concat()?)),
            _ => Err(self.error_at(offset, &format!("unknown argument `{key}`"))),
        }
    }

    fn call(&mut self, name: &str, offset: usize) -> Result<Expr, EditError> {
        self.expect('(')?;
        let mut views: [Option<ViewIndex>; 3] = [None; 3];
        let mut level = None;
        let mut percent = None;
        let mut texts = None;
        if !self.eat(')') {
            loop {
                let key_offset = self.offset();
                let key = match self.next() {
                    Some(Tok::Ident(k)) => k,
                    _ => return Err(self.error_at(key_offset, "expected an argument name")),
                };
                self.expect('=')?;
                let value = self.arg_value(&key)?;
                let slot_taken = |taken: bool| {
                    if taken {
                        Err(self.error_at(key_offset, &format!("duplicate argument `{key}`")))
                    } else {
                        Ok(())
                    }
                };
                match (key.as_str(), value) {
                    (k, Arg::View(v)) => {
                        let slot = match k {
                            "index" => 0,
                            "index1" => 1,
                            _ => 2,
                        };
                        slot_taken(views[slot].is_some())?;
                        views[slot] = Some(v);
                    }
                    (_, Arg::Level(l)) => {
                        slot_taken(level.is_some())?;
                        level = Some(l);
                    }
                    (_, Arg::Number(n)) => {
                        slot_taken(percent.is_some())?;
                        percent = Some((n, key_offset));
                    }
                    (_, Arg::Texts(t)) => {
                        slot_taken(texts.is_some())?;
                        texts = Some(t);
                    }
                }
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
        }

        let missing = |what: &str| self.error_at(offset, &format!("`{name}` is missing `{what}`"));
        let texts = texts.ok_or_else(|| missing("texts"))?;
        let [index, index1, index2] = views;
        let atomic = |v: ViewIndex, what: &str| match v {
            ViewIndex::Atomic(a) => Ok(a),
            ViewIndex::Slice(..) => Err(self.error_at(offset, &format!("`{what}` of `{name}` must be atomic"))),
        };
        let unexpected = |present: bool, what: &str| {
            if present {
                Err(self.error_at(offset, &format!("`{name}` takes no `{what}`")))
            } else {
                Ok(())
            }
        };
        let kind = match name {
            "swap_elements" | "swap" => {
                unexpected(index.is_some(), "index")?;
                OpKind::Swap {
                    index1: index1.ok_or_else(|| missing("index1"))?,
                    index2: index2.ok_or_else(|| missing("index2"))?,
                }
            }
            "duplicate_element" | "duplicate" => {
                unexpected(index.is_some(), "index")?;
                OpKind::Duplicate {
                    index1: index1.ok_or_else(|| missing("index1"))?,
                    index2: atomic(index2.ok_or_else(|| missing("index2"))?, "index2")?,
                }
            }
            _ => {
                unexpected(index1.is_some(), "index1")?;
                unexpected(index2.is_some(), "index2")?;
                let index = index.ok_or_else(|| missing("index"))?;
                match name {
                    "remove_element" | "remove" => OpKind::Remove { index },
                    "readd_element" | "readd" => OpKind::Readd {
                        index: atomic(index, "index")?,
                    },
                    "remove_stopwords" | "rstopwords" => OpKind::RemoveStopwords { index },
                    "synonimise" | "synonymise" => OpKind::Synonimise { index },
                    "paraphrase" => OpKind::Paraphrase { index },
                    "summarise" | "summarize" => {
                        let (text, at) = percent.take().ok_or_else(|| missing("percent"))?;
                        OpKind::Summarise {
                            tenths: parse_tenths(&text).ok_or_else(|| {
                                self.error_at(at, "percent must be one of 0.1 .. 0.9")
                            })?,
                            index,
                        }
                    }
                    _ => return Err(self.error_at(offset, &format!("unknown operation `{name}`"))),
                }
            }
        };
        unexpected(percent.is_some(), "percent")?;
        Ok(Expr::Op(Box::new(OpCall { kind, level, texts })))
    }
}

fn parse_tenths(s: &str) -> Option<u8> {
    let digit = s.strip_prefix("0.")?;
    match digit.as_bytes() {
        [d @ b'1'..=b'9'] => Some(d - b'0'),
        _ => None,
    }
}
