//! Context-free edit grammar, derivation trees and their variation.
//!
//! Trees are stored as serialised pre-order node lists; the genotype is the
//! sequence of alternative indices picked at each nonterminal, in the same
//! order. Variation operates on trees and is re-serialised, so every genotype
//! in the population decodes.

mod ptc2;
mod tree;
mod variation;
mod phenotype;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use phenotype::{render_phenotype, Phenotype};
pub use ptc2::sample_ptc2;
pub use tree::{decode, encode, DerivationTree, Genotype, Node};
pub use variation::{crossover, crossover_at, mutate, mutate_at, VariationConfig};

/// Default node budget for derivation trees.
pub const DEFAULT_MAX_NODES: usize = 1024;

/// Edit grammar shipped with the crate.
pub const DEFAULT_GRAMMAR: &str = include_str!("../../data/edit_grammar.bnf");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("undefined symbol `{0}`")]
    UndefinedSymbol(String),
    #[error("line {line}: empty alternative in rule `{rule}`")]
    EmptyAlternative { rule: String, line: usize },
    #[error("grammar has no rules")]
    Empty,
    #[error("no complete derivation of `{symbol}` fits in {budget} nodes")]
    BudgetInfeasible { symbol: String, budget: usize },
    #[error("choice {choice} at genotype position {position} is out of range for `{symbol}` ({arity} alternatives)")]
    OutOfRange {
        position: usize,
        choice: u32,
        symbol: String,
        arity: usize,
    },
    #[error("genotype ran out after {consumed} choices with nonterminals still open")]
    Underflow { consumed: usize },
    #[error("genotype has {leftover} unused choices")]
    Leftover { leftover: usize },
    #[error("malformed tree: {0}")]
    MalformedTree(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    NonTerminal(usize),
    Terminal(usize),
}

/// A parsed grammar. Alternative order follows the file, so choice indices
/// are stable across loads.
#[derive(Debug, Clone)]
pub struct Grammar {
    nonterminals: Vec<String>,
    terminals: Vec<String>,
    rules: Vec<Vec<Vec<Symbol>>>,
    start: usize,
    nt_index: HashMap<String, usize>,
    /// Smallest node count of a complete derivation rooted at each
    /// nonterminal; `None` when the nonterminal never terminates.
    min_size: Vec<Option<usize>>,
}

impl Grammar {
    pub fn parse(text: &str) -> Result<Grammar, GrammarError> {
        let rules = parse_rules(text)?;
        Grammar::from_rules(rules)
    }

    pub fn default_edit_grammar() -> Grammar {
        Grammar::parse(DEFAULT_GRAMMAR).expect("shipped grammar is valid")
    }

    fn from_rules(raw: Vec<RawRule>) -> Result<Grammar, GrammarError> {
        if raw.is_empty() {
            return Err(GrammarError::Empty);
        }
        let mut nonterminals = Vec::new();
        let mut nt_index = HashMap::new();
        for rule in &raw {
            if !nt_index.contains_key(&rule.lhs) {
                nt_index.insert(rule.lhs.clone(), nonterminals.len());
                nonterminals.push(rule.lhs.clone());
            }
        }

        let mut terminals: Vec<String> = Vec::new();
        let mut t_index: HashMap<String, usize> = HashMap::new();
        let mut rules = vec![Vec::new(); nonterminals.len()];
        for rule in raw {
            let lhs = nt_index[&rule.lhs];
            for alt in rule.alternatives {
                let mut symbols = Vec::with_capacity(alt.len());
                for item in alt {
                    let symbol = match item {
                        RawSymbol::NonTerminal(name) => {
                            let id = nt_index
                                .get(&name)
                                .ok_or_else(|| GrammarError::UndefinedSymbol(name.clone()))?;
                            Symbol::NonTerminal(*id)
                        }
                        RawSymbol::Terminal(text) => {
                            let id = *t_index.entry(text.clone()).or_insert_with(|| {
                                terminals.push(text);
                                terminals.len() - 1
                            });
                            Symbol::Terminal(id)
                        }
                    };
                    symbols.push(symbol);
                }
                rules[lhs].push(symbols);
            }
        }

        let mut grammar = Grammar {
            nonterminals,
            terminals,
            rules,
            start: 0,
            nt_index,
            min_size: Vec::new(),
        };
        grammar.min_size = grammar.compute_min_sizes();
        for (id, size) in grammar.min_size.iter().enumerate() {
            if size.is_none() {
                log::warn!(
                    "nonterminal `{}` has no finite derivation",
                    grammar.nonterminals[id]
                );
            }
        }
        Ok(grammar)
    }

    fn compute_min_sizes(&self) -> Vec<Option<usize>> {
        let mut sizes: Vec<Option<usize>> = vec![None; self.nonterminals.len()];
        loop {
            let mut changed = false;
            for nt in 0..self.nonterminals.len() {
                let best = self.rules[nt]
                    .iter()
                    .filter_map(|alt| self.alt_size_with(alt, &sizes))
                    .min();
                if let Some(best) = best {
                    if sizes[nt].is_none_or(|cur| best < cur) {
                        sizes[nt] = Some(best);
                        changed = true;
                    }
                }
            }
            if !changed {
                return sizes;
            }
        }
    }

    fn alt_size_with(&self, alt: &[Symbol], sizes: &[Option<usize>]) -> Option<usize> {
        let mut total = 1usize;
        for sym in alt {
            total += match sym {
                Symbol::Terminal(_) => 1,
                Symbol::NonTerminal(id) => sizes[*id]?,
            };
        }
        Some(total)
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn start_symbol(&self) -> Symbol {
        Symbol::NonTerminal(self.start)
    }

    pub fn nonterminal_count(&self) -> usize {
        self.nonterminals.len()
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    pub fn nonterminal_name(&self, id: usize) -> &str {
        &self.nonterminals[id]
    }

    pub fn terminal_text(&self, id: usize) -> &str {
        &self.terminals[id]
    }

    pub fn symbol_name(&self, symbol: Symbol) -> &str {
        match symbol {
            Symbol::NonTerminal(id) => &self.nonterminals[id],
            Symbol::Terminal(id) => &self.terminals[id],
        }
    }

    pub fn nonterminal_id(&self, name: &str) -> Option<usize> {
        self.nt_index.get(name).copied()
    }

    pub fn alternatives(&self, nonterminal: usize) -> &[Vec<Symbol>] {
        &self.rules[nonterminal]
    }

    pub fn arity(&self, nonterminal: usize, choice: usize) -> usize {
        self.rules[nonterminal][choice].len()
    }

    pub fn min_size(&self, nonterminal: usize) -> Option<usize> {
        self.min_size[nonterminal]
    }

    /// Smallest complete subtree size when `nonterminal` expands via `choice`.
    pub fn alt_min_size(&self, nonterminal: usize, choice: usize) -> Option<usize> {
        self.alt_size_with(&self.rules[nonterminal][choice], &self.min_size)
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (nt, alts) in self.rules.iter().enumerate() {
            write!(f, "<{}> ::=", self.nonterminals[nt])?;
            for (i, alt) in alts.iter().enumerate() {
                if i > 0 {
                    f.write_str(" |")?;
                }
                for sym in alt {
                    match sym {
                        Symbol::NonTerminal(id) => write!(f, " <{}>", self.nonterminals[*id])?,
                        Symbol::Terminal(id) => write!(f, " {}", quote_terminal(&self.terminals[*id]))?,
                    }
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn quote_terminal(text: &str) -> String {
    let mut out = String::from("'");
    for c in text.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            other => out.push(other),
        }
    }
    out.push('\'');
    out
}

#[derive(Debug)]
struct RawRule {
    lhs: String,
    alternatives: Vec<Vec<RawSymbol>>,
}

#[derive(Debug)]
enum RawSymbol {
    NonTerminal(String),
    Terminal(String),
}

#[derive(Debug, PartialEq)]
enum Token {
    Define,
    Bar,
    Name(String),
    Quoted(String),
}

fn tokenize_line(line: &str, line_no: usize) -> Result<Vec<Token>, GrammarError> {
    let syntax = |message: String| GrammarError::Syntax {
        line: line_no,
        message,
    };
    let chars: Vec<char> = line.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c == '|' {
            tokens.push(Token::Bar);
            i += 1;
        } else if chars[i..].starts_with(&[':', ':', '=']) {
            tokens.push(Token::Define);
            i += 3;
        } else if c == '\'' {
            let mut text = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(syntax("unterminated terminal".into())),
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        let escaped = chars
                            .get(i + 1)
                            .ok_or_else(|| syntax("dangling escape".into()))?;
                        text.push(match escaped {
                            'n' => '\n',
                            't' => '\t',
                            other => *other,
                        });
                        i += 2;
                    }
                    Some(other) => {
                        text.push(*other);
                        i += 1;
                    }
                }
            }
            tokens.push(Token::Quoted(text));
        } else if c == '<' {
            let close = chars[i..]
                .iter()
                .position(|&ch| ch == '>')
                .ok_or_else(|| syntax("unterminated `<name>`".into()))?;
            let name: String = chars[i + 1..i + close].iter().collect();
            if name.trim().is_empty() {
                return Err(syntax("empty symbol name".into()));
            }
            tokens.push(Token::Name(name.trim().to_string()));
            i += close + 1;
        } else {
            let start = i;
            while i < chars.len()
                && !chars[i].is_whitespace()
                && !matches!(chars[i], '|' | '\'' | '<' | '#')
                && !chars[i..].starts_with(&[':', ':', '='])
            {
                i += 1;
            }
            tokens.push(Token::Name(chars[start..i].iter().collect()));
        }
    }
    Ok(tokens)
}

fn parse_rules(text: &str) -> Result<Vec<RawRule>, GrammarError> {
    // (lhs, line, body tokens) per logical rule; `|` lines continue the last rule.
    let mut logical: Vec<(String, usize, Vec<Token>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut tokens = tokenize_line(line, line_no)?;
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() >= 2 && tokens[1] == Token::Define {
            let Token::Name(lhs) = tokens.remove(0) else {
                return Err(GrammarError::Syntax {
                    line: line_no,
                    message: "rule must start with a nonterminal name".into(),
                });
            };
            tokens.remove(0);
            logical.push((lhs, line_no, tokens));
        } else if tokens[0] == Token::Bar && !logical.is_empty() {
            logical.last_mut().expect("checked").2.extend(tokens);
        } else {
            return Err(GrammarError::Syntax {
                line: line_no,
                message: "expected `name ::= ...` or a `|` continuation".into(),
            });
        }
    }

    let mut rules = Vec::with_capacity(logical.len());
    for (lhs, line, body) in logical {
        let mut alternatives = vec![Vec::new()];
        for token in body {
            match token {
                Token::Bar => alternatives.push(Vec::new()),
                Token::Name(name) => alternatives
                    .last_mut()
                    .expect("non-empty")
                    .push(RawSymbol::NonTerminal(name)),
                Token::Quoted(text) => alternatives
                    .last_mut()
                    .expect("non-empty")
                    .push(RawSymbol::Terminal(text)),
                Token::Define => {
                    return Err(GrammarError::Syntax {
                        line,
                        message: "unexpected `::=`".into(),
                    })
                }
            }
        }
        if alternatives.iter().any(Vec::is_empty) {
            return Err(GrammarError::EmptyAlternative { rule: lhs, line });
        }
        rules.push(RawRule { lhs, alternatives });
    }
    Ok(rules)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_grammar() {
        let g = Grammar::parse("A ::= 'x'").unwrap();
        assert_eq!(g.nonterminal_count(), 1);
        assert_eq!(g.terminal_count(), 1);
        assert_eq!(g.min_size(0), Some(2));
    }

    #[test]
    fn angle_brackets_comments_and_continuations() {
        let text = "# header\n<a> ::= <b> 'x' # trailing\n    | 'y'\n<b> ::= 'z'\n";
        let g = Grammar::parse(text).unwrap();
        assert_eq!(g.alternatives(0).len(), 2);
        assert_eq!(g.nonterminal_name(g.start()), "a");
        assert_eq!(g.min_size(0), Some(2));
    }

    #[test]
    fn undefined_symbol_is_named() {
        let err = Grammar::parse("A ::= B 'x'").unwrap_err();
        assert_eq!(err, GrammarError::UndefinedSymbol("B".into()));
    }

    #[test]
    fn empty_alternatives_rejected() {
        assert!(matches!(
            Grammar::parse("A ::= 'x' |").unwrap_err(),
            GrammarError::EmptyAlternative { .. }
        ));
        assert!(matches!(
            Grammar::parse("A ::= | 'x'").unwrap_err(),
            GrammarError::EmptyAlternative { .. }
        ));
        assert!(matches!(
            Grammar::parse("A ::= 'x' | | 'y'").unwrap_err(),
            GrammarError::EmptyAlternative { .. }
        ));
    }

    #[test]
    fn quoted_terminals_keep_spaces_and_escapes() {
        let g = Grammar::parse(r"A ::= ', index2=' | 'it\'s'").unwrap();
        assert_eq!(g.terminal_text(0), ", index2=");
        assert_eq!(g.terminal_text(1), "it's");
    }

    #[test]
    fn nonterminating_rule_is_a_warning_not_an_error() {
        let g = Grammar::parse("A ::= 'x' | B\nB ::= B 'y'").unwrap();
        assert_eq!(g.min_size(1), None);
        assert_eq!(g.min_size(0), Some(2));
    }

    #[test]
    fn shipped_grammar_shape() {
        let g = Grammar::default_edit_grammar();
        let level = g.nonterminal_id("chunk_level").unwrap();
        let names: Vec<&str> = g
            .alternatives(level)
            .iter()
            .map(|alt| match alt[0] {
                Symbol::Terminal(id) => g.terminal_text(id),
                Symbol::NonTerminal(_) => panic!("expected terminal"),
            })
            .collect();
        assert_eq!(names, ["sentence", "phrase", "word"]);
        // 33 left-hand sides, counted from the reference listing.
        assert_eq!(g.nonterminal_count(), 33);
        let round = Grammar::parse(&g.to_string()).unwrap();
        assert_eq!(round.nonterminal_count(), g.nonterminal_count());
        assert_eq!(round.terminal_count(), g.terminal_count());
    }
}
