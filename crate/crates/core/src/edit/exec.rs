use std::collections::VecDeque;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::chunking::{
    resolve, split_whitespace_exact, ChunkLevel, Chunker, EditBuffer, Piece, RuleBasedChunker, Span, ViewIndex,
};
use crate::placeholder::{contains_placeholder, lost_placeholders};

use super::expr::{Expr, OpCall, OpKind};
use super::lexicon::Lexicons;
use super::EditError;

/// Result of evaluating an expression: a text, or a list of strings for the
/// demonstration slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Text(String),
    List(Vec<String>),
}

impl Value {
    /// Flattens to text; list items are joined with newlines.
    pub fn render(&self) -> String {
        match self {
            Value::Text(t) => t.clone(),
            Value::List(items) => items.join("\n"),
        }
    }
}

/// LLM-backed rewriting used by `paraphrase` and `summarise`.
pub trait Rewriter: Send + Sync {
    fn paraphrase(&self, text: &str) -> Result<String, String>;
    /// `ratio` is the target output length as a fraction of the input.
    fn summarise(&self, text: &str, ratio: f64) -> Result<String, String>;
}

/// Values bound to the leaf symbols of a program.
#[derive(Debug, Clone, Copy)]
pub struct Bindings<'a> {
    pub base: &'a str,
    pub demos: &'a [String],
}

impl<'a> Bindings<'a> {
    pub fn text(base: &'a str) -> Self {
        Self { base, demos: &[] }
    }
}

#[derive(Clone, Copy)]
pub struct EditContext<'a> {
    pub chunker: &'a dyn Chunker,
    pub lexicons: &'a Lexicons,
    /// Without a rewriter, LLM-backed operations are identities.
    pub rewriter: Option<&'a dyn Rewriter>,
    /// Revert LLM edits that drop a `__NAME__` placeholder.
    pub placeholder_guard: bool,
}

impl<'a> EditContext<'a> {
    pub fn new(lexicons: &'a Lexicons) -> Self {
        Self {
            chunker: &RuleBasedChunker,
            lexicons,
            rewriter: None,
            placeholder_guard: true,
        }
    }

    pub fn with_rewriter(mut self, rewriter: &'a dyn Rewriter) -> Self {
        self.rewriter = Some(rewriter);
        self
    }
}

/// One executed operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub op: String,
    /// `None` for operations applied to a list.
    pub level: Option<ChunkLevel>,
    /// Resolved inclusive spans, in argument order.
    pub spans: Vec<(usize, usize)>,
    /// Chunk count of the operation's input.
    pub input_chunks: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub records: Vec<OpRecord>,
    pub max_chunk_count: usize,
}

impl ExecutionTrace {
    pub fn merge(&mut self, other: ExecutionTrace) {
        self.max_chunk_count = self.max_chunk_count.max(other.max_chunk_count);
        self.records.extend(other.records);
    }

    fn push(&mut self, record: OpRecord) {
        self.max_chunk_count = self.max_chunk_count.max(record.input_chunks);
        self.records.push(record);
    }
}

/// Parses and executes a program.
pub fn execute_program(
    source: &str,
    bindings: Bindings<'_>,
    ctx: &EditContext<'_>,
) -> Result<(Value, ExecutionTrace), EditError> {
    execute(&Expr::parse(source)?, bindings, ctx)
}

pub fn execute(
    expr: &Expr,
    bindings: Bindings<'_>,
    ctx: &EditContext<'_>,
) -> Result<(Value, ExecutionTrace), EditError> {
    let mut run = Run {
        bindings,
        ctx,
        queue: VecDeque::new(),
        trace: ExecutionTrace::default(),
    };
    let value = run.eval(expr)?;
    Ok((value, run.trace))
}

struct Run<'a, 'b> {
    bindings: Bindings<'a>,
    ctx: &'b EditContext<'b>,
    queue: VecDeque<String>,
    trace: ExecutionTrace,
}

fn span_pair(span: Option<Span>) -> Vec<(usize, usize)> {
    span.map(|s| vec![(s.start, s.end)]).unwrap_or_default()
}

impl Run<'_, '_> {
    fn eval(&mut self, expr: &Expr) -> Result<Value, EditError> {
        match expr {
            Expr::Base => Ok(Value::Text(self.bindings.base.to_string())),
            Expr::Null => Ok(Value::Text(" ".to_string())),
            Expr::Demos => Ok(Value::List(self.bindings.demos.to_vec())),
            Expr::List(items) => Ok(Value::List(items.clone())),
            Expr::Concat(a, b) => {
                let left = self.eval(a)?.render();
                let right = self.eval(b)?.render();
                let parts: Vec<&str> = [left.as_str(), right.as_str()]
                    .into_iter()
                    .filter(|p| !p.is_empty())
                    .collect();
                Ok(Value::Text(parts.join("\n")))
            }
            Expr::Op(call) => {
                let input = self.eval(&call.texts)?;
                self.apply(call, input)
            }
        }
    }

    fn apply(&mut self, call: &OpCall, input: Value) -> Result<Value, EditError> {
        match input {
            Value::List(items) => {
                if !call.kind.is_list_op() {
                    return Err(EditError::Type(format!(
                        "`{}` cannot be applied to a list",
                        call.kind.name()
                    )));
                }
                let mut pieces: Vec<Piece> = items.into_iter().map(|text| Piece { text, origin: None }).collect();
                let input_chunks = pieces.len();
                let spans = list_op(call.kind, &mut pieces, &mut self.queue, &|slice| Piece {
                    text: slice.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n"),
                    origin: None,
                });
                self.trace.push(OpRecord {
                    op: call.kind.name().to_string(),
                    level: None,
                    spans,
                    input_chunks,
                });
                Ok(Value::List(pieces.into_iter().map(|p| p.text).collect()))
            }
            Value::Text(text) => {
                let level = call.effective_level();
                let mut buf = EditBuffer::new(self.ctx.chunker.chunk(&text, level));
                let input_chunks = buf.len();
                let spans = if call.kind.is_list_op() {
                    let mut pieces = std::mem::take(&mut buf.pieces);
                    let spans = list_op(call.kind, &mut pieces, &mut self.queue, &|slice| buf.merge_slice(slice));
                    buf.pieces = pieces;
                    spans
                } else {
                    self.text_op(call.kind, &mut buf)
                };
                self.trace.push(OpRecord {
                    op: call.kind.name().to_string(),
                    level: Some(level),
                    spans,
                    input_chunks,
                });
                Ok(Value::Text(buf.reassemble()))
            }
        }
    }

    fn text_op(&self, kind: OpKind, buf: &mut EditBuffer) -> Vec<(usize, usize)> {
        let index = match kind {
            OpKind::RemoveStopwords { index }
            | OpKind::Synonimise { index }
            | OpKind::Paraphrase { index }
            | OpKind::Summarise { index, .. } => index,
            _ => unreachable!("list operations are handled separately"),
        };
        let Some(span) = resolve(index, buf.len()) else {
            return Vec::new();
        };
        let merged = buf.merged(span);
        let edited = match kind {
            OpKind::RemoveStopwords { .. } => Some(remove_stopwords_text(&merged.text, self.ctx.lexicons)),
            OpKind::Synonimise { .. } => Some(synonimise_text(&merged.text, self.ctx.lexicons).0),
            OpKind::Paraphrase { .. } => self.rewrite(&merged.text, None),
            OpKind::Summarise { tenths, .. } => self.rewrite(&merged.text, Some(f64::from(tenths) / 10.0)),
            _ => unreachable!(),
        };
        if let Some(text) = edited.filter(|t| *t != merged.text) {
            buf.pieces.splice(
                span.start..=span.end,
                [Piece {
                    text,
                    origin: merged.origin,
                }],
            );
        }
        span_pair(Some(span))
    }

    fn rewrite(&self, text: &str, ratio: Option<f64>) -> Option<String> {
        let rewriter = self.ctx.rewriter?;
        let op = if ratio.is_some() { "summarise" } else { "paraphrase" };
        let reply = match ratio {
            Some(r) => rewriter.summarise(text, r),
            None => rewriter.paraphrase(text),
        };
        match reply {
            Ok(out) => {
                let lost = lost_placeholders(text, &out);
                if self.ctx.placeholder_guard && !lost.is_empty() {
                    warn!("{op} dropped placeholders {lost:?}; keeping the input");
                    None
                } else {
                    Some(out)
                }
            }
            Err(e) => {
                warn!("{op} failed: {e}; keeping the input");
                None
            }
        }
    }
}

/// Applies a list operation in place and returns the resolved spans.
fn list_op(
    kind: OpKind,
    pieces: &mut Vec<Piece>,
    queue: &mut VecDeque<String>,
    merge: &dyn Fn(&[Piece]) -> Piece,
) -> Vec<(usize, usize)> {
    let n = pieces.len();
    match kind {
        OpKind::Swap { index1, index2 } => {
            let (Some(a), Some(b)) = (resolve(index1, n), resolve(index2, n)) else {
                return Vec::new();
            };
            let spans = vec![(a.start, a.end), (b.start, b.end)];
            if a.overlaps(&b) {
                return spans;
            }
            let (first, second) = if a.start < b.start { (a, b) } else { (b, a) };
            let mut out = Vec::with_capacity(n);
            out.extend_from_slice(&pieces[..first.start]);
            out.extend_from_slice(&pieces[second.start..=second.end]);
            out.extend_from_slice(&pieces[first.end + 1..second.start]);
            out.extend_from_slice(&pieces[first.start..=first.end]);
            out.extend_from_slice(&pieces[second.end + 1..]);
            *pieces = out;
            spans
        }
        OpKind::Remove { index } => {
            let Some(span) = resolve(index, n) else {
                return Vec::new();
            };
            let removed = merge(&pieces[span.start..=span.end]);
            queue.push_back(removed.text);
            pieces.drain(span.start..=span.end);
            span_pair(Some(span))
        }
        OpKind::Readd { index } => {
            let at = resolve(ViewIndex::Atomic(index), n);
            let Some(text) = queue.pop_front() else {
                return span_pair(at);
            };
            let pos = at.map_or(0, |s| s.start);
            pieces.insert(pos, Piece { text, origin: None });
            span_pair(at)
        }
        OpKind::Duplicate { index1, index2 } => {
            let (Some(src), Some(dst)) = (resolve(index1, n), resolve(ViewIndex::Atomic(index2), n)) else {
                return Vec::new();
            };
            let copies: Vec<Piece> = pieces[src.start..=src.end].to_vec();
            pieces.splice(dst.start..dst.start, copies);
            vec![(src.start, src.end), (dst.start, dst.end)]
        }
        _ => unreachable!("not a list operation"),
    }
}

/// Splits a token into leading punctuation, alphanumeric core and trailing
/// punctuation.
fn split_core(token: &str) -> (&str, &str, &str) {
    let start = token.find(|c: char| c.is_alphanumeric()).unwrap_or(token.len());
    let end = token
        .rfind(|c: char| c.is_alphanumeric())
        .map_or(start, |i| i + token[i..].chars().next().map_or(1, char::len_utf8));
    (&token[..start], &token[start..end.max(start)], &token[end.max(start)..])
}

/// Deletes stop-words. Punctuation trailing a deleted word moves onto the
/// previous kept word; tokens containing placeholders are never touched.
pub fn remove_stopwords_text(text: &str, lexicons: &Lexicons) -> String {
    let (tokens, gaps) = split_whitespace_exact(text);
    // (token, gap that followed it in the input)
    let mut kept: Vec<(String, &str)> = Vec::new();
    for (i, token) in tokens.iter().enumerate() {
        let (_, core, suffix) = split_core(token);
        let drop = !core.is_empty() && !contains_placeholder(token) && lexicons.is_stopword(core);
        if !drop {
            kept.push((token.to_string(), gaps[i + 1]));
        } else if let Some(last) = kept.last_mut() {
            last.0.push_str(suffix);
        }
    }
    let mut out = String::from(gaps[0]);
    let n = kept.len();
    for (i, (token, gap)) in kept.into_iter().enumerate() {
        out.push_str(&token);
        if i + 1 < n {
            out.push_str(gap);
        }
    }
    if n > 0 {
        out.push_str(gaps[gaps.len() - 1]);
    }
    out
}

fn match_case(original: &str, replacement: &str) -> String {
    let mut chars = original.chars();
    let first_upper = chars.next().is_some_and(char::is_uppercase);
    let all_upper = original.chars().count() > 1 && original.chars().all(|c| !c.is_lowercase());
    if all_upper {
        replacement.to_uppercase()
    } else if first_upper {
        let mut r = replacement.chars();
        r.next()
            .map(|c| c.to_uppercase().chain(r).collect())
            .unwrap_or_default()
    } else {
        replacement.to_string()
    }
}

/// Replaces each word that has a lexicon entry with its first synonym and
/// returns the new text with the number of replacements.
pub fn synonimise_text(text: &str, lexicons: &Lexicons) -> (String, usize) {
    let (tokens, gaps) = split_whitespace_exact(text);
    let mut out = String::from(gaps[0]);
    let mut replaced = 0;
    for (i, token) in tokens.iter().enumerate() {
        let (prefix, core, suffix) = split_core(token);
        match lexicons.synonym(core).filter(|_| !contains_placeholder(token)) {
            Some(syn) => {
                out.push_str(prefix);
                out.push_str(&match_case(core, syn));
                out.push_str(suffix);
                replaced += 1;
            }
            None => out.push_str(token),
        }
        out.push_str(gaps[i + 1]);
    }
    (out, replaced)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::chunk;

    const EXAMPLE_TEXT: &str = "Given text, classify its sentiment as positive or negative.";
    const CHUNKS: &str = "chunk_1 chunk_2 chunk_3 chunk_4";

    fn run(program: &str, base: &str) -> (String, ExecutionTrace) {
        let lex = Lexicons::english();
        let ctx = EditContext::new(&lex);
        let (value, trace) = execute_program(program, Bindings::text(base), &ctx).unwrap();
        (value.render(), trace)
    }

    fn words(text: &str) -> Vec<String> {
        chunk(text, ChunkLevel::Word).chunks
    }

    #[test]
    fn base_and_null() {
        let (out, trace) = run("BASE", "keep me");
        assert_eq!(out, "keep me");
        assert!(trace.records.is_empty());
        assert_eq!(run("NULL", "anything").0, " ");
    }

    #[test]
    fn list_operation_examples() {
        let swap = run("swap_elements(index1=[0,1], index2=[3], level=word, texts=BASE)", CHUNKS).0;
        assert_eq!(words(&swap), ["chunk_4", "chunk_3", "chunk_1", "chunk_2"]);
        let remove = run("remove_element(index=[1], level=word, texts=BASE)", CHUNKS).0;
        assert_eq!(words(&remove), ["chunk_1", "chunk_3", "chunk_4"]);
        let readd = run(
            "readd_element(index=[1], level=word, texts=remove_element(index=[1], level=word, texts=BASE))",
            CHUNKS,
        )
        .0;
        assert_eq!(readd, CHUNKS);
        let dup = run("duplicate_element(index1=[0,1], index2=[3], level=word, texts=BASE)", CHUNKS).0;
        assert_eq!(
            words(&dup),
            ["chunk_1", "chunk_2", "chunk_3", "chunk_1", "chunk_2", "chunk_4"]
        );
    }

    #[test]
    fn readd_is_fifo_and_empty_queue_is_identity() {
        assert_eq!(run("readd_element(index=[2], level=word, texts=BASE)", CHUNKS).0, CHUNKS);
        let program = "readd_element(index=[0], level=word, texts=readd_element(index=[0], level=word, \
                       texts=remove_element(index=[2], level=word, texts=remove_element(index=[0], level=word, texts=BASE))))";
        // a = chunk_1 removed first, then b = chunk_4 (index 2 of the shortened list).
        // The first readd puts a at the front, the second puts b in front of it.
        assert_eq!(words(&run(program, CHUNKS).0), ["chunk_4", "chunk_1", "chunk_2", "chunk_3"]);
    }

    #[test]
    fn remove_everything_then_readd() {
        let program = "readd_element(index=[0], level=word, texts=remove_element(index=[0,9], level=word, texts=BASE))";
        let (out, trace) = run(program, "a b c");
        // 9 mod 3 = 0, so only the first chunk moves; check the all-span case too.
        assert_eq!(out, "a b c");
        assert_eq!(trace.records[0].spans, vec![(0, 0)]);
        let program = "readd_element(index=[0], level=word, texts=remove_element(index=[0,2], level=word, texts=BASE))";
        let (out, trace) = run(program, "a b c");
        assert_eq!(out, "a b c");
        assert_eq!(trace.records[1].input_chunks, 0);
    }

    #[test]
    fn swap_with_itself_and_overlap_are_identity() {
        assert_eq!(run("swap_elements(index1=[2], index2=[2], level=word, texts=BASE)", CHUNKS).0, CHUNKS);
        assert_eq!(run("swap_elements(index1=[0,2], index2=[1], level=word, texts=BASE)", CHUNKS).0, CHUNKS);
    }

    #[test]
    fn stopword_example() {
        let out = run("remove_stopwords(index=[0], texts=BASE)", EXAMPLE_TEXT).0;
        assert_eq!(out, "Given text, classify sentiment positive negative.");
    }

    #[test]
    fn synonym_example() {
        let out = run("synonimise(index=[0], texts=BASE)", EXAMPLE_TEXT).0;
        assert!(out.starts_with("Given text, categorise"), "{out}");
        let lex = Lexicons::empty();
        assert_eq!(synonimise_text(EXAMPLE_TEXT, &lex), (EXAMPLE_TEXT.to_string(), 0));
    }

    #[test]
    fn stopwords_leave_placeholders_alone() {
        let lex = Lexicons::from_texts("a\nthe\n", "").unwrap();
        assert_eq!(remove_stopwords_text("the __A__ and a cat.", &lex), "__A__ and cat.");
        assert_eq!(remove_stopwords_text("cat, the.", &lex), "cat,.");
        assert_eq!(remove_stopwords_text("the a", &lex), "");
    }

    #[test]
    fn synonyms_keep_case_and_punctuation() {
        let lex = Lexicons::from_texts("", "classify\tcategorise\n").unwrap();
        assert_eq!(
            synonimise_text("Classify, CLASSIFY (classify)", &lex),
            ("Categorise, CATEGORISE (categorise)".to_string(), 3)
        );
    }

    #[test]
    fn semantic_ops_without_rewriter_are_identity() {
        let (out, trace) = run("paraphrase(index=[0], texts=BASE)", EXAMPLE_TEXT);
        assert_eq!(out, EXAMPLE_TEXT);
        assert_eq!(trace.max_chunk_count, 1);
    }

    #[test]
    fn list_inputs_reject_text_ops() {
        let lex = Lexicons::english();
        let ctx = EditContext::new(&lex);
        let demos = vec!["__ICL_0__".to_string()];
        let bindings = Bindings {
            base: "",
            demos: &demos,
        };
        assert!(matches!(
            execute_program("paraphrase(index=[0], texts=DEMOS)", bindings, &ctx),
            Err(EditError::Type(_))
        ));
    }

    #[test]
    fn demonstration_lists_are_edited_as_lists() {
        let lex = Lexicons::english();
        let ctx = EditContext::new(&lex);
        let demos: Vec<String> = (0..5).map(|i| format!("__ICL_{i}__")).collect();
        let bindings = Bindings {
            base: "Examples:",
            demos: &demos,
        };
        let (value, trace) =
            execute_program("swap_elements(index1=[0], index2=[4], level=word, texts=DEMOS)", bindings, &ctx).unwrap();
        assert_eq!(
            value,
            Value::List(vec![
                "__ICL_4__".into(),
                "__ICL_1__".into(),
                "__ICL_2__".into(),
                "__ICL_3__".into(),
                "__ICL_0__".into()
            ])
        );
        assert_eq!(trace.records[0].level, None);
        let (value, _) = execute_program("BASE + DEMOS", bindings, &ctx).unwrap();
        assert_eq!(value.render(), "Examples:\n__ICL_0__\n__ICL_1__\n__ICL_2__\n__ICL_3__\n__ICL_4__");
    }

    struct Scripted;

    impl Rewriter for Scripted {
        fn paraphrase(&self, text: &str) -> Result<String, String> {
            match text {
                EXAMPLE_TEXT => Ok("Is the sentiment of the given text positive or negative.".into()),
                _ => Ok("dropped".into()),
            }
        }

        fn summarise(&self, text: &str, ratio: f64) -> Result<String, String> {
            let words: Vec<&str> = text.split_whitespace().collect();
            let keep = (words.len() as f64 * ratio).round() as usize;
            Ok(words[..keep].join(" "))
        }
    }

    #[test]
    fn llm_ops_and_placeholder_guard() {
        let lex = Lexicons::english();
        let ctx = EditContext::new(&lex).with_rewriter(&Scripted);
        let exec = |p: &str, base: &str| execute_program(p, Bindings::text(base), &ctx).unwrap().0.render();
        assert_eq!(
            exec("paraphrase(index=[0], texts=BASE)", EXAMPLE_TEXT),
            "Is the sentiment of the given text positive or negative."
        );
        let guarded = "Classify __TASK_INPUT_0__ now.";
        assert_eq!(exec("paraphrase(index=[0], texts=BASE)", guarded), guarded);
        assert_eq!(
            exec("summarise(percent=0.5, index=[0], texts=BASE)", "one two three four five six seven eight nine ten."),
            "one two three four five"
        );
    }

    #[test]
    fn nested_remove_of_swap() {
        // swap gives [chunk_4, chunk_3, chunk_1, chunk_2]; removing index 1 drops chunk_3.
        let program = "remove_element(index=[1], level=word, texts=swap_elements(index1=[0,1], index2=[3], level=word, texts=BASE))";
        let (out, trace) = run(program, CHUNKS);
        assert_eq!(out, "chunk_4 chunk_1 chunk_2");
        assert_eq!(trace.records.len(), 2);
        assert_eq!(trace.records[0].op, "swap_elements");
        assert_eq!(trace.max_chunk_count, 4);
    }
}
