//! Task definitions, answer extraction, metrics and prompt fitness.

use std::collections::HashMap;
use std::sync::OnceLock;

use log::debug;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::data::Row;
use crate::llm::{extract_json_value, Gateway, LlmRequest, ModelSettings};
use crate::placeholder::placeholder_regex;
use crate::prompt::{instantiate, retrieve_icl, DEFAULT_ICL_SLOTS};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("no rows to evaluate")]
    EmptyRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    TokenF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub name: String,
    pub metric: Metric,
    /// Admissible labels, informational for accuracy tasks.
    pub labels: Vec<String>,
    pub answer_key: String,
    /// Demonstrations retrieved per case.
    pub icl_k: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            name: "task".into(),
            metric: Metric::Accuracy,
            labels: Vec::new(),
            answer_key: "Answer".into(),
            icl_k: DEFAULT_ICL_SLOTS,
        }
    }
}

fn fallback_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Answer\s*[:=]\s*(.+)").expect("valid regex"))
}

/// The answer in a model reply: the `key` field of the last answer object,
/// else the text after `Answer:` on the last line that has one.
pub fn extract_answer(raw: &str, key: &str) -> Option<String> {
    if let Some(v) = extract_json_value(raw, key) {
        return Some(v.trim().to_string());
    }
    raw.lines()
        .rev()
        .find_map(|line| fallback_regex().captures(line))
        .map(|c| c[1].trim().to_string())
        .filter(|s| !s.is_empty())
}

/// Lowercases and drops punctuation and whitespace.
pub fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace() && !c.is_ascii_punctuation() && !c.is_ascii_control())
        .flat_map(char::to_lowercase)
        .collect()
}

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(normalize).filter(|t| !t.is_empty()).collect()
}

/// F1 of the token multisets of `pred` and `label`.
pub fn token_f1(pred: &str, label: &str) -> f64 {
    let (p, l) = (tokens(pred), tokens(label));
    if p.is_empty() || l.is_empty() {
        return if p.is_empty() && l.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &l {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / l.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn score_case(pred: Option<&str>, label: &str, metric: Metric) -> f64 {
    let Some(pred) = pred else { return 0.0 };
    match metric {
        Metric::Accuracy => f64::from(u8::from(normalize(pred) == normalize(label))),
        Metric::TokenF1 => token_f1(pred, label),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    pub prediction: Option<String>,
    pub score: f64,
    /// The completion call failed after retries.
    pub call_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub cases: Vec<CaseResult>,
    pub fitness: f64,
    pub parse_failures: usize,
    pub llm_calls: usize,
}

impl FitnessReport {
    /// All cases scored zero without calling the model, for prompts that
    /// could not be built.
    pub fn failed(rows: &[Row]) -> Self {
        Self {
            cases: rows
                .iter()
                .map(|r| CaseResult {
                    id: r.id.clone(),
                    prediction: None,
                    score: 0.0,
                    call_failed: false,
                })
                .collect(),
            fitness: 0.0,
            parse_failures: 0,
            llm_calls: 0,
        }
    }
}

/// Everything needed to score a prompt.
pub struct Evaluator<'a> {
    pub task: &'a TaskSpec,
    pub gateway: &'a Gateway,
    pub model: &'a ModelSettings,
    /// Pool for demonstration retrieval.
    pub train: &'a [Row],
}

impl Evaluator<'_> {
    fn case(&self, prompt: &str, uses_demos: bool, row: &Row) -> CaseResult {
        let demos = if uses_demos {
            retrieve_icl(&row.input, self.train, self.task.icl_k, Some(&row.id))
        } else {
            Vec::new()
        };
        let text = instantiate(prompt, row, &demos);
        let (prediction, call_failed) = match self.gateway.complete(&LlmRequest::user(self.model, text)) {
            Ok(reply) => (extract_answer(&reply.text, &self.task.answer_key), false),
            Err(e) => {
                debug!("case {} failed: {e}", row.id);
                (None, true)
            }
        };
        let score = score_case(prediction.as_deref(), &row.label, self.task.metric);
        CaseResult {
            id: row.id.clone(),
            prediction,
            score,
            call_failed,
        }
    }

    /// Instantiates `prompt` for every row, queries the model and scores the
    /// answers. Cases run concurrently; results keep row order.
    pub fn evaluate(&self, prompt: &str, rows: &[Row]) -> Result<FitnessReport, TaskError> {
        if rows.is_empty() {
            return Err(TaskError::EmptyRows);
        }
        let uses_demos = placeholder_regex()
            .find_iter(prompt)
            .any(|m| m.as_str().starts_with("__ICL_"));
        let cases: Vec<CaseResult> = rows.par_iter().map(|row| self.case(prompt, uses_demos, row)).collect();
        let fitness = cases.iter().map(|c| c.score).sum::<f64>() / cases.len() as f64;
        let parse_failures = cases.iter().filter(|c| c.prediction.is_none() && !c.call_failed).count();
        Ok(FitnessReport {
            llm_calls: cases.len(),
            parse_failures,
            fitness,
            cases,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm::{LabelOracle, ScriptedBackend};

    #[test]
    fn extraction() {
        assert_eq!(extract_answer("{'Thought':'t','Answer':'yes'}", "Answer").as_deref(), Some("yes"));
        assert_eq!(extract_answer("Answer: Hateful", "Answer").as_deref(), Some("Hateful"));
        assert_eq!(extract_answer("Answer = 3\nthen\nAnswer: 4 ", "Answer").as_deref(), Some("4"));
        assert_eq!(extract_answer("no braces no key", "Answer"), None);
    }

    #[test]
    fn scoring() {
        assert_eq!(score_case(Some("Yes"), "yes", Metric::Accuracy), 1.0);
        assert_eq!(score_case(Some(" Not Hateful."), "not hateful", Metric::Accuracy), 1.0);
        assert_eq!(score_case(Some("no"), "yes", Metric::Accuracy), 0.0);
        assert_eq!(score_case(Some("net sales 2019"), "2019 net sales", Metric::TokenF1), 1.0);
        assert_eq!(score_case(None, "yes", Metric::TokenF1), 0.0);
        // precision 1/2, recall 1/3
        assert!((token_f1("sales up", "net sales 2019") - 0.4).abs() < 1e-12);
        assert!((token_f1("a a b", "a b b") - 2.0 / 3.0).abs() < 1e-12);
    }

    fn rows(n: usize) -> Vec<Row> {
        (0..n)
            .map(|i| Row::new(format!("r{i}"), format!("case number {i} text"), if i % 3 == 0 { "yes" } else { "no" }))
            .collect()
    }

    #[test]
    fn oracle_scores_one_and_garbage_scores_zero() {
        let data = rows(10);
        let task = TaskSpec::default();
        let model = ModelSettings::default();
        let oracle = Gateway::new(Arc::new(LabelOracle::new(&data)));
        let eval = Evaluator {
            task: &task,
            gateway: &oracle,
            model: &model,
            train: &data,
        };
        let report = eval.evaluate("Classify: __TASK_INPUT_0__\n__ICL_0__", &data).unwrap();
        assert_eq!(report.fitness, 1.0);
        assert_eq!(report.cases.len(), 10);
        assert_eq!(report.cases[3].id, "r3");

        let garbage = Gateway::new(Arc::new(ScriptedBackend::new(Default::default(), Some("~~~".into()))));
        let eval = Evaluator {
            gateway: &garbage,
            ..eval
        };
        let report = eval.evaluate("Classify: __TASK_INPUT_0__", &data).unwrap();
        assert_eq!(report.fitness, 0.0);
        assert_eq!(report.parse_failures, 10);
        assert!(matches!(eval.evaluate("x", &[]), Err(TaskError::EmptyRows)));
    }

    #[test]
    fn hand_scored_aggregate() {
        let data = rows(10);
        // Answer "yes" everywhere: correct exactly for rows 0, 3, 6, 9.
        let gw = Gateway::new(Arc::new(ScriptedBackend::new(
            Default::default(),
            Some("{'Answer': 'yes'}".into()),
        )));
        let task = TaskSpec::default();
        let model = ModelSettings::default();
        let eval = Evaluator {
            task: &task,
            gateway: &gw,
            model: &model,
            train: &data,
        };
        let report = eval.evaluate("__TASK_INPUT_0__", &data).unwrap();
        assert!((report.fitness - 0.4).abs() < 1e-12);
        let mean = report.cases.iter().map(|c| c.score).sum::<f64>() / 10.0;
        assert_eq!(report.fitness, mean);
    }
}
