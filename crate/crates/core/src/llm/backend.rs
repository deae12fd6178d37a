use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;

use super::{LlmError, LlmRequest};
use crate::data::Row;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
}

impl BackendReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            prompt_tokens: None,
            completion_tokens: None,
        }
    }
}

/// One uncached completion call.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &LlmRequest) -> Result<BackendReply, LlmError>;
}

/// Chat-completions over HTTP: POST `{model, messages, temperature,
/// max_tokens}` and read `choices[0].message.content`.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            api_key,
            agent,
        }
    }
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: Option<u32>,
    completion_tokens: Option<u32>,
}

/// Parses a chat-completions response body.
pub(crate) fn parse_chat_reply(body: &str) -> Result<BackendReply, LlmError> {
    let reply: ChatReply = serde_json::from_str(body).map_err(|e| LlmError::Malformed(e.to_string()))?;
    let text = reply
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| LlmError::Malformed("no choices[0].message.content".into()))?;
    Ok(BackendReply {
        text,
        prompt_tokens: reply.usage.as_ref().and_then(|u| u.prompt_tokens),
        completion_tokens: reply.usage.as_ref().and_then(|u| u.completion_tokens),
    })
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, req: &LlmRequest) -> Result<BackendReply, LlmError> {
        let body = serde_json::json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut call = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send(body.to_string()).map_err(|e| match e {
            ureq::Error::Timeout(_) => LlmError::Timeout,
            other => LlmError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Status { code: status, body: text });
        }
        parse_chat_reply(&text)
    }
}

/// Replies with the last user message.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoBackend;

impl Backend for EchoBackend {
    fn name(&self) -> &str {
        "echo"
    }

    fn complete(&self, req: &LlmRequest) -> Result<BackendReply, LlmError> {
        Ok(BackendReply::text(req.last_user_message()))
    }
}

fn summarise_ratio_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"approximately (\d+)\\?% of the length").expect("valid regex"))
}

/// Text between the first pair of triple-backtick fences.
fn fenced_text(message: &str) -> Option<&str> {
    let start = message.find("```\n")? + 4;
    let end = message[start..].rfind("\n```")? + start;
    Some(&message[start..end])
}

fn answer_json(text: &str) -> String {
    serde_json::json!({ "answer": text }).to_string()
}

/// Understands the edit templates: a summarise request is answered with
/// the leading share of words given by its ratio, a paraphrase request with
/// the text unchanged. Anything else is echoed.
#[derive(Debug, Clone, Copy, Default)]
pub struct TruncateBackend;

impl TruncateBackend {
    pub fn truncate(text: &str, ratio: f64) -> String {
        let words: Vec<&str> = text.split_whitespace().collect();
        let keep = ((words.len() as f64) * ratio).round() as usize;
        words[..keep.min(words.len())].join(" ")
    }
}

impl Backend for TruncateBackend {
    fn name(&self) -> &str {
        "truncate"
    }

    fn complete(&self, req: &LlmRequest) -> Result<BackendReply, LlmError> {
        let message = req.last_user_message();
        let Some(text) = fenced_text(message) else {
            return Ok(BackendReply::text(message));
        };
        let reply = match summarise_ratio_regex().captures(message) {
            Some(caps) => {
                let percent: f64 = caps[1].parse().unwrap_or(100.0);
                answer_json(&Self::truncate(text, percent / 100.0))
            }
            None => answer_json(text),
        };
        Ok(BackendReply::text(reply))
    }
}

/// Answers from a fixed table keyed by the exact last user message.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ScriptedBackend {
    #[serde(default)]
    replies: HashMap<String, String>,
    #[serde(default)]
    default: Option<String>,
}

impl ScriptedBackend {
    pub fn new(replies: HashMap<String, String>, default: Option<String>) -> Self {
        Self { replies, default }
    }

    /// Reads `{"replies": {message: reply, ...}, "default": reply}`.
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::Malformed(format!("scripted table: {e}")))
    }
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &LlmRequest) -> Result<BackendReply, LlmError> {
        self.replies
            .get(req.last_user_message())
            .or(self.default.as_ref())
            .map(BackendReply::text)
            .ok_or_else(|| LlmError::Malformed("no scripted reply for this request".into()))
    }
}

/// Answers task prompts from a hidden truth table.
///
/// The case is the truth-table input occurring earliest in the prompt
/// (longest on ties). If poison strings are configured, case `j` is paired
/// with poison `j mod p` and answered wrongly while that poison appears in
/// the prompt. If a format marker is configured, the reply is an answer
/// object only when the marker appears; otherwise it is unparseable prose.
#[derive(Debug, Clone)]
pub struct LabelOracle {
    truth: Vec<(String, String)>,
    labels: BTreeSet<String>,
    poisons: Vec<String>,
    format_marker: Option<String>,
    answer_key: String,
}

impl LabelOracle {
    pub fn new<'a>(rows: impl IntoIterator<Item = &'a Row>) -> Self {
        let truth: Vec<(String, String)> = rows
            .into_iter()
            .filter(|r| !r.input.is_empty())
            .map(|r| (r.input.clone(), r.label.clone()))
            .collect();
        let labels = truth.iter().map(|(_, l)| l.clone()).collect();
        Self {
            truth,
            labels,
            poisons: Vec::new(),
            format_marker: None,
            answer_key: "Answer".into(),
        }
    }

    pub fn with_poisons(mut self, poisons: Vec<String>) -> Self {
        self.poisons = poisons;
        self
    }

    pub fn with_format_marker(mut self, marker: Option<String>) -> Self {
        self.format_marker = marker;
        self
    }

    pub fn with_answer_key(mut self, key: impl Into<String>) -> Self {
        self.answer_key = key.into();
        self
    }

    /// Index of the case a prompt is about.
    pub fn locate(&self, prompt: &str) -> Option<usize> {
        self.truth
            .iter()
            .enumerate()
            .filter_map(|(i, (key, _))| prompt.find(key.as_str()).map(|pos| (pos, std::cmp::Reverse(key.len()), i)))
            .min()
            .map(|(_, _, i)| i)
    }

    fn wrong_label(&self, label: &str) -> String {
        self.labels
            .iter()
            .find(|l| l.as_str() != label)
            .cloned()
            .unwrap_or_else(|| "unknown".into())
    }

    pub fn answer(&self, prompt: &str) -> String {
        let Some(case) = self.locate(prompt) else {
            return "I could not find a question to answer.".into();
        };
        let label = &self.truth[case].1;
        let poisoned = !self.poisons.is_empty() && prompt.contains(self.poisons[case % self.poisons.len()].as_str());
        let answer = if poisoned { self.wrong_label(label) } else { label.clone() };
        let formatted = self.format_marker.as_ref().is_none_or(|m| prompt.contains(m.as_str()));
        if formatted {
            format!("{{'Thought': 'I compared the case with what I know.', '{}': '{}'}}", self.answer_key, answer)
        } else {
            format!("I believe this one is {answer}.")
        }
    }
}

impl Backend for LabelOracle {
    fn name(&self) -> &str {
        "label_oracle"
    }

    fn complete(&self, req: &LlmRequest) -> Result<BackendReply, LlmError> {
        Ok(BackendReply::text(self.answer(req.last_user_message())))
    }
}
