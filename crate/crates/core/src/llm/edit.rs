//! Prompt templates and calls for LLM-backed edit operations.

use std::sync::Arc;

use super::{extract_json_value, Gateway, LlmError, LlmRequest, ModelSettings};
use crate::edit::Rewriter;

pub const PARAPHRASE_TEMPLATE: &str = "Paraphrase the following text while maintaining as much of the original meaning as possible. Give the paraphrased answer in JSON format as follows: {\"answer\": \"your paraphased text\"}. \n\nThe original text: \n```\n{input_text}\n```";

pub const SUMMARISE_TEMPLATE: &str = "Reduce the text length of this text by slightly rephrasing and give the final answer in JSON format as follows: {\"answer\": \"your shortened text\"}. The length of your output should be approximately {ratio}% of the length of the original text.\n\nThe original_text: \n```\n{input_text}\n```";

/// Example answers shown in the templates; a reply repeating one of them
/// has not done the edit.
const TEMPLATE_EXAMPLES: [&str; 2] = ["your paraphased text", "your shortened text"];

pub fn paraphrase_prompt(text: &str) -> String {
    PARAPHRASE_TEMPLATE.replace("{input_text}", text)
}

/// `ratio` is rendered as a whole percentage.
pub fn summarise_prompt(text: &str, ratio: f64) -> String {
    let percent = (ratio * 100.0).round() as i64;
    SUMMARISE_TEMPLATE
        .replace("{ratio}", &percent.to_string())
        .replace("{input_text}", text)
}

fn answer_of(reply: &str) -> Result<String, LlmError> {
    let answer = extract_json_value(reply, "answer").ok_or_else(|| LlmError::Parse(reply.chars().take(200).collect()))?;
    if TEMPLATE_EXAMPLES.contains(&answer.trim()) {
        return Err(LlmError::Parse("reply repeats the template example".into()));
    }
    Ok(answer)
}

pub fn paraphrase_call(gateway: &Gateway, settings: &ModelSettings, text: &str) -> Result<String, LlmError> {
    let reply = gateway.complete(&LlmRequest::user(settings, paraphrase_prompt(text)))?;
    answer_of(&reply.text)
}

pub fn summarise_call(gateway: &Gateway, settings: &ModelSettings, text: &str, ratio: f64) -> Result<String, LlmError> {
    let reply = gateway.complete(&LlmRequest::user(settings, summarise_prompt(text, ratio)))?;
    answer_of(&reply.text)
}

/// [`Rewriter`] backed by a gateway and an editing model.
#[derive(Clone)]
pub struct LlmRewriter {
    gateway: Arc<Gateway>,
    settings: ModelSettings,
}

impl LlmRewriter {
    pub fn new(gateway: Arc<Gateway>, settings: ModelSettings) -> Self {
        Self { gateway, settings }
    }
}

impl Rewriter for LlmRewriter {
    fn paraphrase(&self, text: &str) -> Result<String, String> {
        paraphrase_call(&self.gateway, &self.settings, text).map_err(|e| e.to_string())
    }

    fn summarise(&self, text: &str, ratio: f64) -> Result<String, String> {
        summarise_call(&self.gateway, &self.settings, text, ratio).map_err(|e| e.to_string())
    }
}
