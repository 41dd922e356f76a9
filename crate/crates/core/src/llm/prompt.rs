use serde::{Deserialize, Serialize};

use super::LlmError;

/// Which prompt template a request was rendered from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    /// Stance analysis in first-order logic for one sentence/target pair.
    P1,
    /// Summarisation of a cluster of predicates.
    P2,
}

const P1_TEMPLATE: &str = "Your task is to analyze the attitude of the [{sentence}] towards the [{target}] \
using first-order logic. Formulate a response and conclude with a statement indicating the attitude \
(Support, Opposed, Neutral).";

const P2_TEMPLATE: &str = "You are provided with several descriptions, each representing a predicate in \
first-order logic. Your task is to create new descriptions that summarize the main points of these predicates.";

pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_P2_MAX_LINES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub template: TemplateId,
    pub prompt: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Predicate lines dropped by the P2 line cap. Not part of the cache key.
    #[serde(default)]
    pub truncated_lines: usize,
}

impl PromptRequest {
    fn new(template: TemplateId, prompt: String) -> Self {
        Self {
            template,
            prompt,
            model: String::new(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            truncated_lines: 0,
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// SHA-256 over (template, prompt, model, temperature), hex encoded.
    pub fn cache_key(&self) -> String {
        let canonical = serde_json::json!([
            self.template,
            self.prompt,
            self.model,
            format!("{:?}", self.temperature),
        ]);
        crate::sha256_hex(canonical.to_string().as_bytes())
    }
}

/// Renders P1 with the sentence and target substituted into the bracketed slots.
pub fn render_p1(sentence: &str, target: &str) -> Result<PromptRequest, LlmError> {
    if sentence.trim().is_empty() {
        return Err(LlmError::EmptyField("sentence"));
    }
    if target.trim().is_empty() {
        return Err(LlmError::EmptyField("target"));
    }
    let (head, tail) = P1_TEMPLATE.split_once("{sentence}").expect("sentence slot");
    let (mid, end) = tail.split_once("{target}").expect("target slot");
    let prompt = format!("{head}{sentence}{mid}{target}{end}");
    Ok(PromptRequest::new(TemplateId::P1, prompt))
}

/// Renders P2 with one predicate per line, keeping at most `max_lines`.
pub fn render_p2(predicates: &[String], max_lines: usize) -> Result<PromptRequest, LlmError> {
    if predicates.is_empty() {
        return Err(LlmError::EmptyField("predicates"));
    }
    let keep = predicates.len().min(max_lines.max(1));
    let mut prompt = String::from(P2_TEMPLATE);
    prompt.push_str("\n\n");
    prompt.push_str(&predicates[..keep].join("\n"));
    let mut req = PromptRequest::new(TemplateId::P2, prompt);
    req.truncated_lines = predicates.len() - keep;
    Ok(req)
}
