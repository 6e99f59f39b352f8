//! Chat-completions client over HTTP.

use std::time::Duration;

use anyhow::{bail, Result};
use serde_json::{json, Value};

use sqa_forge_core::augment::llm::{ChatClient, ChatMessage};
use sqa_forge_core::error::LlmError;
use sqa_forge_core::model::QARecord;

use crate::config::LlmSettings;

pub struct HttpChatClient {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    retries: u32,
    temperature: f64,
}

impl HttpChatClient {
    /// Reads the API key from the configured environment variable. A missing
    /// key is allowed for local endpoints.
    pub fn from_settings(s: &LlmSettings) -> Result<Self> {
        if s.endpoint.is_empty() {
            bail!("llm.endpoint is not set");
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(s.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint: s.endpoint.clone(),
            model: s.model.clone(),
            api_key: std::env::var(&s.api_key_env).ok().filter(|k| !k.is_empty()),
            retries: s.retries,
            temperature: s.temperature,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, (LlmError, bool)> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| (LlmError::EndpointUnavailable(e.to_string()), true))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err((LlmError::EndpointUnavailable(format!("HTTP {status}")), true));
        }
        if status >= 400 {
            return Err((LlmError::EndpointUnavailable(format!("HTTP {status}")), false));
        }
        let reply: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| (LlmError::MalformedResponse(e.to_string()), false))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| (LlmError::MalformedResponse("no choices[0].message.content".into()), false))
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
        });
        let mut tries = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((e, retryable)) => {
                    if !retryable || tries >= self.retries {
                        return Err(e);
                    }
                    std::thread::sleep(Duration::from_millis(250 << tries.min(6)));
                    tries += 1;
                }
            }
        }
    }
}

pub const TEXT_ONLY_INSTRUCTION: &str = "You answer questions about an indoor scene that you cannot see. \
Use only the situation and the question. Reply with the answer alone, in a few words.";

/// Prompt for answering a question from its text alone.
pub fn text_only_prompt(record: &QARecord) -> Vec<ChatMessage> {
    vec![
        ChatMessage::new("system", TEXT_ONLY_INSTRUCTION),
        ChatMessage::new("user", format!("Situation: {}\nQuestion: {}", record.situation, record.question)),
    ]
}

/// First line of a reply, without surrounding quotes or whitespace.
pub fn clean_answer(reply: &str) -> String {
    reply
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .trim_matches(|c| c == '"' || c == '\'')
        .trim()
        .to_string()
}
