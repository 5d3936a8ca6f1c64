//! HTTP backend for chat/embedding endpoints.
//!
//! Speaks the common JSON chat protocol: requests carry
//! `{model, messages: [{role, content}], temperature: 0}` against
//! `/v1/chat/completions` and `{model, input}` against
//! `/v1/embeddings`. Frame attachments are rendered into the message
//! content as caption placeholders, so text-only endpoints work
//! unmodified.

use super::{validate_turns, Backend, BackendError, ChatTurn};
use crate::frame::FrameRef;
use crate::time::TimeInterval;
use serde::Deserialize;
use serde_json::json;
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Endpoint base, e.g. `http://localhost:8080`.
    pub base_url: String,
    pub chat_model: String,
    pub embed_model: String,
    pub timeout: Duration,
    /// Expected embedding dimensionality; anything else is rejected.
    pub embed_dim: usize,
}

pub struct RemoteBackend {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedRow>,
}

#[derive(Deserialize)]
struct EmbedRow {
    embedding: Vec<f32>,
}

fn render_content(text: &str, attachments: &[FrameRef]) -> String {
    if attachments.is_empty() {
        return text.to_string();
    }
    let mut out = String::new();
    for f in attachments {
        out.push_str(&format!("[frame t={}] {}\n", f.ts, f.caption));
    }
    out.push_str(text);
    out
}

fn map_transport(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => BackendError::Timeout,
        other => BackendError::Transport(other.to_string()),
    }
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent_cfg = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build();
        RemoteBackend {
            cfg,
            agent: agent_cfg.into(),
        }
    }

    fn post_json(&self, path: &str, body: serde_json::Value) -> Result<String, BackendError> {
        let url = format!("{}{}", self.cfg.base_url.trim_end_matches('/'), path);
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(body.to_string())
            .map_err(map_transport)?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Endpoint { status, body: text });
        }
        Ok(text)
    }

    fn chat(&self, turns: &[ChatTurn]) -> Result<String, BackendError> {
        validate_turns(turns)?;
        let messages: Vec<serde_json::Value> = turns
            .iter()
            .map(|t| {
                json!({
                    "role": t.role.as_str(),
                    "content": render_content(&t.text, &t.attachments),
                })
            })
            .collect();
        let body = json!({
            "model": self.cfg.chat_model,
            "messages": messages,
            "temperature": 0,
        });
        let text = self.post_json("/v1/chat/completions", body)?;
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::BadResponse("empty choices".to_string()))
    }
}

impl Backend for RemoteBackend {
    fn summarize_window(
        &self,
        keyframes: &[FrameRef],
        interval: TimeInterval,
    ) -> Result<String, BackendError> {
        let turns = [
            ChatTurn::system(
                "Summarize the observable facts of this video window in one \
                 dense paragraph. Start with the window interval in brackets.",
            ),
            ChatTurn::user(format!("Window {interval}."), keyframes.to_vec()),
        ];
        self.chat(&turns)
    }

    fn merge_summaries(&self, a: &str, b: &str) -> Result<String, BackendError> {
        let turns = [
            ChatTurn::system(
                "Merge these two consecutive event summaries into one concise \
                 summary that preserves all distinct facts and their order.",
            ),
            ChatTurn::user(format!("First: {a}\nSecond: {b}"), vec![]),
        ];
        self.chat(&turns)
    }

    fn fold_qa_summary(
        &self,
        prev: &str,
        question: &str,
        answer: &str,
    ) -> Result<String, BackendError> {
        let turns = [
            ChatTurn::system(
                "Update the running dialogue summary with the new exchange. \
                 Keep names and references consistent; stay brief.",
            ),
            ChatTurn::user(
                format!("Summary so far: {prev}\nQ: {question}\nA: {answer}"),
                vec![],
            ),
        ];
        self.chat(&turns)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        let body = json!({ "model": self.cfg.embed_model, "input": text });
        let raw = self.post_json("/v1/embeddings", body)?;
        let parsed: EmbedResponse =
            serde_json::from_str(&raw).map_err(|e| BackendError::BadResponse(e.to_string()))?;
        let embedding = parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| BackendError::BadResponse("empty embedding data".to_string()))?;
        if embedding.len() != self.cfg.embed_dim {
            return Err(BackendError::DimMismatch {
                expected: self.cfg.embed_dim,
                got: embedding.len(),
            });
        }
        Ok(embedding)
    }

    fn reason(&self, turns: &[ChatTurn]) -> Result<String, BackendError> {
        self.chat(turns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::Timestamp;

    #[test]
    fn attachments_render_as_caption_placeholders() {
        let frames = vec![FrameRef::new(Timestamp::from_secs(1.5), "a red car", 7)];
        let out = render_content("what now?", &frames);
        assert_eq!(out, "[frame t=1.5] a red car\nwhat now?");
        assert_eq!(render_content("plain", &[]), "plain");
    }

    #[test]
    fn unreachable_endpoint_surfaces_a_transport_error() {
        let be = RemoteBackend::new(RemoteConfig {
            base_url: "http://127.0.0.1:1".to_string(),
            chat_model: "m".to_string(),
            embed_model: "e".to_string(),
            timeout: Duration::from_millis(200),
            embed_dim: 4,
        });
        let err = be.reason(&[ChatTurn::user("hi", vec![])]).unwrap_err();
        assert!(
            matches!(err, BackendError::Transport(_) | BackendError::Timeout),
            "unexpected: {err:?}"
        );
    }
}
