//! Model-capability contracts.
//!
//! One backend instance serves every role — window summarization,
//! summary merging, QA folding, embedding, and reasoning — mirroring a
//! deployment where a single model handles all management tasks. Two
//! implementations ship: a bit-deterministic mock for tests and replay,
//! and an HTTP client for real chat/embedding endpoints.

mod mock;
mod remote;

pub use mock::{mock_embed, token_bucket, MockBackend};
pub use remote::{RemoteBackend, RemoteConfig};

use crate::frame::FrameRef;
use crate::time::TimeInterval;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

/// One message of a reasoning request. Frame attachments ride alongside
/// the text; text-only endpoints render them as caption placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    pub attachments: Vec<FrameRef>,
}

impl ChatTurn {
    pub fn system(text: impl Into<String>) -> Self {
        ChatTurn {
            role: Role::System,
            text: text.into(),
            attachments: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>, attachments: Vec<FrameRef>) -> Self {
        ChatTurn {
            role: Role::User,
            text: text.into(),
            attachments,
        }
    }

    pub fn tool(text: impl Into<String>, attachments: Vec<FrameRef>) -> Self {
        ChatTurn {
            role: Role::Tool,
            text: text.into(),
            attachments,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend call timed out")]
    Timeout,
    #[error("endpoint error: status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("embedding dim mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed request: {0}")]
    InvalidTurns(String),
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
}

/// A system turn may appear only as the first message, at most once.
pub fn validate_turns(turns: &[ChatTurn]) -> Result<(), BackendError> {
    for (i, turn) in turns.iter().enumerate() {
        if turn.role == Role::System && i != 0 {
            return Err(BackendError::InvalidTurns(
                "system turn must be first and unique".to_string(),
            ));
        }
    }
    Ok(())
}

/// The capability surface every model backend provides. All operations
/// are total: they return a value or an error, never hang (the remote
/// client enforces a timeout).
pub trait Backend: Send + Sync {
    /// Describe one closed window from its keyframes.
    fn summarize_window(
        &self,
        keyframes: &[FrameRef],
        interval: TimeInterval,
    ) -> Result<String, BackendError>;

    /// Fuse two adjacent event summaries into one.
    fn merge_summaries(&self, a: &str, b: &str) -> Result<String, BackendError>;

    /// Fold an answered question into the rolling dialogue digest.
    fn fold_qa_summary(&self, prev: &str, question: &str, answer: &str)
        -> Result<String, BackendError>;

    /// Embed text into a fixed-dimension vector.
    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError>;

    /// One reasoning turn over a message list; returns the raw model
    /// text for outcome parsing.
    fn reason(&self, turns: &[ChatTurn]) -> Result<String, BackendError>;
}
