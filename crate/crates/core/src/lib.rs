//! Streaming event-memory engine.
//!
//! Organizes an unbounded frame stream into three memory tiers — a
//! high-rate short window, a lower-rate medium buffer, and a bounded
//! event forest of merged summaries — plus a rolling QA digest, and
//! answers queries with a two-phase policy: a coarse pass over the
//! immediately accessible memory, followed by at most one intent-driven
//! retrieval pass when the coarse pass signals insufficiency.

pub mod backend;
pub mod config;
pub mod engine;
pub mod forest;
pub mod frame;
pub mod modes;
pub mod orchestrator;
pub mod qa;
pub mod replay;
pub mod similarity;
pub mod snapshot;
pub mod synth;
pub mod tiers;
pub mod time;
pub mod tokens;
pub mod trace;

pub use backend::{Backend, BackendError, ChatTurn, MockBackend, RemoteBackend, RemoteConfig, Role};
pub use config::{ConfigError, EngineConfig};
pub use engine::{Engine, EngineError, MemoryState};
pub use forest::{EventForest, EventNode, ForestError, NodeId};
pub use frame::FrameRef;
pub use modes::RunMode;
pub use orchestrator::{
    CoarseContext, FineContext, Phase, QueryInput, QueryReport, ReasoningOutcome,
};
pub use qa::{QARecord, QAStore, QaError};
pub use replay::{ReplayError, ReplayOutcome, RunReport};
pub use snapshot::SnapshotError;
pub use tiers::{TierError, TierStore, WindowBatch};
pub use time::{TimeInterval, Timestamp};
pub use tokens::{context_token_cost, count_text_tokens, TokenBudget};
