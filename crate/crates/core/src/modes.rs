//! Run modes: the full policy plus the ablation and baseline variants
//! the harness can replay.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// The full two-phase policy over the hierarchical memory.
    Oasis,
    /// Baseline: stack the whole history at 0.5 fps into a single pass.
    /// No forest, no retrieval, no dialogue digest.
    FullContext,
    /// Two-phase policy, but retrieval embeds the raw question instead
    /// of the model's intent.
    NaiveRag,
    /// Coarse pass only; tool calls get no retrieval and fall back to
    /// the raw response.
    NoRag,
    /// Root cap disabled: roots grow without bound, retrieval kept.
    FlattenMemory,
}

impl RunMode {
    /// Whether window closes feed the event forest at all.
    pub fn uses_forest(&self) -> bool {
        !matches!(self, RunMode::FullContext)
    }

    /// Whether the root bound is enforced after leaf insertion.
    pub fn enforces_root_bound(&self) -> bool {
        !matches!(self, RunMode::FullContext | RunMode::FlattenMemory)
    }

    /// Whether a tool call triggers the fine retrieval pass.
    pub fn retrieval_enabled(&self) -> bool {
        matches!(
            self,
            RunMode::Oasis | RunMode::NaiveRag | RunMode::FlattenMemory
        )
    }

    /// Whether retrieval embeds the raw question rather than the intent.
    pub fn embeds_question(&self) -> bool {
        matches!(self, RunMode::NaiveRag)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Oasis => "oasis",
            RunMode::FullContext => "full_context",
            RunMode::NaiveRag => "naive_rag",
            RunMode::NoRag => "no_rag",
            RunMode::FlattenMemory => "flatten_memory",
        }
    }

    pub const ALL: [RunMode; 5] = [
        RunMode::Oasis,
        RunMode::FullContext,
        RunMode::NaiveRag,
        RunMode::NoRag,
        RunMode::FlattenMemory,
    ];
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oasis" => Ok(RunMode::Oasis),
            "full_context" => Ok(RunMode::FullContext),
            "naive_rag" => Ok(RunMode::NaiveRag),
            "no_rag" => Ok(RunMode::NoRag),
            "flatten_memory" => Ok(RunMode::FlattenMemory),
            other => Err(format!(
                "unknown mode {other:?}; expected one of oasis, full_context, naive_rag, no_rag, flatten_memory"
            )),
        }
    }
}
