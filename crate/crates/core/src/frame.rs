//! Frame handles.

use crate::time::Timestamp;
use serde::{Deserialize, Serialize};

/// Timestamped opaque handle to one stream frame.
///
/// Pixel content never enters the engine; `caption` stands in for the
/// visual content and `payload_id` identifies the frame in the source
/// stream (unique per stream). The caption may be empty but is always
/// present as a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub ts: Timestamp,
    pub caption: String,
    pub payload_id: u64,
}

impl FrameRef {
    pub fn new(ts: Timestamp, caption: impl Into<String>, payload_id: u64) -> Self {
        FrameRef {
            ts,
            caption: caption.into(),
            payload_id,
        }
    }
}
