//! Line-delimited trace files.
//!
//! One JSON record per line with an explicit `kind`: frames carry a
//! caption, queries carry the question plus optional scripted directive
//! and expected answer, and a single final `close` marks stream end.
//! Timestamps never decrease across the file.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace clock regression at line {line}: {ts} after {prev}")]
    ClockRegression { line: usize, ts: f64, prev: f64 },
    #[error("close must be the last event (line {line})")]
    CloseNotLast { line: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Frame {
        ts: f64,
        caption: String,
    },
    Query {
        ts: f64,
        question: String,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        directive: String,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        expected: String,
        /// Ground-truth window of a planted needle, for recall scoring.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        needle_window: Option<(f64, f64)>,
    },
    Close {
        ts: f64,
    },
}

impl TraceEvent {
    pub fn ts(&self) -> f64 {
        match self {
            TraceEvent::Frame { ts, .. }
            | TraceEvent::Query { ts, .. }
            | TraceEvent::Close { ts } => *ts,
        }
    }
}

/// Parse a whole trace, enforcing the clock and close-position rules.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events = Vec::new();
    let mut prev_ts = f64::NEG_INFINITY;
    let mut close_line: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(line) = close_line {
            return Err(TraceError::CloseNotLast { line });
        }
        let event: TraceEvent = serde_json::from_str(line).map_err(|e| TraceError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let ts = event.ts();
        if !ts.is_finite() || ts < 0.0 {
            return Err(TraceError::Parse {
                line: line_no,
                msg: format!("bad timestamp {ts}"),
            });
        }
        if ts < prev_ts {
            return Err(TraceError::ClockRegression {
                line: line_no,
                ts,
                prev: prev_ts,
            });
        }
        prev_ts = ts;
        if matches!(event, TraceEvent::Close { .. }) {
            close_line = Some(line_no);
        }
        events.push(event);
    }
    Ok(events)
}

/// Serialize a trace in the format accepted by [`parse_trace`].
pub fn write_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        writeln!(out, "{}", serde_json::to_string(e).expect("trace event to json")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_events() {
        let events = vec![
            TraceEvent::Frame {
                ts: 0.0,
                caption: "a dog".to_string(),
            },
            TraceEvent::Query {
                ts: 1.0,
                question: "what?".to_string(),
                directive: "!answer:dog".to_string(),
                expected: "dog".to_string(),
                needle_window: Some((0.0, 32.0)),
            },
            TraceEvent::Close { ts: 2.0 },
        ];
        let text = write_trace(&events);
        assert_eq!(parse_trace(&text).unwrap(), events);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_trace("{\"kind\":\"frame\",\"ts\":0.0,\"caption\":\"x\"}\nnot json\n")
            .unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn clock_regressions_are_rejected() {
        let text = "{\"kind\":\"frame\",\"ts\":5.0,\"caption\":\"x\"}\n{\"kind\":\"frame\",\"ts\":4.0,\"caption\":\"y\"}\n";
        assert!(matches!(
            parse_trace(text).unwrap_err(),
            TraceError::ClockRegression { line: 2, .. }
        ));
    }

    #[test]
    fn close_must_be_last() {
        let text = "{\"kind\":\"close\",\"ts\":1.0}\n{\"kind\":\"frame\",\"ts\":2.0,\"caption\":\"x\"}\n";
        assert!(matches!(
            parse_trace(text).unwrap_err(),
            TraceError::CloseNotLast { .. }
        ));
    }
}
