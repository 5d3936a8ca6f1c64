//! Deterministic test backend.
//!
//! Every operation is a pure function of its inputs, so identical
//! traces replay to identical engine states on any platform. Summaries
//! are caption concatenations, embeddings are hashed bag-of-words
//! vectors, and reasoning is driven by directives planted in the user
//! turn by test traces:
//!
//! - `!answer:<text>` — reply `<answer>text</answer>`
//! - `!tool:<intent>` — reply with a tool call carrying that intent;
//!   when the request already carries a tool-result turn (the fine
//!   pass), reply with the text after an optional `!answer:` instead
//! - no directive — reply `<answer>UNKNOWN</answer>`

use super::{validate_turns, Backend, BackendError, ChatTurn, Role};
use crate::frame::FrameRef;
use crate::time::TimeInterval;

/// FNV-1a, fixed so token buckets never vary across platforms or
/// std versions.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Lowercased bag-of-words embedding: split on anything that is not
/// alphanumeric, hash each token into one of `dim` buckets, count, then
/// L2-normalize. Empty text yields the zero vector.
pub fn mock_embed(text: &str, dim: usize) -> Vec<f32> {
    let mut counts = vec![0.0f32; dim];
    let lower = text.to_lowercase();
    for token in lower.split(|c: char| !c.is_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        let bucket = (fnv1a64(token.as_bytes()) % dim as u64) as usize;
        counts[bucket] += 1.0;
    }
    let norm = counts.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        counts.iter_mut().for_each(|x| *x /= norm);
    }
    counts
}

/// Bucket index a token hashes to under [`mock_embed`]. The synthetic
/// trace generator uses this to pick needle tokens whose buckets are
/// disjoint from the distractor vocabulary.
pub fn token_bucket(token: &str, dim: usize) -> usize {
    (fnv1a64(token.to_lowercase().as_bytes()) % dim as u64) as usize
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    embed_dim: usize,
}

impl MockBackend {
    pub fn new(embed_dim: usize) -> Self {
        MockBackend { embed_dim }
    }
}

fn last_user_text(turns: &[ChatTurn]) -> &str {
    turns
        .iter()
        .rev()
        .find(|t| t.role == Role::User)
        .map(|t| t.text.as_str())
        .unwrap_or("")
}

fn directive_after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    text.find(marker).map(|pos| {
        let rest = &text[pos + marker.len()..];
        match rest.find('!') {
            Some(stop) => &rest[..stop],
            None => rest,
        }
    })
}

impl Backend for MockBackend {
    fn summarize_window(
        &self,
        keyframes: &[FrameRef],
        interval: TimeInterval,
    ) -> Result<String, BackendError> {
        let captions: Vec<&str> = keyframes.iter().map(|f| f.caption.as_str()).collect();
        Ok(format!("{interval} {}", captions.join("; ")))
    }

    fn merge_summaries(&self, a: &str, b: &str) -> Result<String, BackendError> {
        Ok(format!("{a} | {b}"))
    }

    fn fold_qa_summary(
        &self,
        prev: &str,
        question: &str,
        answer: &str,
    ) -> Result<String, BackendError> {
        if prev.is_empty() {
            Ok(format!("Q:{question} A:{answer}"))
        } else {
            Ok(format!("{prev} | Q:{question} A:{answer}"))
        }
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        Ok(mock_embed(text, self.embed_dim))
    }

    fn reason(&self, turns: &[ChatTurn]) -> Result<String, BackendError> {
        validate_turns(turns)?;
        let fine_phase = turns.iter().any(|t| t.role == Role::Tool);
        let text = last_user_text(turns);
        if let Some(intent) = directive_after(text, "!tool:") {
            let intent = intent.trim();
            if fine_phase {
                let answer = directive_after(text, "!answer:")
                    .map(str::trim)
                    .unwrap_or("UNKNOWN");
                return Ok(format!("<answer>{answer}</answer>"));
            }
            let payload = serde_json::to_string(intent).expect("string to json");
            return Ok(format!("<tool_call>{{\"query\": {payload}}}</tool_call>"));
        }
        if let Some(answer) = directive_after(text, "!answer:") {
            return Ok(format!("<answer>{}</answer>", answer.trim()));
        }
        Ok("<answer>UNKNOWN</answer>".to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::cosine;
    use crate::time::Timestamp;

    fn interval(a: f64, b: f64) -> TimeInterval {
        TimeInterval::new(Timestamp::from_secs(a), Timestamp::from_secs(b))
    }

    #[test]
    fn empty_text_embeds_to_zero() {
        assert!(mock_embed("", 8).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn embedding_is_deterministic_and_order_free() {
        let a = mock_embed("teddy bear", 64);
        let b = mock_embed("bear teddy", 64);
        assert_eq!(a, b);
        assert!((cosine(&a, &mock_embed("teddy bear", 64)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_cosine_is_one_for_nonempty_text() {
        let v = mock_embed("a dog crosses the street", 32);
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_summary_format() {
        let be = MockBackend::new(8);
        assert_eq!(
            be.summarize_window(&[], interval(0.0, 32.0)).unwrap(),
            "[0\u{2013}32] "
        );
        let frames = vec![
            FrameRef::new(Timestamp::from_secs(1.0), "a dog", 0),
            FrameRef::new(Timestamp::from_secs(2.0), "a cat", 1),
        ];
        assert_eq!(
            be.summarize_window(&frames, interval(0.0, 32.0)).unwrap(),
            "[0\u{2013}32] a dog; a cat"
        );
        assert_eq!(be.merge_summaries("x", "y").unwrap(), "x | y");
    }

    #[test]
    fn scripted_reason_routes_on_directives() {
        let be = MockBackend::new(8);
        let coarse = |text: &str| vec![ChatTurn::user(text.to_string(), vec![])];

        let out = be.reason(&coarse("q !answer:blue")).unwrap();
        assert_eq!(out, "<answer>blue</answer>");

        let out = be
            .reason(&coarse("q !tool:people in the living room"))
            .unwrap();
        assert_eq!(
            out,
            "<tool_call>{\"query\": \"people in the living room\"}</tool_call>"
        );

        let out = be.reason(&coarse("no directive at all")).unwrap();
        assert_eq!(out, "<answer>UNKNOWN</answer>");
    }

    #[test]
    fn scripted_reason_answers_in_the_fine_phase() {
        let be = MockBackend::new(8);
        let turns = vec![
            ChatTurn::user("q !tool:white plate!answer:on the table", vec![]),
            ChatTurn::tool("retrieved evidence", vec![]),
        ];
        assert_eq!(be.reason(&turns).unwrap(), "<answer>on the table</answer>");

        let turns = vec![
            ChatTurn::user("q !tool:white plate", vec![]),
            ChatTurn::tool("retrieved evidence", vec![]),
        ];
        assert_eq!(be.reason(&turns).unwrap(), "<answer>UNKNOWN</answer>");
    }
}
