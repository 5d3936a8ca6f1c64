//! Token accounting.
//!
//! A deterministic stand-in for tokenizer cost: text is charged
//! `ceil(chars / 4)` and each context frame a fixed per-frame cost.
//! Only relative trends matter; the model is monotone and additive.

use serde::{Deserialize, Serialize};

/// Token cost of one assembled context, split by source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenBudget {
    pub frame_tokens: u64,
    pub text_tokens: u64,
    pub total: u64,
}

/// `ceil(character_count / 4)`, counting Unicode scalars.
pub fn count_text_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Charge `frame_count` frames plus every text, keeping the split.
pub fn context_token_cost<'a, I>(frame_count: usize, texts: I, frame_token_cost: u64) -> TokenBudget
where
    I: IntoIterator<Item = &'a str>,
{
    let frame_tokens = frame_count as u64 * frame_token_cost;
    let text_tokens = texts.into_iter().map(count_text_tokens).sum();
    TokenBudget {
        frame_tokens,
        text_tokens,
        total: frame_tokens + text_tokens,
    }
}

/// Keep the longest prefix whose token count fits `cap`.
pub fn truncate_to_tokens(text: &str, cap: u64) -> String {
    let max_chars = (cap * 4) as usize;
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    text.chars().take(max_chars).collect()
}

/// Keep the longest suffix whose token count fits `cap` — drops the
/// oldest content of a rolling digest first.
pub fn truncate_front_to_tokens(text: &str, cap: u64) -> String {
    let max_chars = (cap * 4) as usize;
    let len = text.chars().count();
    if len <= max_chars {
        return text.to_string();
    }
    text.chars().skip(len - max_chars).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_follow_the_ceiling_rule() {
        assert_eq!(count_text_tokens(""), 0);
        assert_eq!(count_text_tokens("abcdefgh"), 2);
        assert_eq!(count_text_tokens("abcdefghi"), 3);
    }

    #[test]
    fn context_cost_examples() {
        let zero = context_token_cost(0, [], 256);
        assert_eq!(zero.total, 0);
        let b = context_token_cost(2, ["abcd"], 256);
        assert_eq!(b.frame_tokens, 512);
        assert_eq!(b.text_tokens, 1);
        assert_eq!(b.total, 513);
    }

    #[test]
    fn truncation_respects_the_cap() {
        let text = "x".repeat(100);
        let cut = truncate_to_tokens(&text, 5);
        assert_eq!(cut.len(), 20);
        assert!(count_text_tokens(&cut) <= 5);
        assert_eq!(truncate_to_tokens("short", 5), "short");
    }

    #[test]
    fn front_truncation_keeps_the_newest_suffix() {
        let text = format!("{}{}", "old ".repeat(10), "new!");
        let cut = truncate_front_to_tokens(&text, 1);
        assert_eq!(cut, "new!");
    }

    proptest! {
        #[test]
        fn budget_is_additive_and_order_independent(texts in proptest::collection::vec(".{0,40}", 0..8), frames in 0usize..50) {
            let fwd = context_token_cost(frames, texts.iter().map(|s| s.as_str()), 256);
            let mut rev = texts.clone();
            rev.reverse();
            let bwd = context_token_cost(frames, rev.iter().map(|s| s.as_str()), 256);
            prop_assert_eq!(fwd, bwd);
            prop_assert_eq!(fwd.total, fwd.frame_tokens + fwd.text_tokens);
            let sum: u64 = texts.iter().map(|s| count_text_tokens(s)).sum();
            prop_assert_eq!(fwd.text_tokens, sum);
        }

        #[test]
        fn truncation_never_exceeds_cap(text in ".{0,200}", cap in 1u64..16) {
            prop_assert!(count_text_tokens(&truncate_to_tokens(&text, cap)) <= cap);
            prop_assert!(count_text_tokens(&truncate_front_to_tokens(&text, cap)) <= cap);
        }
    }
}
