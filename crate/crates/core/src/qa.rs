//! QA memory: the rolling dialogue digest plus the full answered-question
//! history with per-pair embeddings for fine-phase retrieval.

use crate::backend::{Backend, BackendError};
use crate::similarity::cosine;
use crate::time::Timestamp;
use crate::tokens::{count_text_tokens, truncate_front_to_tokens};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QaError {
    #[error("out-of-order query at {got}: history already reaches {newest}")]
    OutOfOrderQuery { got: Timestamp, newest: Timestamp },
    #[error("qa record embedding dim mismatch: expected {expected}, got {got}")]
    EmbeddingDimMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// One answered question. The embedding covers question and answer
/// joined by a newline, so retrieval can match either side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub question: String,
    pub answer: String,
    pub asked_at: Timestamp,
    pub embedding: Vec<f32>,
}

/// Rolling digest plus append-only history, time-ordered.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QAStore {
    summary: String,
    records: Vec<QARecord>,
}

impl QAStore {
    pub fn new() -> Self {
        QAStore::default()
    }

    pub fn summary(&self) -> &str {
        &self.summary
    }

    pub fn records(&self) -> &[QARecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fold one answered question into the digest and append its
    /// record. When the folded digest overflows `summary_token_cap`,
    /// a re-fold with an empty prefix drops the oldest content; if even
    /// that overflows, the digest is front-truncated to the cap.
    pub fn fold_qa(
        &mut self,
        question: &str,
        answer: &str,
        at: Timestamp,
        backend: &dyn Backend,
        summary_token_cap: u64,
        embed_dim: usize,
    ) -> Result<(), QaError> {
        if let Some(last) = self.records.last() {
            if at < last.asked_at {
                return Err(QaError::OutOfOrderQuery {
                    got: at,
                    newest: last.asked_at,
                });
            }
        }
        let mut folded = backend.fold_qa_summary(&self.summary, question, answer)?;
        if count_text_tokens(&folded) > summary_token_cap {
            folded = backend.fold_qa_summary("", question, answer)?;
            if count_text_tokens(&folded) > summary_token_cap {
                folded = truncate_front_to_tokens(&folded, summary_token_cap);
            }
        }
        let embedding = backend.embed(&format!("{question}\n{answer}"))?;
        if embedding.len() != embed_dim {
            return Err(QaError::EmbeddingDimMismatch {
                expected: embed_dim,
                got: embedding.len(),
            });
        }
        self.summary = folded;
        self.records.push(QARecord {
            question: question.to_string(),
            answer: answer.to_string(),
            asked_at: at,
            embedding,
        });
        Ok(())
    }

    /// The `k` records with the highest cosine to the query, ties going
    /// to the most recent exchange.
    pub fn retrieve_qa(&self, query: &[f32], k: usize) -> Vec<&QARecord> {
        let mut scored: Vec<(usize, f64)> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (i, cosine(query, &r.embedding)))
            .collect();
        // Records are time-ordered, so a larger index is more recent.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.cmp(&a.0)));
        scored
            .into_iter()
            .take(k)
            .map(|(i, _)| &self.records[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use proptest::prelude::*;

    fn ts(s: f64) -> Timestamp {
        Timestamp::from_secs(s)
    }

    #[test]
    fn first_fold_seeds_the_digest() {
        let be = MockBackend::new(8);
        let mut store = QAStore::new();
        store
            .fold_qa("what color?", "blue", ts(1.0), &be, 256, 8)
            .unwrap();
        assert_eq!(store.summary(), "Q:what color? A:blue");
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn fold_chain_is_byte_exact_under_the_mock_contract() {
        let be = MockBackend::new(8);
        let mut store = QAStore::new();
        store.fold_qa("q1", "a1", ts(1.0), &be, 256, 8).unwrap();
        store.fold_qa("q2", "a2", ts(2.0), &be, 256, 8).unwrap();
        assert_eq!(store.summary(), "Q:q1 A:a1 | Q:q2 A:a2");
    }

    #[test]
    fn history_is_append_only_and_ordered() {
        let be = MockBackend::new(8);
        let mut store = QAStore::new();
        for i in 0..5 {
            store
                .fold_qa(&format!("q{i}"), "a", ts(i as f64), &be, 256, 8)
                .unwrap();
        }
        let first = store.records()[0].clone();
        assert_eq!(store.len(), 5);
        for (i, r) in store.records().iter().enumerate() {
            assert_eq!(r.question, format!("q{i}"));
        }
        assert_eq!(store.records()[0], first);
        let err = store.fold_qa("late", "a", ts(0.5), &be, 256, 8).unwrap_err();
        assert!(matches!(err, QaError::OutOfOrderQuery { .. }));
        assert_eq!(store.len(), 5, "failed fold must not mutate");
    }

    #[test]
    fn overflow_refolds_then_truncates() {
        let be = MockBackend::new(8);
        let mut store = QAStore::new();
        store.fold_qa("q1", "a1", ts(1.0), &be, 5, 8).unwrap();
        // "Q:q1 A:a1" is 9 chars = 3 tokens, fits cap 5. The next fold
        // would be 21 chars = 6 tokens, so the digest re-folds to just
        // the new exchange.
        store.fold_qa("q2", "a2", ts(2.0), &be, 5, 8).unwrap();
        assert_eq!(store.summary(), "Q:q2 A:a2");
        // A single oversized exchange front-truncates to the cap.
        store
            .fold_qa("a very long question indeed", "a very long answer", ts(3.0), &be, 5, 8)
            .unwrap();
        assert!(count_text_tokens(store.summary()) <= 5);
    }

    #[test]
    fn retrieval_is_empty_on_an_empty_store() {
        let store = QAStore::new();
        assert!(store.retrieve_qa(&[1.0, 0.0], 3).is_empty());
    }

    #[test]
    fn retrieval_prefers_recency_on_ties() {
        let be = MockBackend::new(32);
        let mut store = QAStore::new();
        store.fold_qa("same words", "here", ts(1.0), &be, 256, 32).unwrap();
        store.fold_qa("same words", "here", ts(2.0), &be, 256, 32).unwrap();
        let query = mockq(&be, "same words\nhere");
        let got = store.retrieve_qa(&query, 1);
        assert_eq!(got[0].asked_at, ts(2.0));
    }

    fn mockq(be: &MockBackend, text: &str) -> Vec<f32> {
        be.embed(text).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn retrieval_matches_a_full_sort_oracle(
            texts in proptest::collection::vec("[a-f ]{1,12}", 1..40),
            probe in "[a-f ]{1,12}",
            k in 1usize..5,
        ) {
            let be = MockBackend::new(16);
            let mut store = QAStore::new();
            for (i, t) in texts.iter().enumerate() {
                store.fold_qa(t, "ok", ts(i as f64), &be, 10_000, 16).unwrap();
            }
            let query = be.embed(&probe).unwrap();
            let got: Vec<Timestamp> = store.retrieve_qa(&query, k).iter().map(|r| r.asked_at).collect();

            // Oracle: repeated max-scan with the same (score, recency) key.
            let mut rest: Vec<&QARecord> = store.records().iter().collect();
            let mut expect = Vec::new();
            while expect.len() < k && !rest.is_empty() {
                let mut best = 0usize;
                for i in 1..rest.len() {
                    let (si, sb) = (cosine(&query, &rest[i].embedding), cosine(&query, &rest[best].embedding));
                    if si > sb || (si == sb && rest[i].asked_at > rest[best].asked_at) {
                        best = i;
                    }
                }
                expect.push(rest.remove(best).asked_at);
            }
            prop_assert_eq!(got, expect);
        }
    }
}
