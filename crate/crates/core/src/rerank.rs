//! Pointwise yes/no reranking of the head of the dense list.
//!
//! The relevance of a (query, document) pair is the probability of the
//! "yes" label under a softmax restricted to the two label logits. Only the
//! first `k` dense results are rescored; everything below keeps its dense
//! order.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{cache_key, CacheStats, ResponseCache};
use crate::corpus::truncate_units;
use crate::dense::DenseRankedList;
use crate::evaluation::rank_score;
use crate::provider::{ProviderError, RetryPolicy};

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_RERANK_MAX_UNITS: usize = 5120;

pub const RERANK_PROMPT: &str = "You are a search relevance judge. Given an instruction, a query, and a candidate news document, decide whether the document satisfies the instruction and is relevant to the query.\n\
Answer with only one token: yes or no.\n\
\n\
Instruct: Given a news search query, retrieve relevant news articles that answer the query.\n\
\n\
Query: {QUERY}\n\
\n\
Document: {DOC}\n\
\n\
Answer:";

/// Fills the judge template. `{QUERY}` is substituted before `{DOC}`, so a
/// query containing the literal text `{DOC}` is not expanded.
pub fn render_rerank_prompt(query_text: &str, doc_text: &str) -> String {
    let (head, tail) = RERANK_PROMPT.split_once("{DOC}").expect("template has a {DOC} slot");
    format!("{}{}{}", head.replace("{QUERY}", query_text), doc_text, tail)
}

#[derive(Debug, Error, PartialEq)]
pub enum RerankError {
    #[error("reranker provider: {0}")]
    Provider(#[from] ProviderError),
    #[error("rerank scores do not match the top-{k} of the dense list: {detail}")]
    ScoreCoverage { k: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelLogits {
    pub yes_logit: f64,
    pub no_logit: f64,
}

impl LabelLogits {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.yes_logit.is_finite() && self.no_logit.is_finite() {
            Ok(())
        } else {
            Err(ProviderError::Contract(format!("non-finite logits {self:?}")))
        }
    }

    /// P(yes) from the two-way softmax, shifted by the larger logit so large
    /// magnitudes cannot overflow.
    pub fn yes_probability(&self) -> f64 {
        let m = self.yes_logit.max(self.no_logit);
        let yes = (self.yes_logit - m).exp();
        let no = (self.no_logit - m).exp();
        yes / (yes + no)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankRequest {
    pub query_text: String,
    pub doc_text: String,
    pub prompt: String,
}

pub trait LogitScorer: Send + Sync {
    fn id(&self) -> &str;
    fn label_logits(&self, request: &RerankRequest) -> Result<LabelLogits, ProviderError>;
}

/// Scores pairs through a provider, truncating documents and caching logits.
pub struct PointwiseReranker {
    scorer: Arc<dyn LogitScorer>,
    cache: ResponseCache,
    retry: RetryPolicy,
    max_units: usize,
}

impl PointwiseReranker {
    pub fn new(scorer: Arc<dyn LogitScorer>, cache: ResponseCache) -> Self {
        Self { scorer, cache, retry: RetryPolicy::default(), max_units: DEFAULT_RERANK_MAX_UNITS }
    }

    pub fn with_max_units(mut self, max_units: usize) -> Self {
        self.max_units = max_units;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    /// Probability that the document is relevant to the query.
    pub fn score_pair(&self, query_text: &str, doc_text: &str) -> Result<f64, RerankError> {
        let (doc_text, _) = truncate_units(doc_text, self.max_units);
        let prompt = render_rerank_prompt(query_text, &doc_text);
        let key = cache_key(&[self.scorer.id().as_bytes(), prompt.as_bytes()]);
        let cached = self.cache.get(&key).and_then(|b| serde_json::from_slice::<LabelLogits>(&b).ok());
        let logits = match cached {
            Some(l) => l,
            None => {
                let request = RerankRequest { query_text: query_text.to_string(), doc_text, prompt };
                let logits = self.retry.run(|| {
                    let l = self.scorer.label_logits(&request)?;
                    l.validate()?;
                    Ok(l)
                })?;
                let bytes = serde_json::to_vec(&logits).expect("logits serialize");
                if let Err(e) = self.cache.put(&key, &bytes) {
                    log::warn!("cannot write rerank cache: {e}");
                }
                logits
            }
        };
        logits.validate()?;
        Ok(logits.yes_probability())
    }
}

/// Free-function form of [`PointwiseReranker::score_pair`].
pub fn score_pair(reranker: &PointwiseReranker, query_text: &str, doc_text: &str) -> Result<f64, RerankError> {
    reranker.score_pair(query_text, doc_text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Reranked,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedEntry {
    pub doc_id: String,
    /// Rank-derived score for the run file; strictly decreasing.
    pub score: f64,
    pub origin: Origin,
    /// Rerank probability for head entries, dense similarity otherwise.
    pub stage_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRankedList {
    pub query_id: String,
    pub entries: Vec<MergedEntry>,
}

/// Places the rescored head first (probability descending, doc id ascending
/// on ties) and keeps the remaining dense entries in their original order.
///
/// `scores` must cover exactly the first `min(k, len)` dense entries.
pub fn rerank_merge(
    dense: &DenseRankedList,
    scores: &HashMap<String, f64>,
    k: usize,
) -> Result<MergedRankedList, RerankError> {
    let head_len = k.min(dense.entries.len());
    let (head, tail) = dense.entries.split_at(head_len);
    let coverage = |detail: String| RerankError::ScoreCoverage { k, detail };
    if scores.len() != head_len {
        return Err(coverage(format!("{} scores for {head_len} head entries", scores.len())));
    }
    let mut scored = Vec::with_capacity(head_len);
    for e in head {
        let p = *scores.get(&e.doc_id).ok_or_else(|| coverage(format!("no score for {}", e.doc_id)))?;
        scored.push((e.doc_id.clone(), p));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let entries = scored
        .into_iter()
        .map(|(doc_id, p)| (doc_id, Origin::Reranked, p))
        .chain(tail.iter().map(|e| (e.doc_id.clone(), Origin::Dense, e.similarity)))
        .enumerate()
        .map(|(i, (doc_id, origin, stage_score))| MergedEntry { doc_id, score: rank_score(i + 1), origin, stage_score })
        .collect();
    Ok(MergedRankedList { query_id: dense.query_id.clone(), entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseEntry;

    fn dense(ids: &[&str]) -> DenseRankedList {
        DenseRankedList {
            query_id: "q".into(),
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, id)| DenseEntry { doc_id: id.to_string(), similarity: 1.0 - i as f64 * 0.01 })
                .collect(),
        }
    }

    fn ids(m: &MergedRankedList) -> Vec<&str> {
        m.entries.iter().map(|e| e.doc_id.as_str()).collect()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(LabelLogits { yes_logit: 0.0, no_logit: 0.0 }.yes_probability(), 0.5);
        let e2 = 2f64.exp();
        let p = LabelLogits { yes_logit: 2.0, no_logit: 0.0 }.yes_probability();
        assert!((p - e2 / (e2 + 1.0)).abs() < 1e-15);
        assert!((p - 0.880797).abs() < 1e-6);
        let p = LabelLogits { yes_logit: 1000.0, no_logit: 0.0 }.yes_probability();
        assert!((p - 1.0).abs() < 1e-12);
        let p = LabelLogits { yes_logit: -1000.0, no_logit: 0.0 }.yes_probability();
        assert!((0.0..1e-300).contains(&p));
    }

    #[test]
    fn non_finite_logits_are_contract_errors() {
        assert!(LabelLogits { yes_logit: f64::NAN, no_logit: 0.0 }.validate().is_err());
        assert!(LabelLogits { yes_logit: 0.0, no_logit: f64::INFINITY }.validate().is_err());
    }

    #[test]
    fn prompt_layout() {
        let p = render_rerank_prompt("dam failure", "Flood hits city\nRivers rose.");
        assert!(p.starts_with("You are a search relevance judge."));
        assert!(p.contains("\nAnswer with only one token: yes or no.\n\nInstruct: Given a news search query"));
        assert!(p.ends_with("Query: dam failure\n\nDocument: Flood hits city\nRivers rose.\n\nAnswer:"));
        let tricky = render_rerank_prompt("{DOC}", "x");
        assert!(tricky.contains("Query: {DOC}\n\nDocument: x"));
    }

    #[test]
    fn merge_examples() {
        let d = dense(&["a", "b", "c", "d"]);
        let out = rerank_merge(&d, &HashMap::new(), 0).unwrap();
        assert_eq!(ids(&out), ["a", "b", "c", "d"]);
        assert!(out.entries.iter().all(|e| e.origin == Origin::Dense));

        let scores = HashMap::from([("a".to_string(), 0.3), ("b".to_string(), 0.9)]);
        let out = rerank_merge(&d, &scores, 2).unwrap();
        assert_eq!(ids(&out), ["b", "a", "c", "d"]);
        assert_eq!(out.entries[0].origin, Origin::Reranked);
        assert_eq!(out.entries[2].origin, Origin::Dense);
        assert_eq!(out.entries[0].score, 9999.0);
        assert_eq!(out.entries[3].score, 9996.0);

        let d5 = dense(&["e", "d", "c", "b", "a"]);
        let all: HashMap<String, f64> = ["a", "b", "c", "d", "e"].iter().map(|s| (s.to_string(), 0.5)).collect();
        let out = rerank_merge(&d5, &all, 20).unwrap();
        assert_eq!(ids(&out), ["a", "b", "c", "d", "e"]);
        assert!(out.entries.iter().all(|e| e.origin == Origin::Reranked));
    }

    #[test]
    fn coverage_errors() {
        let d = dense(&["a", "b", "c"]);
        let missing = HashMap::from([("a".to_string(), 0.3)]);
        assert!(matches!(rerank_merge(&d, &missing, 2), Err(RerankError::ScoreCoverage { .. })));
        let wrong = HashMap::from([("a".to_string(), 0.3), ("c".to_string(), 0.1)]);
        assert!(matches!(rerank_merge(&d, &wrong, 2), Err(RerankError::ScoreCoverage { .. })));
        let extra = HashMap::from([("a".to_string(), 0.3), ("b".to_string(), 0.1), ("c".to_string(), 0.2)]);
        assert!(matches!(rerank_merge(&d, &extra, 2), Err(RerankError::ScoreCoverage { .. })));
    }
}
