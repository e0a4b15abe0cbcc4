//! Dense ranking of sparse candidates by cosine similarity.
//!
//! Provider vectors are cut to the configured dimension and L2-normalized,
//! so cosine similarity reduces to a dot product.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{cache_key, CacheStats, ResponseCache};
use crate::corpus::truncate_units;
use crate::provider::{ProviderError, RetryPolicy};

pub const DEFAULT_DIM: usize = 1024;
pub const DEFAULT_MAX_UNITS: usize = 5120;
pub const DEFAULT_DENSE_CUTOFF: usize = 1000;
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum DenseError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding provider: {0}")]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Query,
    Document,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Query => "query",
            Role::Document => "document",
        }
    }
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    /// One raw vector per input text, in input order.
    fn embed_batch(&self, texts: &[String], role: Role, dim: usize) -> Result<Vec<Vec<f64>>, ProviderError>;
}

/// Unit-length embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Truncates a raw provider vector to `dim` and L2-normalizes it.
    ///
    /// Vectors shorter than `dim`, with non-finite entries, or all zeros are
    /// contract violations.
    pub fn from_raw(mut raw: Vec<f64>, dim: usize) -> Result<Self, ProviderError> {
        if raw.len() < dim {
            return Err(ProviderError::Contract(format!("vector has {} entries, expected {dim}", raw.len())));
        }
        raw.truncate(dim);
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(ProviderError::Contract("vector has non-finite entries".into()));
        }
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(ProviderError::Contract("all-zero vector".into()));
        }
        raw.iter_mut().for_each(|x| *x /= norm);
        Ok(Self(raw))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    fn from_bytes(bytes: &[u8], dim: usize) -> Option<Self> {
        if bytes.len() != dim * 8 {
            return None;
        }
        Some(Self(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()))
    }
}

/// Dot product of unit vectors, clamped to `[-1, 1]`.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, DenseError> {
    if u.dim() != v.dim() {
        return Err(DenseError::DimMismatch(u.dim(), v.dim()));
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseEntry {
    pub doc_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseRankedList {
    pub query_id: String,
    pub entries: Vec<DenseEntry>,
}

impl DenseRankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sorts candidates by similarity to the query (doc id ascending on ties) and
/// keeps the first `cutoff`.
pub fn dense_rank(
    query_id: &str,
    query_vec: &EmbeddingVector,
    candidates: &[(String, EmbeddingVector)],
    cutoff: usize,
) -> Result<DenseRankedList, DenseError> {
    let mut entries = candidates
        .iter()
        .map(|(id, v)| Ok(DenseEntry { doc_id: id.clone(), similarity: cosine(query_vec, v)? }))
        .collect::<Result<Vec<_>, DenseError>>()?;
    entries.sort_by(compare_entries);
    entries.truncate(cutoff);
    Ok(DenseRankedList { query_id: query_id.to_string(), entries })
}

fn compare_entries(a: &DenseEntry, b: &DenseEntry) -> Ordering {
    b.similarity.total_cmp(&a.similarity).then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Embeds texts through a provider with truncation, batching and caching.
pub struct DenseEncoder {
    embedder: Arc<dyn Embedder>,
    cache: ResponseCache,
    retry: RetryPolicy,
    dim: usize,
    max_units: usize,
    batch_size: usize,
}

/// Vectors for a batch of texts plus how many inputs were cut to the budget.
#[derive(Debug)]
pub struct EncodedBatch {
    pub vectors: Vec<EmbeddingVector>,
    pub truncated: usize,
}

impl DenseEncoder {
    pub fn new(embedder: Arc<dyn Embedder>, cache: ResponseCache) -> Self {
        Self {
            embedder,
            cache,
            retry: RetryPolicy::default(),
            dim: DEFAULT_DIM,
            max_units: DEFAULT_MAX_UNITS,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn with_max_units(mut self, max_units: usize) -> Self {
        self.max_units = max_units;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    fn key(&self, role: Role, text: &str) -> String {
        cache_key(&[
            self.embedder.id().as_bytes(),
            role.as_str().as_bytes(),
            text.as_bytes(),
            &(self.dim as u64).to_le_bytes(),
        ])
    }

    pub fn embed(&self, text: &str, role: Role) -> Result<EmbeddingVector, DenseError> {
        let mut batch = self.embed_many(&[text], role)?;
        Ok(batch.vectors.pop().expect("one vector per input"))
    }

    /// Embeds every text; cached texts are not sent again and the rest go out
    /// in batches of the configured size.
    pub fn embed_many(&self, texts: &[&str], role: Role) -> Result<EncodedBatch, DenseError> {
        let mut truncated = 0;
        let mut prepared = Vec::with_capacity(texts.len());
        for text in texts {
            if text.trim().is_empty() {
                return Err(DenseError::EmptyText);
            }
            let (cut, was_cut) = truncate_units(text, self.max_units);
            truncated += usize::from(was_cut);
            prepared.push(cut);
        }
        let mut out: Vec<Option<EmbeddingVector>> = Vec::with_capacity(prepared.len());
        let mut missing: Vec<usize> = Vec::new();
        for (i, text) in prepared.iter().enumerate() {
            let hit = self.cache.get(&self.key(role, text)).and_then(|b| EmbeddingVector::from_bytes(&b, self.dim));
            if hit.is_none() {
                missing.push(i);
            }
            out.push(hit);
        }
        for chunk in missing.chunks(self.batch_size) {
            let batch: Vec<String> = chunk.iter().map(|&i| prepared[i].clone()).collect();
            let raw = self.retry.run(|| self.embedder.embed_batch(&batch, role, self.dim))?;
            if raw.len() != batch.len() {
                return Err(ProviderError::Contract(format!(
                    "{} vectors for {} inputs",
                    raw.len(),
                    batch.len()
                ))
                .into());
            }
            for (&i, raw) in chunk.iter().zip(raw) {
                let v = EmbeddingVector::from_raw(raw, self.dim)?;
                if let Err(e) = self.cache.put(&self.key(role, &prepared[i]), &v.to_bytes()) {
                    log::warn!("cannot write embedding cache: {e}");
                }
                out[i] = Some(v);
            }
        }
        Ok(EncodedBatch { vectors: out.into_iter().map(|v| v.expect("every slot filled")).collect(), truncated })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::StubEmbedder;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

    fn unit(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::from_raw(v.to_vec(), v.len()).unwrap()
    }

    #[test]
    fn three_four_five() {
        let mut raw = vec![0.0; 1024];
        raw[0] = 3.0;
        raw[1] = 4.0;
        let v = EmbeddingVector::from_raw(raw, 1024).unwrap();
        assert_eq!(v.dim(), 1024);
        assert!((v.values()[0] - 0.6).abs() < 1e-15);
        assert!((v.values()[1] - 0.8).abs() < 1e-15);
        assert!(v.values()[2..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_short_and_nan_vectors_rejected() {
        assert!(matches!(EmbeddingVector::from_raw(vec![0.0; 4], 4), Err(ProviderError::Contract(_))));
        assert!(matches!(EmbeddingVector::from_raw(vec![1.0; 3], 4), Err(ProviderError::Contract(_))));
        assert!(matches!(EmbeddingVector::from_raw(vec![1.0, f64::NAN], 2), Err(ProviderError::Contract(_))));
        // longer vectors are cut to the requested dimension
        assert_eq!(EmbeddingVector::from_raw(vec![1.0, 0.0, 5.0], 2).unwrap().values(), &[1.0, 0.0]);
    }

    #[test]
    fn cosine_examples() {
        let u = unit(&[0.6, 0.8, 0.0]);
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&unit(&[1.0, 0.0, 0.0]), &unit(&[0.0, 1.0, 0.0])).unwrap(), 0.0);
        assert!((cosine(&u, &unit(&[1.0, 0.0, 0.0])).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(cosine(&u, &unit(&[1.0, 0.0])), Err(DenseError::DimMismatch(3, 2)));
    }

    fn with_cos(c: f64) -> EmbeddingVector {
        unit(&[c, (1.0 - c * c).sqrt()])
    }

    #[test]
    fn rank_examples() {
        let q = unit(&[1.0, 0.0]);
        let cands = vec![("a".to_string(), with_cos(0.9)), ("b".to_string(), with_cos(0.1)), ("c".to_string(), with_cos(0.5))];
        let ranked = dense_rank("q", &q, &cands, 2).unwrap();
        let ids: Vec<_> = ranked.entries.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);

        let same = vec![("z".to_string(), with_cos(0.3)), ("m".to_string(), with_cos(0.3))];
        let ranked = dense_rank("q", &q, &same, 10).unwrap();
        let ids: Vec<_> = ranked.entries.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(ids, ["m", "z"]);
        assert_eq!(ranked.len(), 2);
    }

    struct Counting {
        inner: StubEmbedder,
        calls: AtomicUsize,
        texts: AtomicUsize,
    }

    impl Embedder for Counting {
        fn id(&self) -> &str {
            "counting"
        }
        fn embed_batch(&self, texts: &[String], role: Role, dim: usize) -> Result<Vec<Vec<f64>>, ProviderError> {
            self.calls.fetch_add(1, AtomicOrdering::SeqCst);
            self.texts.fetch_add(texts.len(), AtomicOrdering::SeqCst);
            self.inner.embed_batch(texts, role, dim)
        }
    }

    #[test]
    fn second_embed_is_served_from_cache() {
        let emb = Arc::new(Counting { inner: StubEmbedder::default(), calls: 0.into(), texts: 0.into() });
        let enc = DenseEncoder::new(emb.clone(), ResponseCache::in_memory()).with_dim(64);
        let a = enc.embed("dam failure", Role::Query).unwrap();
        let b = enc.embed("dam failure", Role::Query).unwrap();
        assert_eq!(a, b);
        assert_eq!(emb.calls.load(AtomicOrdering::SeqCst), 1);
        assert_eq!(enc.cache_stats().hits, 1);
        assert_eq!(enc.embed("   ", Role::Query), Err(DenseError::EmptyText));
    }

    #[test]
    fn only_uncached_texts_are_sent_and_batches_respected() {
        let emb = Arc::new(Counting { inner: StubEmbedder::default(), calls: 0.into(), texts: 0.into() });
        let enc = DenseEncoder::new(emb.clone(), ResponseCache::in_memory()).with_dim(32).with_batch_size(2);
        enc.embed("alpha river", Role::Document).unwrap();
        let out = enc.embed_many(&["alpha river", "bravo", "charlie", "delta"], Role::Document).unwrap();
        assert_eq!(out.vectors.len(), 4);
        assert_eq!(emb.texts.load(AtomicOrdering::SeqCst), 4);
        assert_eq!(emb.calls.load(AtomicOrdering::SeqCst), 3);
    }

    #[test]
    fn truncation_is_counted() {
        let enc = DenseEncoder::new(Arc::new(StubEmbedder::default()), ResponseCache::in_memory())
            .with_dim(16)
            .with_max_units(2);
        let out = enc.embed_many(&["one two three", "four five"], Role::Document).unwrap();
        assert_eq!(out.truncated, 1);
    }

    fn arb_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn order_independent(raw in proptest::collection::vec(arb_vec(6), 1..30), q in arb_vec(6), seed in any::<u64>()) {
            let qv = EmbeddingVector::from_raw(q, 6).unwrap();
            let cands: Vec<(String, EmbeddingVector)> = raw
                .into_iter()
                .enumerate()
                .map(|(i, v)| (format!("d{:02}", (i * 7) % 31), EmbeddingVector::from_raw(v, 6).unwrap()))
                .collect();
            let mut shuffled = cands.clone();
            let n = shuffled.len();
            for i in (1..n).rev() {
                shuffled.swap(i, (seed as usize).wrapping_mul(i + 13) % (i + 1));
            }
            let a = dense_rank("q", &qv, &cands, 50).unwrap();
            let b = dense_rank("q", &qv, &shuffled, 50).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn positive_scaling_keeps_order(raw in proptest::collection::vec(arb_vec(5), 2..20), q in arb_vec(5), scale in 1e-3f64..1e3) {
            let qv = EmbeddingVector::from_raw(q, 5).unwrap();
            let plain: Vec<(String, EmbeddingVector)> = raw.iter().enumerate()
                .map(|(i, v)| (format!("d{i:02}"), EmbeddingVector::from_raw(v.clone(), 5).unwrap())).collect();
            let scaled: Vec<(String, EmbeddingVector)> = raw.iter().enumerate()
                .map(|(i, v)| (format!("d{i:02}"), EmbeddingVector::from_raw(v.iter().map(|x| x * scale).collect(), 5).unwrap())).collect();
            let a = dense_rank("q", &qv, &plain, 100).unwrap();
            let b = dense_rank("q", &qv, &scaled, 100).unwrap();
            let pos_b = |id: &str| b.entries.iter().position(|e| e.doc_id == id).unwrap();
            for (i, x) in a.entries.iter().enumerate() {
                for y in &a.entries[i + 1..] {
                    // rounding can only reorder near-ties
                    if x.similarity - y.similarity > 1e-9 {
                        prop_assert!(pos_b(&x.doc_id) < pos_b(&y.doc_id));
                    }
                }
            }
        }
    }
}
