//! Generative query expansion.
//!
//! A text-generation provider writes a short news-style article for the
//! query. The article is preprocessed, its terms ranked by frequency (ties go
//! to the term seen first), terms already in the preprocessed query are
//! dropped, and the top `theta` survivors are appended to the query text.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{cache_key, CacheStats, ResponseCache};
use crate::corpus::Query;
use crate::provider::{ProviderError, RetryPolicy};
use crate::textproc::{term_frequencies, Preprocessor};

pub const DEFAULT_THETA: usize = 30;

pub const PSEUDO_DOC_PROMPT: &str = "You are a professional news writer.\n\
Based on the query, write a short, factual news-style article (3–6 paragraphs).\n\
\n\
Query: {QUERY}\n\
\n\
Write the article:";

pub fn render_pseudo_doc_prompt(query_text: &str) -> String {
    PSEUDO_DOC_PROMPT.replace("{QUERY}", query_text)
}

#[derive(Debug, Error, PartialEq)]
pub enum ExpansionError {
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("query {query_id:?}: generation failed: {source}")]
    Provider {
        query_id: String,
        #[source]
        source: ProviderError,
    },
    #[error("query {0:?} has empty text")]
    EmptyQuery(String),
    #[error("expansion term {term:?} is invalid for query {query_id:?}: {reason}")]
    InvalidTerm { query_id: String, term: String, reason: String },
}

/// Sampling parameters sent with every generation request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { temperature: 0.7, top_p: 1.0, max_tokens: 512 }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), ExpansionError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ExpansionError::InvalidParams(format!("temperature {} < 0", self.temperature)));
        }
        if self.top_p.is_nan() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(ExpansionError::InvalidParams(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(ExpansionError::InvalidParams("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// One pseudo-document request.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDocRequest {
    pub query_id: String,
    pub query_text: String,
    pub prompt: String,
    pub params: SamplingParams,
}

impl PseudoDocRequest {
    pub fn new(query_id: &str, query_text: &str, params: SamplingParams) -> Result<Self, ExpansionError> {
        params.validate()?;
        if query_text.trim().is_empty() {
            return Err(ExpansionError::EmptyQuery(query_id.to_string()));
        }
        Ok(Self {
            query_id: query_id.to_string(),
            query_text: query_text.to_string(),
            prompt: render_pseudo_doc_prompt(query_text),
            params,
        })
    }
}

pub trait TextGenerator: Send + Sync {
    /// Stable identity used in cache keys.
    fn id(&self) -> &str;
    fn generate(&self, request: &PseudoDocRequest) -> Result<String, ProviderError>;
}

/// A query with its expansion terms appended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedQuery {
    pub query_id: String,
    pub original: String,
    pub expansion_terms: Vec<String>,
    pub expanded_text: String,
}

impl ExpandedQuery {
    /// No expansion: the expanded text is the original.
    pub fn unexpanded(query_id: &str, original: &str) -> Self {
        Self {
            query_id: query_id.to_string(),
            original: original.to_string(),
            expansion_terms: Vec::new(),
            expanded_text: original.to_string(),
        }
    }
}

/// Top-`theta` expansion terms from a pseudo-document.
pub fn extract_terms(pp: &Preprocessor, pseudo_doc: &str, query_text: &str, theta: usize) -> Vec<String> {
    let stream = pp.preprocess(pseudo_doc);
    let tf = term_frequencies(&stream);
    let query_terms: HashSet<String> = pp.preprocess(query_text).into_tokens().into_iter().collect();

    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    for (i, t) in stream.iter().enumerate() {
        first_seen.entry(t).or_insert(i);
    }
    let mut pool: Vec<(&str, usize, usize)> = first_seen
        .into_iter()
        .filter(|(t, _)| !query_terms.contains(*t))
        .map(|(t, first)| (t, tf[t], first))
        .collect();
    pool.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    pool.into_iter().take(theta).map(|(t, _, _)| t.to_string()).collect()
}

/// Appends `terms` to the query text with single spaces.
///
/// Rejects duplicate terms and terms whose preprocessed form overlaps the
/// preprocessed query or another term.
pub fn expand_query(
    pp: &Preprocessor,
    query_id: &str,
    query_text: &str,
    terms: &[String],
) -> Result<ExpandedQuery, ExpansionError> {
    let invalid = |term: &str, reason: &str| ExpansionError::InvalidTerm {
        query_id: query_id.to_string(),
        term: term.to_string(),
        reason: reason.to_string(),
    };
    let mut taken: HashSet<String> = pp.preprocess(query_text).into_tokens().into_iter().collect();
    let mut seen = HashSet::new();
    for term in terms {
        if term.trim().is_empty() || term.chars().any(char::is_whitespace) {
            return Err(invalid(term, "terms must be single non-empty words"));
        }
        if !seen.insert(term.as_str()) {
            return Err(invalid(term, "duplicate term"));
        }
        for t in pp.preprocess(term).into_tokens() {
            if !taken.insert(t) {
                return Err(invalid(term, "overlaps the query or an earlier term after preprocessing"));
            }
        }
    }
    let expanded_text = if terms.is_empty() {
        query_text.to_string()
    } else {
        format!("{} {}", query_text, terms.join(" "))
    };
    Ok(ExpandedQuery {
        query_id: query_id.to_string(),
        original: query_text.to_string(),
        expansion_terms: terms.to_vec(),
        expanded_text,
    })
}

/// Result of expanding one query.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionOutcome {
    pub query: ExpandedQuery,
    /// Why the query fell back to its original text, if it did.
    pub degraded: Option<String>,
    pub from_cache: bool,
}

/// Stage driver: provider, cache and term extraction.
pub struct Expander {
    generator: Arc<dyn TextGenerator>,
    cache: ResponseCache,
    retry: RetryPolicy,
    params: SamplingParams,
    theta: usize,
    pp: Preprocessor,
}

impl Expander {
    pub fn new(generator: Arc<dyn TextGenerator>, cache: ResponseCache, pp: Preprocessor) -> Self {
        Self {
            generator,
            cache,
            retry: RetryPolicy::default(),
            params: SamplingParams::default(),
            theta: DEFAULT_THETA,
            pp,
        }
    }

    pub fn with_theta(mut self, theta: usize) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_params(mut self, params: SamplingParams) -> Self {
        self.params = params;
        self
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    /// Raw completion for the query, served from cache when possible.
    /// Returns the text and whether it came from the cache.
    pub fn generate_pseudo_doc(&self, query_id: &str, query_text: &str) -> Result<(String, bool), ExpansionError> {
        let request = PseudoDocRequest::new(query_id, query_text, self.params)?;
        let key = cache_key(&[self.generator.id().as_bytes(), request.prompt.as_bytes()]);
        if let Some(bytes) = self.cache.get(&key) {
            return Ok((String::from_utf8_lossy(&bytes).into_owned(), true));
        }
        let text = self
            .retry
            .run(|| self.generator.generate(&request))
            .map_err(|source| ExpansionError::Provider { query_id: query_id.to_string(), source })?;
        if let Err(e) = self.cache.put(&key, text.as_bytes()) {
            log::warn!("query {query_id}: cannot write generation cache: {e}");
        }
        Ok((text, false))
    }

    /// Expands one query, falling back to the original text when generation
    /// fails or comes back empty.
    pub fn expand(&self, query: &Query) -> ExpansionOutcome {
        let (text, from_cache) = match self.generate_pseudo_doc(&query.query_id, &query.text) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("{e}; using the unexpanded query");
                return ExpansionOutcome {
                    query: ExpandedQuery::unexpanded(&query.query_id, &query.text),
                    degraded: Some(e.to_string()),
                    from_cache: false,
                };
            }
        };
        if text.trim().is_empty() {
            log::warn!("query {}: empty generation; using the unexpanded query", query.query_id);
            return ExpansionOutcome {
                query: ExpandedQuery::unexpanded(&query.query_id, &query.text),
                degraded: Some("empty generation".into()),
                from_cache,
            };
        }
        let terms = extract_terms(&self.pp, &text, &query.text, self.theta);
        let expanded = expand_query(&self.pp, &query.query_id, &query.text, &terms)
            .expect("extracted terms satisfy the expansion invariants");
        ExpansionOutcome { query: expanded, degraded: None, from_cache }
    }

    /// Expands all queries with at most `in_flight` concurrent provider
    /// calls. Output order follows the input.
    pub fn expand_all(&self, queries: &[Query], in_flight: usize) -> Vec<ExpansionOutcome> {
        use rayon::prelude::*;
        match rayon::ThreadPoolBuilder::new().num_threads(in_flight.max(1)).build() {
            Ok(pool) => pool.install(|| queries.par_iter().map(|q| self.expand(q)).collect()),
            Err(e) => {
                log::warn!("cannot start expansion workers ({e}); expanding sequentially");
                queries.iter().map(|q| self.expand(q)).collect()
            }
        }
    }
}
