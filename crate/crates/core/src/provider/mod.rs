//! Hosted-model access: retry policy, provider configuration, and the HTTP
//! and stub backends for the three model roles (generation, embedding,
//! label logits).

mod http;
mod stub;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::Embedder;
use crate::expansion::TextGenerator;
use crate::rerank::LogitScorer;

pub use http::{HttpClient, HttpEmbedder, HttpLogitScorer, HttpTextGenerator};
pub use stub::{ConceptLexicon, StubEmbedder, StubLogitScorer, StubTextGenerator};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    /// Transport failure, timeout, 429 or 5xx. Worth another attempt.
    #[error("provider unavailable: {0}")]
    Retryable(String),
    /// The provider answered, but not in the agreed shape.
    #[error("provider contract violated: {0}")]
    Contract(String),
    #[error("provider request rejected: {0}")]
    Fatal(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Retryable(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, initial_backoff: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    pub fn no_backoff(max_attempts: u32) -> Self {
        Self { max_attempts, initial_backoff: Duration::ZERO }
    }

    /// Runs `call` until it succeeds, fails non-retryably, or the attempt
    /// budget is spent. Backoff doubles after each retryable failure.
    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let mut delay = self.initial_backoff;
        let attempts = self.max_attempts.max(1);
        for attempt in 1..=attempts {
            match call() {
                Err(e) if e.is_retryable() && attempt < attempts => {
                    log::warn!("attempt {attempt}/{attempts} failed: {e}; retrying");
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    delay *= 2;
                }
                other => return other,
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}

/// How to reach one provider, as written in the pipeline config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderSpec {
    Http {
        endpoint: String,
        /// Name of the environment variable holding a bearer token.
        #[serde(default)]
        credential_env: Option<String>,
        /// Cache identity; defaults to the endpoint URL.
        #[serde(default)]
        id: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    Stub {
        /// JSONL file with `{"query_id", "text"}` canned generations.
        #[serde(default)]
        fixtures: Option<PathBuf>,
        /// TSV `word<TAB>concept` map used by the embedding and logit stubs.
        #[serde(default)]
        lexicon: Option<PathBuf>,
        /// Fixed generation returned for every query.
        #[serde(default)]
        echo: Option<String>,
    },
}

fn default_timeout_secs() -> u64 {
    120
}

impl ProviderSpec {
    /// Plain stub with no fixtures.
    pub fn stub() -> Self {
        ProviderSpec::Stub { fixtures: None, lexicon: None, echo: None }
    }

    /// Relative paths inside the provider definition are resolved against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let ProviderSpec::Stub { fixtures, lexicon, .. } = self {
            for p in [fixtures, lexicon].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    fn http_client(&self) -> Option<Result<HttpClient, ProviderError>> {
        match self {
            ProviderSpec::Http { endpoint, credential_env, id, timeout_secs } => Some(HttpClient::new(
                endpoint,
                credential_env.as_deref(),
                id.clone(),
                Duration::from_secs(*timeout_secs),
            )),
            ProviderSpec::Stub { .. } => None,
        }
    }

    fn lexicon(&self) -> Result<ConceptLexicon, ProviderError> {
        match self {
            ProviderSpec::Stub { lexicon: Some(path), .. } => ConceptLexicon::from_file(path),
            _ => Ok(ConceptLexicon::default()),
        }
    }

    pub fn text_generator(&self) -> Result<Arc<dyn TextGenerator>, ProviderError> {
        if let Some(client) = self.http_client() {
            return Ok(Arc::new(HttpTextGenerator::new(client?)));
        }
        let ProviderSpec::Stub { fixtures, echo, .. } = self else { unreachable!() };
        let stub = match (echo, fixtures) {
            (Some(text), _) => StubTextGenerator::fixed(text.clone()),
            (None, Some(path)) => StubTextGenerator::from_fixture_file(path)?,
            (None, None) => StubTextGenerator::echo(),
        };
        Ok(Arc::new(stub))
    }

    pub fn embedder(&self) -> Result<Arc<dyn Embedder>, ProviderError> {
        if let Some(client) = self.http_client() {
            return Ok(Arc::new(HttpEmbedder::new(client?)));
        }
        Ok(Arc::new(StubEmbedder::new(self.lexicon()?)))
    }

    pub fn logit_scorer(&self) -> Result<Arc<dyn LogitScorer>, ProviderError> {
        if let Some(client) = self.http_client() {
            return Ok(Arc::new(HttpLogitScorer::new(client?)));
        }
        Ok(Arc::new(StubLogitScorer::new(self.lexicon()?)))
    }
}
