use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::ProviderError;
use crate::dense::{Embedder, Role};
use crate::expansion::{PseudoDocRequest, TextGenerator};
use crate::rerank::{LabelLogits, LogitScorer, RerankRequest};

/// JSON-over-HTTP POST client shared by the three provider kinds.
#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: Agent,
    endpoint: String,
    bearer: Option<String>,
    id: String,
}

impl HttpClient {
    /// `credential_env` names an environment variable holding a bearer
    /// token; it must be set when named.
    pub fn new(
        endpoint: &str,
        credential_env: Option<&str>,
        id: Option<String>,
        timeout: Duration,
    ) -> Result<Self, ProviderError> {
        let bearer = match credential_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ProviderError::Config(format!("credential variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { agent, endpoint: endpoint.to_string(), bearer, id: id.unwrap_or_else(|| endpoint.to_string()) })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R, ProviderError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| ProviderError::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(ProviderError::Retryable(format!("HTTP {status}"))),
            _ => return Err(ProviderError::Fatal(format!("HTTP {status}"))),
        }
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| ProviderError::Contract(format!("unexpected response body: {e}")))
    }
}

#[derive(Serialize)]
struct GenerateBody<'a> {
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct GenerateReply {
    text: String,
}

pub struct HttpTextGenerator {
    client: HttpClient,
}

impl HttpTextGenerator {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl TextGenerator for HttpTextGenerator {
    fn id(&self) -> &str {
        self.client.id()
    }

    fn generate(&self, request: &PseudoDocRequest) -> Result<String, ProviderError> {
        let body = GenerateBody {
            prompt: &request.prompt,
            temperature: request.params.temperature,
            top_p: request.params.top_p,
            max_tokens: request.params.max_tokens,
        };
        let reply: GenerateReply = self.client.post(&body)?;
        Ok(reply.text)
    }
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    texts: &'a [String],
    role: Role,
    dim: usize,
}

#[derive(Deserialize)]
struct EmbedReply {
    vectors: Vec<Vec<f64>>,
}

pub struct HttpEmbedder {
    client: HttpClient,
}

impl HttpEmbedder {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        self.client.id()
    }

    fn embed_batch(&self, texts: &[String], role: Role, dim: usize) -> Result<Vec<Vec<f64>>, ProviderError> {
        let reply: EmbedReply = self.client.post(&EmbedBody { texts, role, dim })?;
        if reply.vectors.len() != texts.len() {
            return Err(ProviderError::Contract(format!(
                "{} vectors returned for {} texts",
                reply.vectors.len(),
                texts.len()
            )));
        }
        Ok(reply.vectors)
    }
}

#[derive(Serialize)]
struct ScoreBody<'a> {
    prompt: &'a str,
}

pub struct HttpLogitScorer {
    client: HttpClient,
}

impl HttpLogitScorer {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl LogitScorer for HttpLogitScorer {
    fn id(&self) -> &str {
        self.client.id()
    }

    fn label_logits(&self, request: &RerankRequest) -> Result<LabelLogits, ProviderError> {
        self.client.post(&ScoreBody { prompt: &request.prompt })
    }
}
