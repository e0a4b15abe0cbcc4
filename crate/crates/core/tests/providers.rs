use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use xlr_core::cache::ResponseCache;
use xlr_core::corpus::Query;
use xlr_core::dense::{Embedder, Role};
use xlr_core::expansion::{Expander, PseudoDocRequest, SamplingParams, TextGenerator};
use xlr_core::provider::{
    HttpClient, HttpEmbedder, HttpLogitScorer, HttpTextGenerator, ProviderError, RetryPolicy,
};
use xlr_core::rerank::{LogitScorer, PointwiseReranker, RerankRequest};
use xlr_core::textproc::Preprocessor;

struct Recorded {
    headers: Vec<String>,
    body: String,
}

/// Serves the scripted `(status, body)` replies in order, one per connection.
fn mock_server(replies: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Recorded>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&log);
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut headers = Vec::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap_or(0);
                    }
                }
                headers.push(line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            seen.lock().unwrap().push(Recorded { headers, body: String::from_utf8(buf).unwrap() });
            let mut stream = reader.into_inner();
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, log)
}

fn client(url: &str, env: Option<&str>) -> HttpClient {
    HttpClient::new(url, env, Some("mock".into()), Duration::from_secs(5)).unwrap()
}

fn pseudo_doc_request() -> PseudoDocRequest {
    PseudoDocRequest::new("q1", "flooding in the city", SamplingParams::default()).unwrap()
}

#[test]
fn generator_sends_prompt_and_bearer_token() {
    std::env::set_var("XLR_TEST_PROVIDER_TOKEN", "s3cret");
    let (url, log) = mock_server(vec![(200, r#"{"text":"the river rose"}"#)]);
    let generator = HttpTextGenerator::new(client(&url, Some("XLR_TEST_PROVIDER_TOKEN")));
    assert_eq!(generator.generate(&pseudo_doc_request()).unwrap(), "the river rose");
    let log = log.lock().unwrap();
    assert!(log[0].headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer s3cret")));
    let body: serde_json::Value = serde_json::from_str(&log[0].body).unwrap();
    assert!(body["prompt"].as_str().unwrap().contains("flooding in the city"));
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["top_p"], 1.0);
    assert_eq!(body["max_tokens"], 512);
}

#[test]
fn missing_credential_variable_is_a_config_error() {
    let err = HttpClient::new("http://127.0.0.1:9/", Some("XLR_TEST_UNSET_TOKEN"), None, Duration::from_secs(1))
        .unwrap_err();
    assert!(matches!(err, ProviderError::Config(_)));
}

#[test]
fn status_codes_are_classified() {
    let (url, _) = mock_server(vec![
        (429, "{}"),
        (503, "{}"),
        (400, "{}"),
        (200, r#"{"wrong":"shape"}"#),
    ]);
    let generator = HttpTextGenerator::new(client(&url, None));
    let req = pseudo_doc_request();
    assert!(matches!(generator.generate(&req), Err(ProviderError::Retryable(_))));
    assert!(matches!(generator.generate(&req), Err(ProviderError::Retryable(_))));
    assert!(matches!(generator.generate(&req), Err(ProviderError::Fatal(_))));
    assert!(matches!(generator.generate(&req), Err(ProviderError::Contract(_))));
}

#[test]
fn unreachable_endpoint_is_retryable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let generator = HttpTextGenerator::new(client(&format!("http://127.0.0.1:{port}/"), None));
    assert!(generator.generate(&pseudo_doc_request()).unwrap_err().is_retryable());
}

#[test]
fn retry_recovers_after_transient_failures() {
    let (url, log) = mock_server(vec![(500, "{}"), (429, "{}"), (200, r#"{"text":"levee breach downstream"}"#)]);
    let generator = HttpTextGenerator::new(client(&url, None));
    let text = RetryPolicy::no_backoff(3).run(|| generator.generate(&pseudo_doc_request())).unwrap();
    assert_eq!(text, "levee breach downstream");
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn embedder_checks_vector_count() {
    let (url, log) = mock_server(vec![(200, r#"{"vectors":[[1.0,0.0],[0.0,1.0]]}"#), (200, r#"{"vectors":[[1.0]]}"#)]);
    let embedder = HttpEmbedder::new(client(&url, None));
    let texts = vec!["a".to_string(), "b".to_string()];
    assert_eq!(embedder.embed_batch(&texts, Role::Document, 2).unwrap().len(), 2);
    let body: serde_json::Value = serde_json::from_str(&log.lock().unwrap()[0].body).unwrap();
    assert_eq!(body["texts"], serde_json::json!(["a", "b"]));
    assert_eq!(body["dim"], 2);
    assert!(matches!(embedder.embed_batch(&texts, Role::Query, 2), Err(ProviderError::Contract(_))));
}

#[test]
fn logit_scorer_feeds_the_softmax() {
    let (url, _) = mock_server(vec![(200, r#"{"yes_logit":2.0,"no_logit":0.0}"#)]);
    let scorer = HttpLogitScorer::new(client(&url, None));
    let req = RerankRequest { query_text: "q".into(), doc_text: "d".into(), prompt: "p".into() };
    let logits = scorer.label_logits(&req).unwrap();
    assert!((logits.yes_probability() - 0.880797).abs() < 1e-6);

    let (url, _) = mock_server(vec![(200, r#"{"yes_logit":0.0,"no_logit":0.0}"#)]);
    let reranker = PointwiseReranker::new(Arc::new(HttpLogitScorer::new(client(&url, None))), ResponseCache::disabled());
    assert_eq!(reranker.score_pair("q", "d").unwrap(), 0.5);
}

struct Counting {
    calls: AtomicUsize,
}

impl TextGenerator for Counting {
    fn id(&self) -> &str {
        "counting"
    }

    fn generate(&self, request: &PseudoDocRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(format!("{} reservoir evacuation reservoir", request.query_id))
    }
}

#[test]
fn second_expansion_run_is_served_from_disk_cache() {
    let dir = tempfile::tempdir().unwrap();
    let queries: Vec<Query> =
        (0..6).map(|i| Query { query_id: format!("q{i}"), text: format!("flood warning {i}") }).collect();
    let generator = Arc::new(Counting { calls: AtomicUsize::new(0) });
    let first = Expander::new(generator.clone(), ResponseCache::on_disk(dir.path()).unwrap(), Preprocessor::default())
        .expand_all(&queries, 3);
    assert_eq!(generator.calls.load(Ordering::SeqCst), 6);
    let expander = Expander::new(generator.clone(), ResponseCache::on_disk(dir.path()).unwrap(), Preprocessor::default());
    let second = expander.expand_all(&queries, 3);
    assert_eq!(generator.calls.load(Ordering::SeqCst), 6);
    assert!(second.iter().all(|o| o.from_cache));
    assert_eq!(expander.cache_stats().hits, 6);
    let a: Vec<_> = first.iter().map(|o| &o.query).collect();
    let b: Vec<_> = second.iter().map(|o| &o.query).collect();
    assert_eq!(a, b);
}
