//! Pipeline configuration, read from TOML.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dense::{DEFAULT_BATCH_SIZE, DEFAULT_DENSE_CUTOFF, DEFAULT_DIM, DEFAULT_MAX_UNITS};
use crate::expansion::{SamplingParams, DEFAULT_THETA};
use crate::provider::ProviderSpec;
use crate::rerank::{DEFAULT_K, DEFAULT_RERANK_MAX_UNITS};
use crate::sparse::DEFAULT_TOP_N;

/// Name that always resolves to the built-in stub provider.
pub const STUB_PROVIDER: &str = "stub";
pub const DEFAULT_OUTPUT_DEPTH: usize = 1000;

/// Which query text a stage consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuerySource {
    #[default]
    Base,
    Expanded,
}

impl fmt::Display for QuerySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuerySource::Base => "base",
            QuerySource::Expanded => "expanded",
        })
    }
}

impl FromStr for QuerySource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(QuerySource::Base),
            "expanded" => Ok(QuerySource::Expanded),
            other => Err(format!("unknown query source {other:?} (expected base or expanded)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub queries: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qrels: Option<PathBuf>,
    /// Loaded when present, otherwise built and saved here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    pub enabled: bool,
    pub provider: String,
    pub theta: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        let p = SamplingParams::default();
        Self {
            enabled: false,
            provider: STUB_PROVIDER.into(),
            theta: DEFAULT_THETA,
            temperature: p.temperature,
            top_p: p.top_p,
            max_tokens: p.max_tokens,
        }
    }
}

impl ExpansionConfig {
    pub fn sampling(&self) -> SamplingParams {
        SamplingParams { temperature: self.temperature, top_p: self.top_p, max_tokens: self.max_tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseConfig {
    pub query_source: QuerySource,
    pub top_n: usize,
}

impl Default for SparseConfig {
    fn default() -> Self {
        Self { query_source: QuerySource::Base, top_n: DEFAULT_TOP_N }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenseConfig {
    pub enabled: bool,
    pub provider: String,
    pub query_source: QuerySource,
    pub dim: usize,
    pub max_units: usize,
    pub cutoff: usize,
    pub batch_size: usize,
}

impl Default for DenseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            provider: STUB_PROVIDER.into(),
            query_source: QuerySource::Base,
            dim: DEFAULT_DIM,
            max_units: DEFAULT_MAX_UNITS,
            cutoff: DEFAULT_DENSE_CUTOFF,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankConfig {
    pub enabled: bool,
    pub provider: String,
    pub query_source: QuerySource,
    pub k: usize,
    pub max_units: usize,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            provider: STUB_PROVIDER.into(),
            query_source: QuerySource::Base,
            k: DEFAULT_K,
            max_units: DEFAULT_RERANK_MAX_UNITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub k: usize,
    pub n: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { k: crate::evaluation::DEFAULT_EVAL_K, n: crate::evaluation::DEFAULT_EVAL_N }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_run_tag")]
    pub run_tag: String,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Results written per query.
    #[serde(default = "default_output_depth")]
    pub output_depth: usize,
    /// Keep provider responses in memory only.
    #[serde(default)]
    pub no_cache: bool,
    pub paths: Paths,
    #[serde(default)]
    pub expansion: ExpansionConfig,
    #[serde(default)]
    pub sparse: SparseConfig,
    #[serde(default)]
    pub dense: DenseConfig,
    #[serde(default)]
    pub rerank: RerankConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderSpec>,
}

fn default_run_tag() -> String {
    "xlr".into()
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn default_output_depth() -> usize {
    DEFAULT_OUTPUT_DEPTH
}

fn config_error(message: impl Into<String>) -> PipelineError {
    PipelineError::Config(message.into())
}

impl PipelineConfig {
    /// Minimal config with every stage but sparse retrieval off.
    pub fn new(corpus: PathBuf, queries: PathBuf, output_dir: PathBuf) -> Self {
        Self {
            run_tag: default_run_tag(),
            workers: default_workers(),
            output_depth: DEFAULT_OUTPUT_DEPTH,
            no_cache: false,
            paths: Paths { corpus, queries, qrels: None, index: None, output_dir, cache_dir: None, stopwords: None },
            expansion: ExpansionConfig::default(),
            sparse: SparseConfig::default(),
            dense: DenseConfig::default(),
            rerank: RerankConfig::default(),
            evaluation: EvaluationConfig::default(),
            providers: BTreeMap::new(),
        }
    }

    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut config: Self = toml::from_str(text).map_err(|e| config_error(format!("invalid config: {e}")))?;
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [&mut p.corpus, &mut p.queries, &mut p.output_dir] {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        for path in [&mut p.qrels, &mut p.index, &mut p.cache_dir, &mut p.stopwords].into_iter().flatten() {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        for spec in self.providers.values_mut() {
            spec.resolve_paths(base);
        }
    }

    /// Looks up a provider by name; `stub` is always available.
    pub fn provider(&self, name: &str) -> Result<ProviderSpec, PipelineError> {
        match self.providers.get(name) {
            Some(spec) => Ok(spec.clone()),
            None if name == STUB_PROVIDER => Ok(ProviderSpec::stub()),
            None => {
                let known: Vec<&str> =
                    std::iter::once(STUB_PROVIDER).chain(self.providers.keys().map(String::as_str)).collect();
                Err(config_error(format!("unknown provider {name:?}; known providers: {}", known.join(", "))))
            }
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.rerank.enabled && !self.dense.enabled {
            return Err(config_error("rerank requires the dense stage to be enabled"));
        }
        let sources = [
            ("sparse", self.sparse.query_source, true),
            ("dense", self.dense.query_source, self.dense.enabled),
            ("rerank", self.rerank.query_source, self.rerank.enabled),
        ];
        for (stage, source, active) in sources {
            if active && source == QuerySource::Expanded && !self.expansion.enabled {
                return Err(config_error(format!("{stage} uses the expanded query but expansion is disabled")));
            }
        }
        let knobs = [
            ("workers", self.workers),
            ("output_depth", self.output_depth),
            ("expansion.theta", self.expansion.theta),
            ("expansion.max_tokens", self.expansion.max_tokens as usize),
            ("sparse.top_n", self.sparse.top_n),
            ("dense.dim", self.dense.dim),
            ("dense.max_units", self.dense.max_units),
            ("dense.cutoff", self.dense.cutoff),
            ("dense.batch_size", self.dense.batch_size),
            ("rerank.k", self.rerank.k),
            ("rerank.max_units", self.rerank.max_units),
            ("evaluation.k", self.evaluation.k),
            ("evaluation.n", self.evaluation.n),
        ];
        if let Some((name, _)) = knobs.iter().find(|(_, v)| *v == 0) {
            return Err(config_error(format!("{name} must be positive")));
        }
        self.expansion.sampling().validate().map_err(|e| config_error(e.to_string()))?;
        if self.run_tag.is_empty() || self.run_tag.chars().any(char::is_whitespace) {
            return Err(config_error(format!("run_tag {:?} must be a single non-empty word", self.run_tag)));
        }
        let enabled = [
            (self.expansion.enabled, &self.expansion.provider),
            (self.dense.enabled, &self.dense.provider),
            (self.rerank.enabled, &self.rerank.provider),
        ];
        for (on, name) in enabled {
            if on {
                if let ProviderSpec::Http { endpoint, .. } = self.provider(name)? {
                    if endpoint.trim().is_empty() {
                        return Err(config_error(format!("provider {name} has an empty endpoint")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Flattened `section.key = value` view, for diffs.
    pub fn flatten(&self) -> BTreeMap<String, String> {
        fn walk(prefix: &str, value: &toml::Value, out: &mut BTreeMap<String, String>) {
            match value {
                toml::Value::Table(t) => {
                    for (k, v) in t {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&key, v, out);
                    }
                }
                other => {
                    out.insert(prefix.to_string(), other.to_string());
                }
            }
        }
        let value = toml::Value::try_from(self).expect("config converts to a TOML value");
        let mut out = BTreeMap::new();
        walk("", &value, &mut out);
        out
    }

    /// Keys whose values differ, as `key: old -> new`.
    pub fn diff(&self, other: &Self) -> Vec<String> {
        let (a, b) = (self.flatten(), other.flatten());
        let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .filter(|k| a.get(*k) != b.get(*k))
            .map(|k| {
                let show = |v: Option<&String>| v.cloned().unwrap_or_else(|| "(unset)".into());
                format!("{k}: {} -> {}", show(a.get(k)), show(b.get(k)))
            })
            .collect()
    }
}
