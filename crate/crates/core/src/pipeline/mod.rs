//! End-to-end orchestration: expansion, BM25 candidates, dense ranking and
//! head reranking, producing a TREC run and a diagnostics document.
//!
//! The per-stage helpers ([`sparse_candidates`], [`dense_stage`],
//! [`rerank_stage`]) are shared with the command-line subcommands, so a
//! chained invocation produces the same run as the pipeline.

mod ablation;
mod config;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablation::{parse_settings, run_ablation, AblationReport, AblationRow, AblationSetting};
pub use config::{
    DenseConfig, EvaluationConfig, ExpansionConfig, Paths, PipelineConfig, QuerySource, RerankConfig, SparseConfig,
    DEFAULT_OUTPUT_DEPTH, STUB_PROVIDER,
};

use crate::cache::{CacheStats, ResponseCache};
use crate::corpus::{full_translation_view, ingest_corpus, Corpus, CorpusError, CorpusFormat, Query};
use crate::dense::{dense_rank, DenseEncoder, DenseError, DenseRankedList, Role};
use crate::evaluation::{format_run, EvalError, Run, RunEntry};
use crate::expansion::{ExpandedQuery, Expander, ExpansionOutcome};
use crate::rerank::{rerank_merge, MergedEntry, MergedRankedList, PointwiseReranker, RerankError};
use crate::sparse::{build_index_with_workers, IndexError, InvertedIndex};
use crate::textproc::{Preprocessor, StopwordList};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("all {failed} queries failed")]
    AllQueriesFailed { failed: usize },
}

impl PipelineError {
    /// Process exit status: 1 config, 2 data, 3 every query failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::AllQueriesFailed { .. } => 3,
        }
    }
}

impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<IndexError> for PipelineError {
    fn from(e: IndexError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidParams(m) => PipelineError::Config(m),
            other => PipelineError::Data(other.to_string()),
        }
    }
}


/// A query as read from a queries file, with its expansion when the file
/// holds expanded queries.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryInput {
    pub query_id: String,
    pub base: String,
    pub expanded: Option<String>,
}

impl QueryInput {
    pub fn text(&self, source: QuerySource) -> Option<&str> {
        match source {
            QuerySource::Base => Some(&self.base),
            QuerySource::Expanded => self.expanded.as_deref(),
        }
    }

    pub fn as_query(&self) -> Query {
        Query { query_id: self.query_id.clone(), text: self.base.clone() }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum QueryLine {
    Expanded(ExpandedQuery),
    Plain(Query),
}

/// Reads plain `{"query_id", "text"}` lines or expanded-query lines as
/// written by the expansion stage.
pub fn read_query_inputs(path: &Path) -> Result<Vec<QueryInput>, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Data(format!("cannot read queries {}: {e}", path.display())))?;
    let mut out: Vec<QueryInput> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: QueryLine = serde_json::from_str(line)
            .map_err(|e| PipelineError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let input = match parsed {
            QueryLine::Expanded(e) => QueryInput { query_id: e.query_id, base: e.original, expanded: Some(e.expanded_text) },
            QueryLine::Plain(q) => QueryInput { query_id: q.query_id, base: q.text, expanded: None },
        };
        if !seen.insert(input.query_id.clone()) {
            return Err(PipelineError::Data(format!("{}:{}: query {} repeated", path.display(), i + 1, input.query_id)));
        }
        out.push(input);
    }
    // keep text in the same normal form as the corpus
    let nfc = |s: &str| unicode_normalization::UnicodeNormalization::nfc(s).collect::<String>();
    for q in &mut out {
        q.base = nfc(&q.base);
        q.expanded = q.expanded.as_deref().map(nfc);
    }
    Ok(out)
}

/// The text each query sends to a stage; queries lacking that text are an
/// error.
pub fn texts_for(queries: &[QueryInput], source: QuerySource) -> Result<Vec<(String, String)>, PipelineError> {
    queries
        .iter()
        .map(|q| {
            q.text(source).map(|t| (q.query_id.clone(), t.to_string())).ok_or_else(|| {
                PipelineError::Config(format!("query {} has no expanded text; run expansion first", q.query_id))
            })
        })
        .collect()
}

/// Document ids of the BM25 top `top_n`.
pub fn sparse_candidates(index: &InvertedIndex, pp: &Preprocessor, text: &str, top_n: usize) -> Vec<String> {
    index.search(&pp.preprocess(text), top_n).into_iter().map(|c| c.doc_id).collect()
}

/// Dense ranking of candidates plus how many document texts were cut.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOutcome {
    pub list: DenseRankedList,
    pub truncated: usize,
}

/// Embeds the query and the candidates' translation views and ranks by
/// cosine similarity. No provider call is made without candidates.
pub fn dense_stage(
    encoder: &DenseEncoder,
    corpus: &Corpus,
    query_id: &str,
    query_text: &str,
    candidates: &[String],
    cutoff: usize,
) -> Result<DenseOutcome, String> {
    if candidates.is_empty() {
        return Ok(DenseOutcome { list: DenseRankedList { query_id: query_id.into(), entries: Vec::new() }, truncated: 0 });
    }
    let views = candidate_views(corpus, candidates)?;
    let qvec = encoder.embed(query_text, Role::Query).map_err(|e: DenseError| format!("query embedding: {e}"))?;
    let refs: Vec<&str> = views.iter().map(String::as_str).collect();
    let batch = encoder.embed_many(&refs, Role::Document).map_err(|e| format!("document embedding: {e}"))?;
    let pairs: Vec<(String, _)> = candidates.iter().cloned().zip(batch.vectors).collect();
    let list = dense_rank(query_id, &qvec, &pairs, cutoff).map_err(|e| e.to_string())?;
    Ok(DenseOutcome { list, truncated: batch.truncated })
}

fn candidate_views(corpus: &Corpus, ids: &[String]) -> Result<Vec<String>, String> {
    ids.iter()
        .map(|id| corpus.by_id(id).map(full_translation_view).ok_or_else(|| format!("unknown document {id}")))
        .collect()
}

/// Scores the first `k` dense entries and merges them back over the tail.
pub fn rerank_stage(
    reranker: &PointwiseReranker,
    corpus: &Corpus,
    query_text: &str,
    dense: &DenseRankedList,
    k: usize,
) -> Result<MergedRankedList, String> {
    let head: Vec<String> = dense.entries.iter().take(k).map(|e| e.doc_id.clone()).collect();
    let views = candidate_views(corpus, &head)?;
    let mut scores = HashMap::with_capacity(head.len());
    for (id, view) in head.iter().zip(&views) {
        let p = reranker.score_pair(query_text, view).map_err(|e: RerankError| format!("{id}: {e}"))?;
        scores.insert(id.clone(), p);
    }
    rerank_merge(dense, &scores, k).map_err(|e| e.to_string())
}

/// Turns per-query ranked ids into run entries with rank-derived scores.
pub fn run_entries(ranked: &[(String, Vec<String>)], run_tag: &str) -> Vec<RunEntry> {
    let run = Run {
        queries: ranked
            .iter()
            .filter(|(_, ids)| !ids.is_empty())
            .map(|(q, ids)| crate::evaluation::QueryRun { query_id: q.clone(), doc_ids: ids.clone() })
            .collect(),
    };
    run.to_entries(run_tag)
}

/// Loads the stopword list named by the config, or the built-in one.
pub fn load_preprocessor(stopwords: Option<&Path>) -> Result<Preprocessor, PipelineError> {
    match stopwords {
        Some(path) => {
            let list = StopwordList::from_file(path).map_err(|e| PipelineError::Config(e.to_string()))?;
            Ok(Preprocessor::new(list))
        }
        None => Ok(Preprocessor::default()),
    }
}

/// Loads the index at `path` if it exists and matches the preprocessor,
/// otherwise builds it (saving it to `path` when one is given).
pub fn load_or_build_index(
    corpus: &Corpus,
    pp: &Preprocessor,
    path: Option<&Path>,
    workers: usize,
) -> Result<InvertedIndex, PipelineError> {
    if let Some(p) = path.filter(|p| p.exists()) {
        let index = InvertedIndex::load(p)?;
        if index.preprocessor_tag() != pp.tag() {
            return Err(PipelineError::Data(format!(
                "index {} was built with preprocessor {} but {} is configured",
                p.display(),
                index.preprocessor_tag(),
                pp.tag()
            )));
        }
        if index.num_docs() != corpus.len() {
            return Err(PipelineError::Data(format!(
                "index {} holds {} documents but the corpus has {}",
                p.display(),
                index.num_docs(),
                corpus.len()
            )));
        }
        return Ok(index);
    }
    let index = build_index_with_workers(corpus, pp, workers)?;
    if let Some(p) = path {
        index.save(p)?;
    }
    Ok(index)
}

fn stage_cache(config: &PipelineConfig, stage: &str) -> Result<ResponseCache, PipelineError> {
    match (&config.paths.cache_dir, config.no_cache) {
        (Some(dir), false) => ResponseCache::on_disk(dir.join(stage))
            .map_err(|e| PipelineError::Data(format!("cannot create cache {}: {e}", dir.display()))),
        _ => Ok(ResponseCache::in_memory()),
    }
}

/// Which stages run and which query text each one reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StagePlan {
    pub expansion: bool,
    pub dense: bool,
    pub rerank: bool,
    pub sparse_source: QuerySource,
    pub dense_source: QuerySource,
    pub rerank_source: QuerySource,
}

impl StagePlan {
    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            expansion: config.expansion.enabled,
            dense: config.dense.enabled,
            rerank: config.rerank.enabled,
            sparse_source: config.sparse.query_source,
            dense_source: config.dense.query_source,
            rerank_source: config.rerank.query_source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryFailure {
    pub query_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegradedExpansion {
    pub query_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheReport {
    pub hits: u64,
    pub misses: u64,
    pub hit_rate: f64,
}

impl From<CacheStats> for CacheReport {
    fn from(s: CacheStats) -> Self {
        Self { hits: s.hits, misses: s.misses, hit_rate: s.hit_rate() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryDiagnostics {
    pub query_id: String,
    pub expansion_terms: usize,
    pub sparse_candidates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_candidates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncated_documents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reranked: Option<usize>,
    pub emitted: usize,
    /// Rerank probability or dense similarity of each emitted entry.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stage_scores: Vec<MergedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub enabled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_source: Option<QuerySource>,
    pub total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<CacheReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub run_tag: String,
    pub queries: usize,
    pub emitted_queries: usize,
    pub expansion: StageSummary,
    pub sparse: StageSummary,
    pub dense: StageSummary,
    pub rerank: StageSummary,
    pub truncated_documents: usize,
    pub degraded_expansions: Vec<DegradedExpansion>,
    pub failed: Vec<QueryFailure>,
    pub per_query: Vec<QueryDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub entries: Vec<RunEntry>,
    pub diagnostics: Diagnostics,
}

impl PipelineOutput {
    pub fn run_text(&self) -> String {
        format_run(&self.entries)
    }

    pub fn run(&self) -> Run {
        Run::from_entries(&self.entries)
    }

    /// Writes `<stem>.run` and `<stem>.diagnostics.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), PipelineError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| PipelineError::Data(format!("cannot create {}: {e}", dir.display())))?;
        let run_path = dir.join(format!("{stem}.run"));
        let diag_path = dir.join(format!("{stem}.diagnostics.json"));
        crate::evaluation::write_run(&self.entries, &run_path)?;
        let json = serde_json::to_string_pretty(&self.diagnostics).expect("diagnostics serialize");
        std::fs::write(&diag_path, json)
            .map_err(|e| PipelineError::Data(format!("cannot write {}: {e}", diag_path.display())))?;
        Ok((run_path, diag_path))
    }
}

/// Loaded inputs and stage drivers, reusable across stage plans.
pub struct Pipeline {
    config: PipelineConfig,
    pp: Preprocessor,
    corpus: Corpus,
    index: InvertedIndex,
    queries: Vec<QueryInput>,
    pool: rayon::ThreadPool,
    expander: OnceLock<Result<Expander, String>>,
    encoder: OnceLock<Result<DenseEncoder, String>>,
    reranker: OnceLock<Result<PointwiseReranker, String>>,
    expansions: OnceLock<Vec<ExpansionOutcome>>,
}

struct QueryResult {
    ranked: Vec<String>,
    diag: QueryDiagnostics,
}

impl Pipeline {
    /// Reads the corpus and queries and loads or builds the index.
    pub fn prepare(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| PipelineError::Config(format!("cannot start {} workers: {e}", config.workers)))?;
        let pp = load_preprocessor(config.paths.stopwords.as_deref())?;
        let corpus = ingest_corpus(&config.paths.corpus, CorpusFormat::JsonLines)?;
        let queries = read_query_inputs(&config.paths.queries)?;
        let index = load_or_build_index(&corpus, &pp, config.paths.index.as_deref(), config.workers)?;
        Ok(Self {
            config,
            pp,
            corpus,
            index,
            queries,
            pool,
            expander: OnceLock::new(),
            encoder: OnceLock::new(),
            reranker: OnceLock::new(),
            expansions: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn queries(&self) -> &[QueryInput] {
        &self.queries
    }

    fn expander(&self) -> Result<&Expander, PipelineError> {
        let c = &self.config;
        let built = self.expander.get_or_init(|| {
            let generator = c.provider(&c.expansion.provider).map_err(|e| e.to_string())?.text_generator();
            let generator = generator.map_err(|e| e.to_string())?;
            let cache = stage_cache(c, "expansion").map_err(|e| e.to_string())?;
            Ok(Expander::new(generator, cache, self.pp.clone())
                .with_theta(c.expansion.theta)
                .with_params(c.expansion.sampling()))
        });
        built.as_ref().map_err(|e| PipelineError::Config(e.clone()))
    }

    fn encoder(&self) -> Result<&DenseEncoder, PipelineError> {
        let c = &self.config;
        let built = self.encoder.get_or_init(|| {
            let embedder = c.provider(&c.dense.provider).map_err(|e| e.to_string())?.embedder();
            let embedder = embedder.map_err(|e| e.to_string())?;
            let cache = stage_cache(c, "dense").map_err(|e| e.to_string())?;
            Ok(DenseEncoder::new(embedder, cache)
                .with_dim(c.dense.dim)
                .with_max_units(c.dense.max_units)
                .with_batch_size(c.dense.batch_size))
        });
        built.as_ref().map_err(|e| PipelineError::Config(e.clone()))
    }

    fn reranker(&self) -> Result<&PointwiseReranker, PipelineError> {
        let c = &self.config;
        let built = self.reranker.get_or_init(|| {
            let scorer = c.provider(&c.rerank.provider).map_err(|e| e.to_string())?.logit_scorer();
            let scorer = scorer.map_err(|e| e.to_string())?;
            let cache = stage_cache(c, "rerank").map_err(|e| e.to_string())?;
            Ok(PointwiseReranker::new(scorer, cache).with_max_units(c.rerank.max_units))
        });
        built.as_ref().map_err(|e| PipelineError::Config(e.clone()))
    }

    /// Expands every query once; later calls reuse the outcomes.
    pub fn expansions(&self) -> Result<&[ExpansionOutcome], PipelineError> {
        if let Some(done) = self.expansions.get() {
            return Ok(done);
        }
        let expander = self.expander()?;
        let queries: Vec<Query> = self.queries.iter().map(QueryInput::as_query).collect();
        let outcomes = self.pool.install(|| expander.expand_all(&queries, self.config.workers));
        Ok(self.expansions.get_or_init(|| outcomes))
    }

    /// Runs the stages configured in the config.
    pub fn run(&self) -> Result<PipelineOutput, PipelineError> {
        self.run_plan(&StagePlan::from_config(&self.config))
    }

    pub fn run_plan(&self, plan: &StagePlan) -> Result<PipelineOutput, PipelineError> {
        if plan.rerank && !plan.dense {
            return Err(PipelineError::Config("rerank requires the dense stage to be enabled".into()));
        }
        let c = &self.config;
        let mut queries = self.queries.clone();
        let mut degraded = Vec::new();
        let mut term_counts = vec![0; queries.len()];
        if plan.expansion {
            for (i, outcome) in self.expansions()?.iter().enumerate() {
                queries[i].expanded = Some(outcome.query.expanded_text.clone());
                term_counts[i] = outcome.query.expansion_terms.len();
                if let Some(reason) = &outcome.degraded {
                    degraded.push(DegradedExpansion { query_id: outcome.query.query_id.clone(), reason: reason.clone() });
                }
            }
        }
        let sparse_texts = texts_for(&queries, plan.sparse_source)?;
        let dense_texts = if plan.dense { Some(texts_for(&queries, plan.dense_source)?) } else { None };
        let rerank_texts = if plan.rerank { Some(texts_for(&queries, plan.rerank_source)?) } else { None };
        let encoder = if plan.dense { Some(self.encoder()?) } else { None };
        let reranker = if plan.rerank { Some(self.reranker()?) } else { None };

        let results: Vec<Result<QueryResult, QueryFailure>> = self.pool.install(|| {
            (0..queries.len())
                .into_par_iter()
                .map(|i| {
                    let (qid, sparse_text) = &sparse_texts[i];
                    let fail = |stage: &str, message: String| QueryFailure {
                        query_id: qid.clone(),
                        stage: stage.into(),
                        message,
                    };
                    let candidates = sparse_candidates(&self.index, &self.pp, sparse_text, c.sparse.top_n);
                    let mut diag = QueryDiagnostics {
                        query_id: qid.clone(),
                        expansion_terms: term_counts[i],
                        sparse_candidates: candidates.len(),
                        dense_candidates: None,
                        truncated_documents: None,
                        reranked: None,
                        emitted: 0,
                        stage_scores: Vec::new(),
                    };
                    let mut ranked = candidates;
                    if let (Some(encoder), Some(texts)) = (encoder, &dense_texts) {
                        let outcome = dense_stage(encoder, &self.corpus, qid, &texts[i].1, &ranked, c.dense.cutoff)
                            .map_err(|m| fail("dense", m))?;
                        diag.dense_candidates = Some(outcome.list.len());
                        diag.truncated_documents = Some(outcome.truncated);
                        let merged = match (reranker, &rerank_texts) {
                            (Some(reranker), Some(texts)) => {
                                let merged = rerank_stage(reranker, &self.corpus, &texts[i].1, &outcome.list, c.rerank.k)
                                    .map_err(|m| fail("rerank", m))?;
                                diag.reranked = Some(c.rerank.k.min(outcome.list.len()));
                                merged
                            }
                            _ => rerank_merge(&outcome.list, &HashMap::new(), 0).map_err(|e| fail("dense", e.to_string()))?,
                        };
                        ranked = merged.entries.iter().map(|e| e.doc_id.clone()).collect();
                        diag.stage_scores = merged.entries;
                        diag.stage_scores.truncate(c.output_depth);
                    }
                    ranked.truncate(c.output_depth);
                    diag.emitted = ranked.len();
                    Ok(QueryResult { ranked, diag })
                })
                .collect()
        });

        let mut ranked = Vec::new();
        let mut failed = Vec::new();
        let mut per_query = Vec::new();
        for r in results {
            match r {
                Ok(r) => {
                    ranked.push((r.diag.query_id.clone(), r.ranked));
                    per_query.push(r.diag);
                }
                Err(f) => {
                    log::error!("query {} failed in {}: {}", f.query_id, f.stage, f.message);
                    failed.push(f);
                }
            }
        }
        if !queries.is_empty() && failed.len() == queries.len() {
            return Err(PipelineError::AllQueriesFailed { failed: failed.len() });
        }
        let entries = run_entries(&ranked, &c.run_tag);
        let sum = |f: fn(&QueryDiagnostics) -> Option<usize>| per_query.iter().filter_map(f).sum::<usize>();
        let diagnostics = Diagnostics {
            run_tag: c.run_tag.clone(),
            queries: queries.len(),
            emitted_queries: ranked.iter().filter(|(_, ids)| !ids.is_empty()).count(),
            expansion: StageSummary {
                enabled: plan.expansion,
                query_source: None,
                total: per_query.iter().filter(|d| d.expansion_terms > 0).count(),
                cache: self.expander.get().and_then(|e| e.as_ref().ok()).map(|e| e.cache_stats().into()),
            },
            sparse: StageSummary {
                enabled: true,
                query_source: Some(plan.sparse_source),
                total: sum(|d| Some(d.sparse_candidates)),
                cache: None,
            },
            dense: StageSummary {
                enabled: plan.dense,
                query_source: plan.dense.then_some(plan.dense_source),
                total: sum(|d| d.dense_candidates),
                cache: encoder.map(|e| e.cache_stats().into()),
            },
            rerank: StageSummary {
                enabled: plan.rerank,
                query_source: plan.rerank.then_some(plan.rerank_source),
                total: sum(|d| d.reranked),
                cache: reranker.map(|r| r.cache_stats().into()),
            },
            truncated_documents: sum(|d| d.truncated_documents),
            degraded_expansions: degraded,
            failed,
            per_query,
        };
        Ok(PipelineOutput { entries, diagnostics })
    }
}

/// Prepares and runs the configured pipeline.
pub fn run_pipeline(config: PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    Pipeline::prepare(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::corpus::{write_queries, Corpus};

    fn doc(id: &str, body: &str) -> Document {
        Document {
            doc_id: id.into(),
            lang: "zho".into(),
            title: String::new(),
            body: String::new(),
            trans_title: String::new(),
            trans_body: body.into(),
        }
    }

    fn setup(dir: &Path) -> PipelineConfig {
        let corpus = Corpus::from_documents(vec![
            doc("d1", "river flood warning issued for the city"),
            doc("d2", "election results announced in the capital"),
            doc("d3", "flood waters rise along the river banks"),
            doc("d4", "football match ends in a draw"),
            doc("d5", "storm brings heavy rain and flood risk"),
        ])
        .unwrap();
        corpus.write_jsonl(&dir.join("corpus.jsonl")).unwrap();
        write_queries(
            &[
                Query { query_id: "q1".into(), text: "river flood".into() },
                Query { query_id: "q2".into(), text: "election".into() },
                Query { query_id: "q3".into(), text: "zzz unmatched".into() },
            ],
            &dir.join("queries.jsonl"),
        )
        .unwrap();
        let mut c = PipelineConfig::new(dir.join("corpus.jsonl"), dir.join("queries.jsonl"), dir.join("out"));
        c.workers = 2;
        c
    }

    #[test]
    fn sparse_only_matches_search() {
        let dir = tempfile::tempdir().unwrap();
        let c = setup(dir.path());
        let out = run_pipeline(c.clone()).unwrap();
        let p = Pipeline::prepare(c).unwrap();
        let ranked: Vec<(String, Vec<String>)> = p
            .queries()
            .iter()
            .map(|q| (q.query_id.clone(), sparse_candidates(p.index(), &Preprocessor::default(), &q.base, 2000)))
            .collect();
        assert_eq!(out.entries, run_entries(&ranked, "xlr"));
        assert_eq!(out.run().get("q1").unwrap().doc_ids[..2], ["d1", "d3"]);
        assert!(out.run().get("q3").is_none());
        assert_eq!(out.diagnostics.emitted_queries, 2);
    }

    #[test]
    fn full_stub_pipeline_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = setup(dir.path());
        c.expansion.enabled = true;
        c.dense.enabled = true;
        c.dense.dim = 64;
        c.rerank.enabled = true;
        c.sparse.query_source = QuerySource::Expanded;
        let a = run_pipeline(c.clone()).unwrap();
        c.workers = 1;
        let b = run_pipeline(c).unwrap();
        assert_eq!(a.run_text(), b.run_text());
        assert!(a.diagnostics.failed.is_empty());
        assert!(a.diagnostics.rerank.total > 0);
    }

    #[test]
    fn rerank_without_dense_plan_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::prepare(setup(dir.path())).unwrap();
        let mut plan = StagePlan::from_config(p.config());
        plan.rerank = true;
        assert_eq!(p.run_plan(&plan).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Config(String::new()).exit_code(), 1);
        assert_eq!(PipelineError::Data(String::new()).exit_code(), 2);
        assert_eq!(PipelineError::AllQueriesFailed { failed: 3 }.exit_code(), 3);
    }

    #[test]
    fn query_files_accept_both_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        std::fs::write(
            &path,
            "{\"query_id\":\"a\",\"text\":\"plain\"}\n{\"query_id\":\"b\",\"original\":\"x\",\"expansion_terms\":[\"y\"],\"expanded_text\":\"x y\"}\n",
        )
        .unwrap();
        let q = read_query_inputs(&path).unwrap();
        assert_eq!(q[0], QueryInput { query_id: "a".into(), base: "plain".into(), expanded: None });
        assert_eq!(q[1].text(QuerySource::Expanded), Some("x y"));
        assert!(texts_for(&q, QuerySource::Expanded).is_err());
    }
}
