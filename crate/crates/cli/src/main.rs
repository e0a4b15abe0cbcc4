//! `xlr`: command-line front end for indexing, the individual retrieval
//! stages, evaluation, the full pipeline and the ablation harness.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use xlr_core::cache::ResponseCache;
use xlr_core::corpus::{ingest_corpus, Corpus, CorpusFormat, Query};
use xlr_core::dense::{DenseEncoder, DenseEntry, DenseRankedList};
use xlr_core::evaluation::{
    evaluate, read_qrels, read_run, write_run, GainMode, Run, DEFAULT_EVAL_K, DEFAULT_EVAL_N,
};
use xlr_core::expansion::{Expander, SamplingParams, DEFAULT_THETA};
use xlr_core::pipeline::{
    dense_stage, load_or_build_index, load_preprocessor, parse_settings, read_query_inputs, rerank_stage, run_ablation,
    run_entries, sparse_candidates, texts_for, AblationSetting, Pipeline, PipelineConfig, PipelineError,
    QuerySource, STUB_PROVIDER,
};
use xlr_core::provider::ProviderSpec;
use xlr_core::rerank::{PointwiseReranker, DEFAULT_K, DEFAULT_RERANK_MAX_UNITS};
use xlr_core::sparse::{InvertedIndex, DEFAULT_TOP_N};
use xlr_core::synth;

#[derive(Parser)]
#[command(name = "xlr", version, about = "Multi-stage cross-lingual news retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 index over the translated text of a corpus
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
    /// BM25 retrieval into a TREC run
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_N)]
        top_n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "base")]
        query_source: QuerySource,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value = "xlr")]
        run_tag: String,
    },
    /// Expand queries with terms mined from generated pseudo-documents
    Expand {
        #[arg(long)]
        queries: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
    /// Rank the candidates of a run by embedding similarity
    DenseRank {
        #[arg(long)]
        index_run: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long, default_value_t = xlr_core::dense::DEFAULT_DIM)]
        dim: usize,
        #[arg(long, default_value_t = xlr_core::dense::DEFAULT_MAX_UNITS)]
        max_units: usize,
        #[arg(long, default_value_t = xlr_core::dense::DEFAULT_DENSE_CUTOFF)]
        cutoff: usize,
        #[arg(long, default_value_t = xlr_core::dense::DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "base")]
        query_source: QuerySource,
        #[arg(long, default_value = "xlr")]
        run_tag: String,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
    /// Rescore the head of a run with the yes/no judge
    Rerank {
        #[arg(long)]
        dense_run: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_RERANK_MAX_UNITS)]
        max_units: usize,
        #[arg(long)]
        out: PathBuf,
        /// Sidecar JSON with rerank probabilities and input-run scores
        #[arg(long)]
        diag: Option<PathBuf>,
        #[arg(long, default_value = "base")]
        query_source: QuerySource,
        #[arg(long, default_value = "xlr")]
        run_tag: String,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
    /// Score a run against graded judgments
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EVAL_K)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_EVAL_N)]
        n: usize,
        #[arg(long, default_value = "exponential")]
        gain: GainMode,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include one table row per query
        #[arg(long)]
        per_query: bool,
    },
    /// Run every configured stage end to end
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Apply one ablation setting on top of the config
        #[arg(long)]
        setting: Option<String>,
    },
    /// Run and evaluate ablation settings
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// `all` or a comma-separated list of setting names
        #[arg(long, default_value = "all")]
        settings: String,
    },
    /// Write the seeded synthetic collection
    GenFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        docs: usize,
        #[arg(long, default_value_t = synth::DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Args)]
struct ProviderArgs {
    /// `stub` or a provider defined in the config file
    #[arg(long, default_value = STUB_PROVIDER)]
    provider: String,
    /// Config file holding provider definitions (and sampling settings)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for persisted provider responses
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Do not read or write persisted responses
    #[arg(long)]
    no_cache: bool,
}

impl ProviderArgs {
    fn config(&self) -> Result<Option<PipelineConfig>, PipelineError> {
        self.config.as_deref().map(PipelineConfig::from_file).transpose()
    }

    fn spec(&self) -> Result<ProviderSpec, PipelineError> {
        match self.config()? {
            Some(c) => c.provider(&self.provider),
            None if self.provider == STUB_PROVIDER => Ok(ProviderSpec::stub()),
            None => Err(PipelineError::Config(format!(
                "provider {:?} needs --config with a [providers.{}] section",
                self.provider, self.provider
            ))),
        }
    }

    fn cache(&self, stage: &str) -> Result<ResponseCache, PipelineError> {
        match (&self.cache_dir, self.no_cache) {
            (Some(dir), false) => ResponseCache::on_disk(dir.join(stage))
                .map_err(|e| PipelineError::Data(format!("cannot create cache {}: {e}", dir.display()))),
            _ => Ok(ResponseCache::in_memory()),
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn config_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn data_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(config_err)
}

fn load_corpus(path: &Path) -> Result<Corpus, PipelineError> {
    Ok(ingest_corpus(path, CorpusFormat::JsonLines)?)
}

fn write_ranked(ranked: &[(String, Vec<String>)], run_tag: &str, out: &Path) -> Result<(), PipelineError> {
    write_run(&run_entries(ranked, run_tag), out)?;
    Ok(())
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Index { corpus, out, stopwords, workers } => {
            let pp = load_preprocessor(stopwords.as_deref())?;
            let corpus = load_corpus(&corpus)?;
            if out.exists() {
                std::fs::remove_file(&out).map_err(data_err)?;
            }
            let index = load_or_build_index(&corpus, &pp, Some(&out), workers)?;
            eprintln!("indexed {} documents, {} terms -> {}", index.num_docs(), index.num_terms(), out.display());
        }
        Command::Search { index, queries, top_n, out, query_source, stopwords, run_tag } => {
            if top_n == 0 {
                return Err(config_err("--top-n must be positive"));
            }
            let pp = load_preprocessor(stopwords.as_deref())?;
            let index = InvertedIndex::load(&index).map_err(data_err)?;
            if index.preprocessor_tag() != pp.tag() {
                return Err(config_err(format!(
                    "index was built with preprocessor {} but {} is in use",
                    index.preprocessor_tag(),
                    pp.tag()
                )));
            }
            let texts = texts_for(&read_query_inputs(&queries)?, query_source)?;
            let ranked: Vec<(String, Vec<String>)> =
                texts.iter().map(|(q, t)| (q.clone(), sparse_candidates(&index, &pp, t, top_n))).collect();
            write_ranked(&ranked, &run_tag, &out)?;
        }
        Command::Expand { queries, provider, theta, out, stopwords, workers } => {
            if theta == 0 {
                return Err(config_err("--theta must be positive"));
            }
            let params = provider.config()?.map_or_else(SamplingParams::default, |c| c.expansion.sampling());
            let generator = provider.spec()?.text_generator().map_err(config_err)?;
            let pp = load_preprocessor(stopwords.as_deref())?;
            let expander = Expander::new(generator, provider.cache("expansion")?, pp)
                .with_theta(theta)
                .with_params(params);
            let queries: Vec<Query> = read_query_inputs(&queries)?.iter().map(|q| q.as_query()).collect();
            let outcomes = pool(workers)?.install(|| expander.expand_all(&queries, workers));
            let mut text = String::new();
            for o in &outcomes {
                if let Some(reason) = &o.degraded {
                    eprintln!("query {}: not expanded ({reason})", o.query.query_id);
                }
                text.push_str(&serde_json::to_string(&o.query).expect("query serializes"));
                text.push('\n');
            }
            std::fs::write(&out, text).map_err(data_err)?;
        }
        Command::DenseRank {
            index_run,
            queries,
            corpus,
            provider,
            dim,
            max_units,
            cutoff,
            batch_size,
            out,
            query_source,
            run_tag,
            workers,
        } => {
            if dim == 0 || max_units == 0 || cutoff == 0 || batch_size == 0 {
                return Err(config_err("--dim, --max-units, --cutoff and --batch-size must be positive"));
            }
            let embedder = provider.spec()?.embedder().map_err(config_err)?;
            let encoder = DenseEncoder::new(embedder, provider.cache("dense")?)
                .with_dim(dim)
                .with_max_units(max_units)
                .with_batch_size(batch_size);
            let corpus = load_corpus(&corpus)?;
            let texts = texts_for(&read_query_inputs(&queries)?, query_source)?;
            let input = Run::from_entries(&read_run(&index_run)?);
            use rayon::prelude::*;
            let ranked: Vec<Result<(String, Vec<String>), String>> = pool(workers)?.install(|| {
                texts
                    .par_iter()
                    .map(|(qid, text)| {
                        let cands = input.get(qid).map(|q| q.doc_ids.clone()).unwrap_or_default();
                        let outcome = dense_stage(&encoder, &corpus, qid, text, &cands, cutoff)
                            .map_err(|e| format!("query {qid}: {e}"))?;
                        Ok((qid.clone(), outcome.list.entries.into_iter().map(|e| e.doc_id).collect()))
                    })
                    .collect()
            });
            write_ranked(&collect_isolated(ranked)?, &run_tag, &out)?;
        }
        Command::Rerank {
            dense_run,
            queries,
            corpus,
            provider,
            k,
            max_units,
            out,
            diag,
            query_source,
            run_tag,
            workers,
        } => {
            if k == 0 || max_units == 0 {
                return Err(config_err("--k and --max-units must be positive"));
            }
            let scorer = provider.spec()?.logit_scorer().map_err(config_err)?;
            let reranker = PointwiseReranker::new(scorer, provider.cache("rerank")?).with_max_units(max_units);
            let corpus = load_corpus(&corpus)?;
            let texts = texts_for(&read_query_inputs(&queries)?, query_source)?;
            let entries = read_run(&dense_run)?;
            let mut scores: HashMap<(String, String), f64> = HashMap::new();
            for e in &entries {
                scores.insert((e.query_id.clone(), e.doc_id.clone()), e.score);
            }
            let input = Run::from_entries(&entries);
            use rayon::prelude::*;
            let merged: Vec<Result<_, String>> = pool(workers)?.install(|| {
                texts
                    .par_iter()
                    .filter_map(|(qid, text)| input.get(qid).map(|q| (qid, text, q)))
                    .map(|(qid, text, q)| {
                        let dense = DenseRankedList {
                            query_id: qid.clone(),
                            entries: q
                                .doc_ids
                                .iter()
                                .map(|d| DenseEntry { doc_id: d.clone(), similarity: scores[&(qid.clone(), d.clone())] })
                                .collect(),
                        };
                        rerank_stage(&reranker, &corpus, text, &dense, k).map_err(|e| format!("query {qid}: {e}"))
                    })
                    .collect()
            });
            let mut ranked = Vec::new();
            let mut lists = Vec::new();
            let mut failed = Vec::new();
            for m in merged {
                match m {
                    Ok(list) => {
                        ranked.push((list.query_id.clone(), list.entries.iter().map(|e| e.doc_id.clone()).collect()));
                        lists.push(list);
                    }
                    Err(e) => {
                        log::error!("{e}");
                        failed.push(e);
                    }
                }
            }
            if !failed.is_empty() && ranked.is_empty() {
                return Err(PipelineError::AllQueriesFailed { failed: failed.len() });
            }
            write_ranked(&ranked, &run_tag, &out)?;
            if let Some(path) = diag {
                let doc = json!({ "k": k, "cache": reranker.cache_stats(), "failed": failed, "queries": lists });
                std::fs::write(&path, serde_json::to_string_pretty(&doc).expect("serialize")).map_err(data_err)?;
            }
        }
        Command::Evaluate { run, qrels, k, n, gain, out, per_query } => {
            let run = Run::from_entries(&read_run(&run)?);
            let qrels = read_qrels(&qrels)?;
            let report = evaluate(&run, &qrels, k, n, gain)?;
            print!("{}", report.render_table(per_query));
            if let Some(path) = out {
                std::fs::write(&path, report.to_json()).map_err(data_err)?;
            }
        }
        Command::Pipeline { config, setting } => {
            let mut config = PipelineConfig::from_file(&config)?;
            let mut stem = config.run_tag.clone();
            if let Some(name) = setting {
                let setting: AblationSetting = name.parse()?;
                config = setting.apply(&config);
                config.validate()?;
                stem = format!("{}.{}", config.run_tag, setting.slug());
            }
            let out_dir = config.paths.output_dir.clone();
            let output = Pipeline::prepare(config)?.run()?;
            let (run_path, diag_path) = output.write(&out_dir, &stem)?;
            let d = &output.diagnostics;
            eprintln!(
                "{} of {} queries emitted, {} failed, {} expansions degraded",
                d.emitted_queries,
                d.queries,
                d.failed.len(),
                d.degraded_expansions.len()
            );
            eprintln!("run: {}\ndiagnostics: {}", run_path.display(), diag_path.display());
        }
        Command::Ablate { config, settings } => {
            let settings = parse_settings(&settings)?;
            let config = PipelineConfig::from_file(&config)?;
            let report = run_ablation(&config, &settings)?;
            let table = report.render_table();
            print!("{table}");
            let dir = &config.paths.output_dir;
            std::fs::create_dir_all(dir).map_err(data_err)?;
            std::fs::write(dir.join("ablation.json"), report.to_json()).map_err(data_err)?;
            std::fs::write(dir.join("ablation.txt"), table).map_err(data_err)?;
            if report.rows.iter().all(|r| r.error.is_some()) {
                return Err(PipelineError::AllQueriesFailed { failed: report.rows.len() });
            }
        }
        Command::GenFixture { out, docs, seed } => {
            if docs < 130 {
                return Err(config_err("--docs must be at least 130"));
            }
            synth::generate(docs, seed).write(&out).map_err(data_err)?;
            eprintln!("wrote {docs} documents to {}", out.display());
        }
    }
    Ok(())
}

/// Keeps successful queries; fails only when every query failed.
fn collect_isolated(results: Vec<Result<(String, Vec<String>), String>>) -> Result<Vec<(String, Vec<String>)>, PipelineError> {
    let total = results.len();
    let mut ok = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => log::error!("{e}"),
        }
    }
    if total > 0 && ok.is_empty() {
        return Err(PipelineError::AllQueriesFailed { failed: total });
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
