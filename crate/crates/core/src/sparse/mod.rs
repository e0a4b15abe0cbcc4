//! Inverted index over the translation view and BM25 candidate generation.
//!
//! Scoring uses the Robertson formulation with `k1 = 1.2`, `b = 0.75` and the
//! `+1`-smoothed IDF `ln((N - df + 0.5) / (df + 0.5) + 1)`, which is always
//! positive, so every document sharing a term with the query scores above
//! zero.

mod storage;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{full_translation_view, Corpus};
use crate::textproc::{Preprocessor, TokenStream};

pub use storage::{INDEX_FORMAT_VERSION, INDEX_MAGIC};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
pub const DEFAULT_TOP_N: usize = 2000;

/// Documents per build chunk. Fixed so that chunking never depends on the
/// worker count.
const BUILD_CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("cannot start index workers: {0}")]
    Workers(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: HashMap<String, Vec<Posting>>,
    doc_len: Vec<u32>,
    doc_ids: Vec<String>,
    total_len: u64,
    preprocessor_tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub doc_id: String,
    pub position: usize,
    pub score: f64,
}

/// Builds the index on a single thread.
pub fn build_index(corpus: &Corpus, pp: &Preprocessor) -> Result<InvertedIndex, IndexError> {
    build_index_with_workers(corpus, pp, 1)
}

/// Builds the index with `workers` threads. The result does not depend on
/// the worker count.
pub fn build_index_with_workers(
    corpus: &Corpus,
    pp: &Preprocessor,
    workers: usize,
) -> Result<InvertedIndex, IndexError> {
    if corpus.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| IndexError::Workers(e.to_string()))?;
    let docs = corpus.documents();
    let chunks: Vec<ChunkIndex> = pool.install(|| {
        docs.par_chunks(BUILD_CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut local = ChunkIndex::default();
                for (i, doc) in chunk.iter().enumerate() {
                    let pos = (ci * BUILD_CHUNK + i) as u32;
                    local.add(pos, &pp.preprocess(&full_translation_view(doc)));
                }
                local
            })
            .collect()
    });

    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut doc_len = Vec::with_capacity(docs.len());
    for chunk in chunks {
        doc_len.extend(chunk.doc_len);
        // chunks arrive in ordinal order, so appending keeps lists sorted
        for (term, list) in chunk.terms {
            postings.entry(term).or_default().extend(list);
        }
    }
    let total_len = doc_len.iter().map(|&l| u64::from(l)).sum();
    Ok(InvertedIndex {
        postings,
        doc_len,
        doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
        total_len,
        preprocessor_tag: pp.tag().to_string(),
    })
}

#[derive(Default)]
struct ChunkIndex {
    terms: Vec<(String, Vec<Posting>)>,
    slot: HashMap<String, usize>,
    doc_len: Vec<u32>,
}

impl ChunkIndex {
    fn add(&mut self, pos: u32, tokens: &TokenStream) {
        let mut counts: Vec<(&str, u32)> = Vec::new();
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for t in tokens.iter() {
            match seen.get(t) {
                Some(&i) => counts[i].1 += 1,
                None => {
                    seen.insert(t, counts.len());
                    counts.push((t, 1));
                }
            }
        }
        for (term, tf) in counts {
            let idx = match self.slot.get(term) {
                Some(&i) => i,
                None => {
                    self.slot.insert(term.to_string(), self.terms.len());
                    self.terms.push((term.to_string(), Vec::new()));
                    self.terms.len() - 1
                }
            };
            self.terms[idx].1.push(Posting { doc: pos, tf });
        }
        self.doc_len.push(tokens.len() as u32);
    }
}

impl InvertedIndex {
    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.total_len as f64 / self.doc_ids.len() as f64
    }

    pub fn doc_len(&self, position: usize) -> u32 {
        self.doc_len[position]
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_len
    }

    pub fn doc_id(&self, position: usize) -> &str {
        &self.doc_ids[position]
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.postings.get(term).map(Vec::as_slice)
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Stopword-list version the index was built with.
    pub fn preprocessor_tag(&self) -> &str {
        &self.preprocessor_tag
    }

    /// Terms in byte order.
    pub fn sorted_terms(&self) -> Vec<&str> {
        let mut terms: Vec<&str> = self.postings.keys().map(String::as_str).collect();
        terms.sort_unstable();
        terms
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.num_docs() as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, dl: u32, avgdl: f64) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - BM25_B + BM25_B * f64::from(dl) / avgdl;
        idf * (tf * (BM25_K1 + 1.0)) / (tf + BM25_K1 * norm)
    }

    /// BM25 score of one document. Repeated query terms count once per
    /// occurrence; unknown terms contribute nothing.
    ///
    /// # Panics
    /// If `position` is not a document ordinal of this index.
    pub fn bm25_score(&self, query_terms: &TokenStream, position: usize) -> f64 {
        assert!(position < self.num_docs(), "doc position {position} out of range");
        let avgdl = self.avgdl();
        let dl = self.doc_len[position];
        let mut score = 0.0;
        for term in query_terms.iter() {
            let Some(list) = self.postings.get(term) else { continue };
            if let Ok(i) = list.binary_search_by_key(&(position as u32), |p| p.doc) {
                score += self.term_weight(self.idf(list.len()), list[i].tf, dl, avgdl);
            }
        }
        score
    }

    /// Top `top_n` documents by BM25, score descending then doc id ascending.
    /// Only documents with a positive score are returned.
    pub fn search(&self, query_terms: &TokenStream, top_n: usize) -> Vec<ScoredCandidate> {
        if top_n == 0 || query_terms.is_empty() {
            return Vec::new();
        }
        let avgdl = self.avgdl();
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in query_terms.iter() {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(list.len());
            for p in list {
                let w = self.term_weight(idf, p.tf, self.doc_len[p.doc as usize], avgdl);
                *acc.entry(p.doc).or_insert(0.0) += w;
            }
        }
        let mut hits: Vec<(u32, f64)> = acc.into_iter().filter(|&(_, s)| s > 0.0).collect();
        let cmp = |a: &(u32, f64), b: &(u32, f64)| -> Ordering {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0 as usize].cmp(&self.doc_ids[b.0 as usize]))
        };
        if hits.len() > top_n {
            hits.select_nth_unstable_by(top_n - 1, cmp);
            hits.truncate(top_n);
        }
        hits.sort_unstable_by(cmp);
        hits.into_iter()
            .map(|(doc, score)| ScoredCandidate {
                doc_id: self.doc_ids[doc as usize].clone(),
                position: doc as usize,
                score,
            })
            .collect()
    }
}

/// Free-function form of [`InvertedIndex::search`].
pub fn sparse_search(index: &InvertedIndex, query_terms: &TokenStream, top_n: usize) -> Vec<ScoredCandidate> {
    index.search(query_terms, top_n)
}

/// Free-function form of [`InvertedIndex::bm25_score`].
pub fn bm25_score(index: &InvertedIndex, query_terms: &TokenStream, position: usize) -> f64 {
    index.bm25_score(query_terms, position)
}
