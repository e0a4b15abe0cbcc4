//! Multi-stage cross-lingual news retrieval.
//!
//! Queries are English; documents are matched through their English
//! translation while results cite the original document IDs. The stages are
//! generative query expansion, BM25 candidate generation, dense cosine
//! ranking and pointwise yes/no reranking of the head of the list, followed
//! by TREC-style evaluation.

pub mod corpus;
pub mod sparse;
pub mod textproc;
pub mod cache;
pub mod dense;
pub mod evaluation;
pub mod expansion;
pub mod provider;
pub mod rerank;
pub mod pipeline;
pub mod synth;
