//! TREC run and qrels files.
//!
//! Run lines are `qid Q0 docid rank score tag`; qrels lines are
//! `qid 0 docid grade`. Both are whitespace separated.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::EvalError;

/// Run-file score for a 1-based rank. Strictly decreasing, so file order,
/// rank order and score order always agree.
pub fn rank_score(rank: usize) -> f64 {
    10000.0 - rank as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub run_tag: String,
}

/// Ranked results of one query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryRun {
    pub query_id: String,
    /// Document ids in rank order.
    pub doc_ids: Vec<String>,
}

/// Entries grouped by query, queries in order of first appearance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Run {
    pub queries: Vec<QueryRun>,
}

impl Run {
    pub fn from_entries(entries: &[RunEntry]) -> Self {
        let mut slot: HashMap<&str, usize> = HashMap::new();
        let mut queries: Vec<QueryRun> = Vec::new();
        for e in entries {
            let i = *slot.entry(e.query_id.as_str()).or_insert_with(|| {
                queries.push(QueryRun { query_id: e.query_id.clone(), doc_ids: Vec::new() });
                queries.len() - 1
            });
            queries[i].doc_ids.push(e.doc_id.clone());
        }
        for q in &mut queries {
            // entries of a validated run already come in rank order per query
            debug_assert!(!q.doc_ids.is_empty());
        }
        Self { queries }
    }

    pub fn get(&self, query_id: &str) -> Option<&QueryRun> {
        self.queries.iter().find(|q| q.query_id == query_id)
    }

    /// Entries with ranks from 1 and rank-derived scores.
    pub fn to_entries(&self, run_tag: &str) -> Vec<RunEntry> {
        self.queries
            .iter()
            .flat_map(|q| {
                q.doc_ids.iter().enumerate().map(move |(i, d)| RunEntry {
                    query_id: q.query_id.clone(),
                    doc_id: d.clone(),
                    rank: i + 1,
                    score: rank_score(i + 1),
                    run_tag: run_tag.to_string(),
                })
            })
            .collect()
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn validation_error(path: &Path, line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Validation { path: path.to_path_buf(), line, message: message.into() }
}

fn read_text(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

/// Parses and validates a run file.
pub fn read_run(path: &Path) -> Result<Vec<RunEntry>, EvalError> {
    parse_run(&read_text(path)?, path)
}

/// Parses run text; `path` is only used in error messages.
pub fn parse_run(text: &str, path: &Path) -> Result<Vec<RunEntry>, EvalError> {
    let mut entries = Vec::new();
    let mut last: HashMap<String, (usize, f64)> = HashMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(parse_error(path, lineno, format!("expected 6 fields, found {}", fields.len())));
        }
        let rank: usize = fields[3]
            .parse()
            .map_err(|_| parse_error(path, lineno, format!("rank {:?} is not a positive integer", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| parse_error(path, lineno, format!("score {:?} is not a number", fields[4])))?;
        if !score.is_finite() {
            return Err(parse_error(path, lineno, "score is not finite"));
        }
        let (qid, docid) = (fields[0].to_string(), fields[2].to_string());
        if !seen.insert((qid.clone(), docid.clone())) {
            return Err(validation_error(path, lineno, format!("document {docid} repeated for query {qid}")));
        }
        let expected = last.get(&qid).map_or(1, |(r, _)| r + 1);
        if rank != expected {
            return Err(validation_error(
                path,
                lineno,
                format!("query {qid}: rank {rank} where {expected} was expected"),
            ));
        }
        if let Some(&(_, prev)) = last.get(&qid) {
            if score > prev {
                return Err(validation_error(path, lineno, format!("query {qid}: score increases at rank {rank}")));
            }
        }
        last.insert(qid.clone(), (rank, score));
        entries.push(RunEntry { query_id: qid, doc_id: docid, rank, score, run_tag: fields[5].to_string() });
    }
    Ok(entries)
}

/// Serializes entries exactly as given, one line each.
pub fn format_run(entries: &[RunEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        writeln!(out, "{} Q0 {} {} {} {}", e.query_id, e.doc_id, e.rank, e.score, e.run_tag).expect("string write");
    }
    out
}

/// Validates and writes a run file.
pub fn write_run(entries: &[RunEntry], path: &Path) -> Result<(), EvalError> {
    let text = format_run(entries);
    parse_run(&text, path)?;
    if let Some(first) = entries.first() {
        if let Some(other) = entries.iter().find(|e| e.run_tag != first.run_tag) {
            return Err(validation_error(path, 0, format!("mixed run tags {} and {}", first.run_tag, other.run_tag)));
        }
    }
    fs::write(path, text).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

/// Graded judgments keyed by query and document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Qrels {
    judgments: HashMap<String, HashMap<String, u32>>,
    /// File order, for stable re-serialization.
    order: Vec<(String, String)>,
}

impl Qrels {
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> bool {
        let per_query = self.judgments.entry(query_id.to_string()).or_default();
        if per_query.contains_key(doc_id) {
            return false;
        }
        per_query.insert(doc_id.to_string(), grade);
        self.order.push((query_id.to_string(), doc_id.to_string()));
        true
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(doc_id).copied()
    }

    pub fn for_query(&self, query_id: &str) -> Option<&HashMap<String, u32>> {
        self.judgments.get(query_id)
    }

    /// Query ids in order of first appearance.
    pub fn query_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.order.iter().map(|(q, _)| q.as_str()).filter(|q| seen.insert(*q)).collect()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn format(&self) -> String {
        let mut out = String::new();
        for (q, d) in &self.order {
            writeln!(out, "{q} 0 {d} {}", self.judgments[q][d]).expect("string write");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, self.format()).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
    }
}

pub fn read_qrels(path: &Path) -> Result<Qrels, EvalError> {
    parse_qrels(&read_text(path)?, path)
}

pub fn parse_qrels(text: &str, path: &Path) -> Result<Qrels, EvalError> {
    let mut qrels = Qrels::default();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_error(path, lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        let grade: u32 = fields[3]
            .parse()
            .map_err(|_| parse_error(path, lineno, format!("grade {:?} is not a non-negative integer", fields[3])))?;
        if !qrels.insert(fields[0], fields[2], grade) {
            return Err(validation_error(
                path,
                lineno,
                format!("judgment for ({}, {}) repeated", fields[0], fields[2]),
            ));
        }
    }
    Ok(qrels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn parses_a_line() {
        let entries = parse_run("q1 Q0 d42 1 9999 ours\n", p()).unwrap();
        assert_eq!(
            entries,
            [RunEntry { query_id: "q1".into(), doc_id: "d42".into(), rank: 1, score: 9999.0, run_tag: "ours".into() }]
        );
        assert_eq!(format_run(&entries), "q1 Q0 d42 1 9999 ours\n");
    }

    #[test]
    fn five_fields_is_a_parse_error_on_that_line() {
        let err = parse_run("q1 Q0 d1 1 9999 t\nq1 Q0 d2 2 9998\n", p()).unwrap_err();
        assert!(matches!(err, EvalError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicates_and_gaps_fail_validation() {
        let err = parse_run("q1 Q0 d1 1 9 t\nq1 Q0 d1 2 8 t\n", p()).unwrap_err();
        assert!(matches!(err, EvalError::Validation { line: 2, .. }), "{err}");
        let err = parse_run("q1 Q0 d1 1 9 t\nq1 Q0 d2 3 8 t\n", p()).unwrap_err();
        assert!(matches!(err, EvalError::Validation { line: 2, .. }), "{err}");
        let err = parse_run("q1 Q0 d1 1 9 t\nq1 Q0 d2 2 10 t\n", p()).unwrap_err();
        assert!(matches!(err, EvalError::Validation { line: 2, .. }), "{err}");
        // the same document under different queries is fine, as are interleaved queries
        assert!(parse_run("q1 Q0 d1 1 9 t\nq2 Q0 d1 1 9 t\nq1 Q0 d2 2 8 t\n", p()).is_ok());
    }

    #[test]
    fn qrels_parse_and_errors() {
        let q = parse_qrels("q1 0 d1 2\nq1 0 d2 0\nq2 0 d1 1\n", p()).unwrap();
        assert_eq!(q.grade("q1", "d1"), Some(2));
        assert_eq!(q.grade("q1", "d2"), Some(0));
        assert_eq!(q.grade("q2", "d2"), None);
        assert_eq!(q.query_ids(), ["q1", "q2"]);
        assert_eq!(q.format(), "q1 0 d1 2\nq1 0 d2 0\nq2 0 d1 1\n");
        assert!(matches!(parse_qrels("q1 0 d1\n", p()), Err(EvalError::Parse { line: 1, .. })));
        assert!(matches!(parse_qrels("q1 0 d1 -1\n", p()), Err(EvalError::Parse { line: 1, .. })));
        assert!(matches!(parse_qrels("q1 0 d1 1\nq1 0 d1 2\n", p()), Err(EvalError::Validation { line: 2, .. })));
    }

    #[test]
    fn grouped_run_round_trip() {
        let entries = parse_run("a Q0 x 1 9999 t\nb Q0 y 1 9999 t\na Q0 z 2 9998 t\n", p()).unwrap();
        let run = Run::from_entries(&entries);
        assert_eq!(run.queries.len(), 2);
        assert_eq!(run.get("a").unwrap().doc_ids, ["x", "z"]);
        let back = run.to_entries("t");
        assert_eq!(format_run(&back), "a Q0 x 1 9999 t\na Q0 z 2 9998 t\nb Q0 y 1 9999 t\n");
    }
}
