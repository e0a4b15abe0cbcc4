//! TREC run and qrels I/O, nDCG@k, Judged@k and R@n, and reporting.

mod metrics;
mod trec;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{has_relevant, judged_at_k, judged_count, ndcg_at_k, recall_at_n, GainMode};
pub use trec::{
    format_run, parse_qrels, parse_run, rank_score, read_qrels, read_run, write_run, QueryRun, Qrels, Run, RunEntry,
};

pub const DEFAULT_EVAL_K: usize = 20;
pub const DEFAULT_EVAL_N: usize = 1000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Validation { path: PathBuf, line: usize, message: String },
    #[error("invalid evaluation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub ndcg_at_k: f64,
    pub judged_at_k: f64,
    pub recall_at_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    pub n: usize,
    pub gain_mode: GainMode,
    /// Queries with at least one positive judgment.
    pub evaluated: usize,
    pub mean: QueryMetrics,
    pub per_query: BTreeMap<String, QueryMetrics>,
    /// Judged queries without any positive grade; excluded from means.
    pub no_relevant: Vec<String>,
    /// Run queries that have no judgments; excluded from means.
    pub unjudged: Vec<String>,
    /// Evaluated queries absent from the run; they score zero.
    pub missing_from_run: Vec<String>,
}

/// Scores every judged query with a positive grade.
pub fn evaluate(run: &Run, qrels: &Qrels, k: usize, n: usize, gain: GainMode) -> Result<MetricReport, EvalError> {
    if k == 0 || n == 0 {
        return Err(EvalError::InvalidParams(format!("k and n must be positive (k={k}, n={n})")));
    }
    let judged_ids = qrels.query_ids();
    let empty = QueryRun::default();
    let rows: Vec<(String, Option<QueryMetrics>, bool)> = judged_ids
        .par_iter()
        .map(|&qid| {
            let judgments = qrels.for_query(qid).expect("listed query has judgments");
            let found = run.get(qid);
            let ranked = &found.unwrap_or(&empty).doc_ids;
            let metrics = ndcg_at_k(ranked, judgments, k, gain).map(|ndcg| QueryMetrics {
                ndcg_at_k: ndcg,
                judged_at_k: judged_at_k(ranked, judgments, k),
                recall_at_n: recall_at_n(ranked, judgments, n).expect("query has a positive grade"),
            });
            (qid.to_string(), metrics, found.is_none())
        })
        .collect();

    let mut per_query = BTreeMap::new();
    let mut no_relevant = Vec::new();
    let mut missing_from_run = Vec::new();
    for (qid, metrics, missing) in rows {
        match metrics {
            Some(m) => {
                if missing {
                    missing_from_run.push(qid.clone());
                }
                per_query.insert(qid, m);
            }
            None => no_relevant.push(qid),
        }
    }
    let judged: HashSet<&str> = judged_ids.into_iter().collect();
    let unjudged =
        run.queries.iter().map(|q| q.query_id.clone()).filter(|q| !judged.contains(q.as_str())).collect();

    let count = per_query.len();
    let mean_of = |f: fn(&QueryMetrics) -> f64| {
        if count == 0 {
            0.0
        } else {
            per_query.values().map(f).sum::<f64>() / count as f64
        }
    };
    let mean = QueryMetrics {
        ndcg_at_k: mean_of(|m| m.ndcg_at_k),
        judged_at_k: mean_of(|m| m.judged_at_k),
        recall_at_n: mean_of(|m| m.recall_at_n),
    };
    Ok(MetricReport { k, n, gain_mode: gain, evaluated: count, mean, per_query, no_relevant, unjudged, missing_from_run })
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table; per-query rows only when asked.
    pub fn render_table(&self, per_query: bool) -> String {
        let ndcg = format!("nDCG@{}", self.k);
        let judged = format!("Judged@{}", self.k);
        let recall = format!("R@{}", self.n);
        let width = self.per_query.keys().map(String::len).chain(["query".len(), "mean".len()]).max().unwrap_or(5);
        let mut out = String::new();
        writeln!(out, "{:<width$}  {:>10}  {:>10}  {:>10}", "query", ndcg, judged, recall).unwrap();
        let mut row = |name: &str, m: &QueryMetrics| {
            writeln!(
                out,
                "{:<width$}  {:>10.4}  {:>10.4}  {:>10.4}",
                name, m.ndcg_at_k, m.judged_at_k, m.recall_at_n
            )
            .unwrap();
        };
        if per_query {
            for (q, m) in &self.per_query {
                row(q, m);
            }
        }
        row("mean", &self.mean);
        writeln!(out, "gain: {}  evaluated queries: {}", self.gain_mode, self.evaluated).unwrap();
        for (label, list) in [
            ("no positive judgments (excluded)", &self.no_relevant),
            ("not in qrels (excluded)", &self.unjudged),
            ("missing from run (scored 0)", &self.missing_from_run),
        ] {
            if !list.is_empty() {
                writeln!(out, "{label}: {}", list.join(" ")).unwrap();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn run(text: &str) -> Run {
        Run::from_entries(&parse_run(text, Path::new("mem")).unwrap())
    }

    #[test]
    fn report_flags_and_means() {
        let qrels = parse_qrels("a 0 x 1\na 0 y 0\nb 0 z 2\nc 0 w 0\n", Path::new("mem")).unwrap();
        let r = run("a Q0 x 1 9 t\na Q0 y 2 8 t\nd Q0 x 1 9 t\nc Q0 w 1 9 t\n");
        let rep = evaluate(&r, &qrels, 20, 1000, GainMode::Exponential).unwrap();
        assert_eq!(rep.evaluated, 2);
        assert_eq!(rep.per_query["a"].ndcg_at_k, 1.0);
        assert_eq!(rep.per_query["b"], QueryMetrics { ndcg_at_k: 0.0, judged_at_k: 0.0, recall_at_n: 0.0 });
        assert_eq!(rep.mean.ndcg_at_k, 0.5);
        assert_eq!(rep.no_relevant, ["c"]);
        assert_eq!(rep.unjudged, ["d"]);
        assert_eq!(rep.missing_from_run, ["b"]);
        let table = rep.render_table(true);
        assert!(table.contains("nDCG@20"));
        assert!(table.lines().any(|l| l.starts_with("mean")));
        let back: MetricReport = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn zero_depth_is_rejected() {
        assert!(evaluate(&Run::default(), &Qrels::default(), 0, 10, GainMode::Linear).is_err());
    }
}
