//! Per-query metrics over a ranked list of document ids and the query's
//! judgments.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainMode {
    /// g(r) = 2^r - 1
    #[default]
    Exponential,
    /// g(r) = r
    Linear,
}

impl GainMode {
    pub fn gain(self, grade: u32) -> f64 {
        match self {
            GainMode::Exponential => 2f64.powi(grade as i32) - 1.0,
            GainMode::Linear => f64::from(grade),
        }
    }
}

impl fmt::Display for GainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GainMode::Exponential => "exponential",
            GainMode::Linear => "linear",
        })
    }
}

impl FromStr for GainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exponential" | "exp" => Ok(GainMode::Exponential),
            "linear" | "lin" => Ok(GainMode::Linear),
            other => Err(format!("unknown gain mode {other:?} (expected exponential or linear)")),
        }
    }
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// Whether the judgments contain at least one positive grade.
pub fn has_relevant(judgments: &HashMap<String, u32>) -> bool {
    judgments.values().any(|&g| g > 0)
}

/// nDCG over the first `k` documents. `None` when no judgment is positive.
pub fn ndcg_at_k<S: AsRef<str>>(
    ranked: &[S],
    judgments: &HashMap<String, u32>,
    k: usize,
    gain: GainMode,
) -> Option<f64> {
    if !has_relevant(judgments) {
        return None;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain.gain(judgments.get(d.as_ref()).copied().unwrap_or(0)) / discount(i + 1))
        .sum();
    let mut grades: Vec<u32> = judgments.values().copied().collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = grades.iter().take(k).enumerate().map(|(i, &g)| gain.gain(g) / discount(i + 1)).sum();
    Some(dcg / idcg)
}

/// Fraction of the first `min(k, len)` documents that carry any judgment.
pub fn judged_at_k<S: AsRef<str>>(ranked: &[S], judgments: &HashMap<String, u32>, k: usize) -> f64 {
    let depth = k.min(ranked.len());
    if depth == 0 {
        return 0.0;
    }
    judged_count(ranked, judgments, k) as f64 / depth as f64
}

/// Number of judged documents among the first `k`.
pub fn judged_count<S: AsRef<str>>(ranked: &[S], judgments: &HashMap<String, u32>, k: usize) -> usize {
    ranked.iter().take(k).filter(|d| judgments.contains_key(d.as_ref())).count()
}

/// Share of positively graded documents found in the first `n`. `None` when
/// no judgment is positive.
pub fn recall_at_n<S: AsRef<str>>(ranked: &[S], judgments: &HashMap<String, u32>, n: usize) -> Option<f64> {
    let relevant = judgments.values().filter(|&&g| g > 0).count();
    if relevant == 0 {
        return None;
    }
    let found = ranked.iter().take(n).filter(|d| judgments.get(d.as_ref()).is_some_and(|&g| g > 0)).count();
    Some(found as f64 / relevant as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(pairs: &[(&str, u32)]) -> HashMap<String, u32> {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn hand_example() {
        let q = j(&[("d1", 2), ("d2", 1)]);
        let v = ndcg_at_k(&["d2", "d1"], &q, 2, GainMode::Exponential).unwrap();
        let dcg = 1.0 + 3.0 / 3f64.log2();
        let idcg = 3.0 + 1.0 / 3f64.log2();
        assert!((v - dcg / idcg).abs() < 1e-15);
        assert!((v - 0.7967).abs() < 1e-4);
    }

    #[test]
    fn trivial_cases() {
        let q = j(&[("d1", 1)]);
        assert_eq!(ndcg_at_k(&["d1"], &q, 20, GainMode::Exponential), Some(1.0));
        assert_eq!(ndcg_at_k(&["x", "y"], &q, 20, GainMode::Linear), Some(0.0));
        assert_eq!(ndcg_at_k(&["d1"], &j(&[("d1", 0)]), 20, GainMode::Linear), None);
        assert_eq!(judged_at_k(&["d1"], &q, 20), 1.0);
        assert_eq!(judged_at_k::<&str>(&[], &q, 20), 0.0);
        let ranked: Vec<String> = (0..20).map(|i| format!("d{i}")).collect();
        let all: HashMap<String, u32> = (0..19).map(|i| (format!("d{i}"), 0)).collect();
        assert_eq!(judged_at_k(&ranked, &all, 20), 0.95);
        let three = j(&[("a", 1), ("b", 2), ("c", 1), ("z", 0)]);
        assert_eq!(recall_at_n(&["a", "z", "c"], &three, 1000), Some(2.0 / 3.0));
        assert_eq!(recall_at_n(&["a", "b", "c"], &three, 1000), Some(1.0));
    }

    #[test]
    fn gain_mode_names() {
        assert_eq!("exponential".parse::<GainMode>().unwrap(), GainMode::Exponential);
        assert_eq!("linear".parse::<GainMode>().unwrap(), GainMode::Linear);
        assert!("log".parse::<GainMode>().is_err());
        assert_eq!(GainMode::Linear.to_string(), "linear");
    }
}
