//! The five-setting expansion/dense ablation.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::{Pipeline, PipelineConfig, PipelineError, QuerySource, StagePlan};
use crate::evaluation::{evaluate, read_qrels, GainMode, MetricReport};

/// One row of the ablation. Rerank is off in every setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationSetting {
    /// BM25 on the base query.
    Bm25,
    /// BM25 on the expanded query.
    Bm25Grf,
    /// BM25 base candidates, dense ranking with the base query.
    JinaBm25,
    /// BM25 base candidates, dense ranking with the expanded query.
    JinaGrfBm25,
    /// BM25 expanded candidates, dense ranking with the expanded query.
    JinaGrfBm25Grf,
}

impl AblationSetting {
    pub const ALL: [AblationSetting; 5] = [
        AblationSetting::Bm25,
        AblationSetting::Bm25Grf,
        AblationSetting::JinaBm25,
        AblationSetting::JinaGrfBm25,
        AblationSetting::JinaGrfBm25Grf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationSetting::Bm25 => "BM25",
            AblationSetting::Bm25Grf => "BM25+GRF",
            AblationSetting::JinaBm25 => "Jina+BM25",
            AblationSetting::JinaGrfBm25 => "JinaGRF+BM25",
            AblationSetting::JinaGrfBm25Grf => "JinaGRF+BM25GRF",
        }
    }

    /// File-name friendly form of the name.
    pub fn slug(self) -> String {
        self.name().to_ascii_lowercase().replace('+', "_")
    }

    pub fn needs_expansion(self) -> bool {
        !matches!(self, AblationSetting::Bm25 | AblationSetting::JinaBm25)
    }

    /// `base` with this setting's stage toggles and query sources; expansion
    /// is switched on when the setting reads the expanded query.
    pub fn apply(self, base: &PipelineConfig) -> PipelineConfig {
        use QuerySource::{Base, Expanded};
        let (dense, sparse_source, dense_source) = match self {
            AblationSetting::Bm25 => (false, Base, base.dense.query_source),
            AblationSetting::Bm25Grf => (false, Expanded, base.dense.query_source),
            AblationSetting::JinaBm25 => (true, Base, Base),
            AblationSetting::JinaGrfBm25 => (true, Base, Expanded),
            AblationSetting::JinaGrfBm25Grf => (true, Expanded, Expanded),
        };
        let mut c = base.clone();
        c.rerank.enabled = false;
        c.expansion.enabled |= self.needs_expansion();
        c.dense.enabled = dense;
        c.sparse.query_source = sparse_source;
        c.dense.query_source = dense_source;
        c
    }
}

impl fmt::Display for AblationSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationSetting {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(s.trim())).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|a| a.name()).collect();
            PipelineError::Config(format!("unknown setting {s:?}; valid settings: {}", names.join(", ")))
        })
    }
}

/// `all` or a comma-separated list of setting names.
pub fn parse_settings(spec: &str) -> Result<Vec<AblationSetting>, PipelineError> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(AblationSetting::ALL.to_vec());
    }
    let settings = spec.split(',').map(str::parse).collect::<Result<Vec<_>, _>>()?;
    if settings.is_empty() {
        return Err(PipelineError::Config("no settings given".into()));
    }
    Ok(settings)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub setting: String,
    pub recall_at_n: Option<f64>,
    pub ndcg_exponential: Option<f64>,
    pub ndcg_linear: Option<f64>,
    pub judged_at_k: Option<f64>,
    pub failed_queries: usize,
    /// Config keys that differ from the BM25 setting.
    pub config_diff: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub reports: Option<(MetricReport, MetricReport)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub k: usize,
    pub n: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_table(&self) -> String {
        let headers = [
            "Setting".to_string(),
            format!("R@{}", self.n),
            format!("nDCG@{} exp", self.k),
            format!("nDCG@{} lin", self.k),
            format!("Judged@{}", self.k),
        ];
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let rows: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [r.setting.clone(), cell(r.recall_at_n), cell(r.ndcg_exponential), cell(r.ndcg_linear), cell(r.judged_at_k)]
            })
            .collect();
        let mut widths = headers.clone().map(|h| h.len());
        for row in &rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String; 5]| {
            let mut parts = vec![format!("{:<w$}", cells[0], w = widths[0])];
            parts.extend(cells[1..].iter().zip(&widths[1..]).map(|(c, w)| format!("{c:>w$}")));
            writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
        };
        line(&mut out, &headers);
        for row in &rows {
            line(&mut out, row);
        }
        for r in &self.rows {
            if let Some(e) = &r.error {
                writeln!(out, "{}: {e}", r.setting).unwrap();
            }
        }
        out
    }
}

/// Runs each setting over shared inputs and evaluates it against the
/// configured qrels. Runs are written to `<output_dir>/ablation/`.
pub fn run_ablation(config: &PipelineConfig, settings: &[AblationSetting]) -> Result<AblationReport, PipelineError> {
    let qrels_path = config
        .paths
        .qrels
        .as_ref()
        .ok_or_else(|| PipelineError::Config("ablation needs paths.qrels".into()))?;
    let qrels = read_qrels(qrels_path)?;
    let mut shared = config.clone();
    shared.rerank.enabled = false;
    if settings.iter().any(|s| s.needs_expansion()) {
        shared.expansion.enabled = true;
    }
    let baseline = AblationSetting::Bm25.apply(&shared);
    let pipeline = Pipeline::prepare(shared.clone())?;
    let (k, n) = (config.evaluation.k, config.evaluation.n);
    let out_dir = config.paths.output_dir.join("ablation");

    let mut rows = Vec::with_capacity(settings.len());
    for &setting in settings {
        let variant = setting.apply(&shared);
        let mut row = AblationRow {
            setting: setting.name().to_string(),
            recall_at_n: None,
            ndcg_exponential: None,
            ndcg_linear: None,
            judged_at_k: None,
            failed_queries: 0,
            config_diff: baseline.diff(&variant),
            error: None,
            reports: None,
        };
        let result = variant.validate().and_then(|_| pipeline.run_plan(&StagePlan::from_config(&variant)));
        match result {
            Ok(output) => {
                row.failed_queries = output.diagnostics.failed.len();
                let stem = setting.slug();
                if let Err(e) = output.write(&out_dir, &stem) {
                    log::warn!("{setting}: {e}");
                }
                let run = output.run();
                let exp = evaluate(&run, &qrels, k, n, GainMode::Exponential)?;
                let lin = evaluate(&run, &qrels, k, n, GainMode::Linear)?;
                row.recall_at_n = Some(exp.mean.recall_at_n);
                row.ndcg_exponential = Some(exp.mean.ndcg_at_k);
                row.ndcg_linear = Some(lin.mean.ndcg_at_k);
                row.judged_at_k = Some(exp.mean.judged_at_k);
                row.reports = Some((exp, lin));
            }
            Err(e) => {
                log::error!("setting {setting} failed: {e}");
                row.error = Some(e.to_string());
            }
        }
        rows.push(row);
    }
    Ok(AblationReport { k, n, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn names_round_trip() {
        for s in AblationSetting::ALL {
            assert_eq!(s.name().parse::<AblationSetting>().unwrap(), s);
        }
        assert_eq!(parse_settings("all").unwrap().len(), 5);
        assert_eq!(parse_settings("BM25,BM25+GRF").unwrap(), [AblationSetting::Bm25, AblationSetting::Bm25Grf]);
        let err = parse_settings("BM25,ColBERT").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("JinaGRF+BM25GRF"));
        assert_eq!(AblationSetting::JinaGrfBm25Grf.slug(), "jinagrf_bm25grf");
    }

    #[test]
    fn bm25_and_grf_differ_only_in_sparse_source() {
        let mut base = PipelineConfig::new(PathBuf::from("c"), PathBuf::from("q"), PathBuf::from("o"));
        base.expansion.enabled = true;
        let a = AblationSetting::Bm25.apply(&base);
        let b = AblationSetting::Bm25Grf.apply(&base);
        assert_eq!(a.diff(&b), ["sparse.query_source: \"base\" -> \"expanded\""]);
        let d = AblationSetting::JinaGrfBm25.apply(&base);
        assert!(d.dense.enabled && !d.rerank.enabled);
        assert_eq!(d.dense.query_source, QuerySource::Expanded);
        assert_eq!(d.sparse.query_source, QuerySource::Base);
    }
}
