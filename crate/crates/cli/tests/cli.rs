use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic").canonicalize().unwrap()
}

fn xlr(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_xlr")).args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("xlr {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn ok(args: &[&str]) -> Output {
    let out = xlr(args);
    assert!(out.status.success(), "xlr {args:?} failed");
    out
}

/// The fixture config with every path absolute and outputs under `dir`.
fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let f = fixtures();
    let text = format!(
        r#"run_tag = "fixture"
workers = 4
{extra}
[paths]
corpus = "{corpus}"
queries = "{queries}"
qrels = "{qrels}"
output_dir = "{out}"

[expansion]
enabled = true
provider = "fixture"

[sparse]
query_source = "expanded"

[dense]
enabled = true
provider = "fixture"
query_source = "expanded"

[rerank]
enabled = true
provider = "fixture"
query_source = "base"

[providers.fixture]
kind = "stub"
fixtures = "{pseudo}"
lexicon = "{lexicon}"
"#,
        corpus = f.join("corpus.jsonl").display(),
        queries = f.join("queries.jsonl").display(),
        qrels = f.join("qrels.txt").display(),
        out = dir.join("out").display(),
        pseudo = f.join("pseudo_docs.jsonl").display(),
        lexicon = f.join("lexicon.tsv").display(),
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stage_commands_compose_to_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = write_config(d, "");
    let f = fixtures();
    let (corpus, queries) = (f.join("corpus.jsonl"), f.join("queries.jsonl"));
    let (index, expanded) = (d.join("idx.bin"), d.join("expanded.jsonl"));
    let (sparse, dense, reranked) = (d.join("sparse.run"), d.join("dense.run"), d.join("rerank.run"));
    let provider = ["--provider", "fixture", "--config", s(&config), "--no-cache"];

    ok(&["index", "--corpus", s(&corpus), "--out", s(&index)]);
    let mut args = vec!["expand", "--queries", s(&queries), "--out", s(&expanded)];
    args.extend(provider);
    ok(&args);
    let common = ["--query-source", "expanded", "--run-tag", "fixture"];
    let mut args = vec!["search", "--index", s(&index), "--queries", s(&expanded), "--out", s(&sparse)];
    args.extend(common);
    ok(&args);
    let mut args = vec!["dense-rank", "--index-run", s(&sparse), "--queries", s(&expanded), "--corpus", s(&corpus)];
    args.extend(["--out", s(&dense)]);
    args.extend(provider);
    args.extend(common);
    ok(&args);
    let mut args = vec!["rerank", "--dense-run", s(&dense), "--queries", s(&expanded), "--corpus", s(&corpus)];
    args.extend(["--out", s(&reranked), "--query-source", "base", "--run-tag", "fixture"]);
    args.extend(provider);
    ok(&args);

    ok(&["pipeline", "--config", s(&config)]);
    let staged = std::fs::read(&reranked).unwrap();
    let whole = std::fs::read(d.join("out/fixture.run")).unwrap();
    assert!(!whole.is_empty());
    assert!(staged == whole, "stage-by-stage run differs from the pipeline run");
    assert!(d.join("out/fixture.diagnostics.json").exists());
}

#[test]
fn sparse_only_pipeline_matches_search() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = write_config(d, "");
    let f = fixtures();
    let (index, run) = (d.join("idx.bin"), d.join("bm25.run"));
    ok(&["index", "--corpus", f.join("corpus.jsonl").to_str().unwrap(), "--out", s(&index)]);
    ok(&[
        "search", "--index", s(&index), "--queries", f.join("queries.jsonl").to_str().unwrap(), "--out", s(&run),
        "--run-tag", "fixture", "--top-n", "1000",
    ]);
    ok(&["pipeline", "--config", s(&config), "--setting", "BM25"]);
    let direct = std::fs::read(&run).unwrap();
    let piped = std::fs::read(d.join("out/fixture.bm25.run")).unwrap();
    assert!(direct == piped, "sparse-only pipeline differs from search");
}

#[test]
fn evaluate_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = write_config(d, "");
    ok(&["pipeline", "--config", s(&config)]);
    let json = d.join("metrics.json");
    let out = ok(&[
        "evaluate", "--run", d.join("out/fixture.run").to_str().unwrap(), "--qrels",
        fixtures().join("qrels.txt").to_str().unwrap(), "--out", s(&json), "--per-query",
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("nDCG@20"), "{table}");
    assert!(table.contains("s01"), "{table}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["evaluated"], 10);
    assert!(report["mean"]["ndcg_at_k"].as_f64().unwrap() > 0.9);
}

#[test]
fn ablate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = ok(&["ablate", "--config", s(&config)]);
    let table = String::from_utf8(out.stdout).unwrap();
    for name in ["BM25", "BM25+GRF", "Jina+BM25", "JinaGRF+BM25", "JinaGRF+BM25GRF"] {
        assert!(table.lines().any(|l| l.starts_with(&format!("{name} "))), "{name} missing:\n{table}");
    }
    assert!(dir.path().join("out/ablation.json").exists());
    assert!(dir.path().join("out/ablation/bm25_grf.run").exists());
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = write_config(d, "");
    assert_eq!(xlr(&["pipeline", "--config", s(&config), "--setting", "ColBERT"]).status.code(), Some(1));

    let bad_dir = d.join("bad");
    std::fs::create_dir(&bad_dir).unwrap();
    let bad = write_config(&bad_dir, "output_depth = 0\n");
    assert_eq!(xlr(&["pipeline", "--config", s(&bad)]).status.code(), Some(1));

    assert_eq!(xlr(&["pipeline", "--config", s(&d.join("absent.toml"))]).status.code(), Some(1));

    let missing = d.join("missing.toml");
    std::fs::write(&missing, std::fs::read_to_string(&config).unwrap().replace("corpus.jsonl", "nowhere.jsonl"))
        .unwrap();
    assert_eq!(xlr(&["pipeline", "--config", s(&missing)]).status.code(), Some(2));

    let out = xlr(&["evaluate", "--run", s(&d.join("none.run")), "--qrels", s(&d.join("none.qrels"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_fixture_reproduces_checked_in_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-fixture", "--out", s(dir.path())]);
    for name in ["corpus.jsonl", "queries.jsonl", "qrels.txt", "pseudo_docs.jsonl", "lexicon.tsv"] {
        let a = std::fs::read(dir.path().join(name)).unwrap();
        let b = std::fs::read(fixtures().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}
