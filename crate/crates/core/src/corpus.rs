//! Document collection ingestion and the English translation view.
//!
//! Every document carries its original-language fields and the English
//! translation used for all matching. Document order is ingestion order and
//! anchors every downstream tie-break.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("duplicate doc_id {0:?}")]
    DuplicateId(String),
    #[error("document {0:?} has neither trans_title nor trans_body")]
    EmptyTranslation(String),
    #[error("empty doc_id at line {0}")]
    EmptyId(usize),
    #[error("duplicate query_id {0:?}")]
    DuplicateQuery(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    #[default]
    JsonLines,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub lang: String,
    pub title: String,
    pub body: String,
    pub trans_title: String,
    pub trans_body: String,
}

impl Document {
    fn normalized(self) -> Self {
        let nfc = |s: String| s.nfc().collect::<String>();
        Self {
            doc_id: nfc(self.doc_id),
            lang: nfc(self.lang),
            title: nfc(self.title),
            body: nfc(self.body),
            trans_title: nfc(self.trans_title),
            trans_body: nfc(self.trans_body),
        }
    }
}

/// Immutable, ordered document collection.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    id_index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, enforcing id uniqueness and non-empty translations.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut id_index = HashMap::with_capacity(documents.len());
        for (pos, doc) in documents.iter().enumerate() {
            if doc.doc_id.is_empty() {
                return Err(CorpusError::EmptyId(pos + 1));
            }
            if doc.trans_title.is_empty() && doc.trans_body.is_empty() {
                return Err(CorpusError::EmptyTranslation(doc.doc_id.clone()));
            }
            if id_index.insert(doc.doc_id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId(doc.doc_id.clone()));
            }
        }
        Ok(Self { documents, id_index })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn get(&self, position: usize) -> Option<&Document> {
        self.documents.get(position)
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.id_index.get(doc_id).copied()
    }

    pub fn by_id(&self, doc_id: &str) -> Option<&Document> {
        self.position(doc_id).map(|p| &self.documents[p])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter()
    }

    /// Writes the corpus back out as JSON lines.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for doc in &self.documents {
            let line = serde_json::to_string(doc).expect("document serializes");
            writeln!(w, "{line}").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

/// Reads a corpus file. Records are NFC-normalized; file order is kept.
pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    match format {
        CorpusFormat::JsonLines => {
            let docs: Vec<Document> = read_jsonl(path)?;
            Corpus::from_documents(docs.into_iter().map(Document::normalized).collect())
        }
    }
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Title, a newline, then body, cut to at most `max_units` whitespace tokens.
///
/// Empty fields contribute nothing. Whitespace inside the kept region is
/// preserved; the cut happens right after the last kept token.
pub fn translation_view(doc: &Document, max_units: usize) -> String {
    translation_view_with_flag(doc, max_units).0
}

/// Like [`translation_view`], also reporting whether anything was cut.
pub fn translation_view_with_flag(doc: &Document, max_units: usize) -> (String, bool) {
    let full = full_translation_view(doc);
    truncate_units(&full, max_units)
}

/// The untruncated view used for indexing.
pub fn full_translation_view(doc: &Document) -> String {
    match (doc.trans_title.is_empty(), doc.trans_body.is_empty()) {
        (false, false) => format!("{}\n{}", doc.trans_title, doc.trans_body),
        (false, true) => doc.trans_title.clone(),
        (true, _) => doc.trans_body.clone(),
    }
}

/// Keeps at most `max_units` whitespace-delimited tokens of `text`.
pub fn truncate_units(text: &str, max_units: usize) -> (String, bool) {
    if max_units == 0 {
        return (String::new(), text.split_whitespace().next().is_some());
    }
    let mut seen = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_token && seen == max_units {
                return (text[..i].to_string(), text[i..].split_whitespace().next().is_some());
            }
            in_token = false;
        } else if !in_token {
            in_token = true;
            seen += 1;
        }
    }
    (text.to_string(), false)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

/// Reads `{"query_id", "text"}` JSON lines, rejecting repeated ids.
pub fn read_queries(path: &Path) -> Result<Vec<Query>, CorpusError> {
    let queries: Vec<Query> = read_jsonl(path)?;
    let mut seen = std::collections::HashSet::new();
    for q in &queries {
        if !seen.insert(q.query_id.as_str()) {
            return Err(CorpusError::DuplicateQuery(q.query_id.clone()));
        }
    }
    Ok(queries
        .into_iter()
        .map(|q| Query { query_id: q.query_id, text: q.text.nfc().collect() })
        .collect())
}

pub fn write_queries(queries: &[Query], path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for q in queries {
        writeln!(w, "{}", serde_json::to_string(q).expect("query serializes")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
