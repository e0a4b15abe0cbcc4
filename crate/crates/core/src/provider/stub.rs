//! Deterministic in-process providers for tests and desk-scale runs.
//!
//! The embedding and logit stubs work on preprocessed terms mapped through an
//! optional concept lexicon, so that synonyms listed under one concept land
//! in the same feature. Without a lexicon every stem is its own concept.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use super::ProviderError;
use crate::dense::{Embedder, Role};
use crate::expansion::{PseudoDocRequest, TextGenerator};
use crate::rerank::{LabelLogits, LogitScorer, RerankRequest};
use crate::textproc::preprocess;

/// Stem -> concept label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConceptLexicon {
    map: HashMap<String, String>,
}

impl ConceptLexicon {
    /// Parses `word<TAB>concept` lines; `#` starts a comment line. Words are
    /// preprocessed, so inflected forms share an entry.
    pub fn parse(contents: &str) -> Result<Self, ProviderError> {
        let mut map = HashMap::new();
        for (i, line) in contents.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, concept) = line
                .split_once('\t')
                .ok_or_else(|| ProviderError::Config(format!("lexicon line {}: expected word<TAB>concept", i + 1)))?;
            for stem in preprocess(word).into_tokens() {
                map.insert(stem, concept.trim().to_string());
            }
        }
        Ok(Self { map })
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let contents = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("cannot read lexicon {}: {e}", path.display())))?;
        Self::parse(&contents)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Concept labels of the text's terms, in order.
    pub fn concepts(&self, text: &str) -> Vec<String> {
        preprocess(text)
            .into_tokens()
            .into_iter()
            .map(|t| self.map.get(&t).cloned().unwrap_or(t))
            .collect()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

enum GenerationMode {
    Fixed(String),
    Lookup(HashMap<String, String>),
    Echo,
}

/// Canned generations: a fixed text, a per-query fixture table (falling back
/// to echoing the query), or a plain echo.
pub struct StubTextGenerator {
    mode: GenerationMode,
}

#[derive(Deserialize)]
struct FixtureRecord {
    query_id: String,
    text: String,
}

impl StubTextGenerator {
    pub fn fixed(text: String) -> Self {
        Self { mode: GenerationMode::Fixed(text) }
    }

    pub fn echo() -> Self {
        Self { mode: GenerationMode::Echo }
    }

    pub fn from_table(table: HashMap<String, String>) -> Self {
        Self { mode: GenerationMode::Lookup(table) }
    }

    /// Reads `{"query_id", "text"}` JSON lines.
    pub fn from_fixture_file(path: &Path) -> Result<Self, ProviderError> {
        let contents = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("cannot read fixtures {}: {e}", path.display())))?;
        let mut table = HashMap::new();
        for (i, line) in contents.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: FixtureRecord = serde_json::from_str(line)
                .map_err(|e| ProviderError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
            table.insert(rec.query_id, rec.text);
        }
        Ok(Self::from_table(table))
    }
}

impl TextGenerator for StubTextGenerator {
    fn id(&self) -> &str {
        "stub-generator"
    }

    fn generate(&self, request: &PseudoDocRequest) -> Result<String, ProviderError> {
        Ok(match &self.mode {
            GenerationMode::Fixed(text) => text.clone(),
            GenerationMode::Lookup(table) => {
                table.get(&request.query_id).cloned().unwrap_or_else(|| request.query_text.clone())
            }
            GenerationMode::Echo => request.query_text.clone(),
        })
    }
}

/// Feature-hashed bag of concepts. Role is ignored.
#[derive(Debug, Clone, Default)]
pub struct StubEmbedder {
    lexicon: ConceptLexicon,
}

impl StubEmbedder {
    pub fn new(lexicon: ConceptLexicon) -> Self {
        Self { lexicon }
    }

    pub fn vector(&self, text: &str, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        if dim == 0 {
            return v;
        }
        for concept in self.lexicon.concepts(text) {
            let h = fnv1a(concept.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % dim as u64) as usize] += sign;
        }
        if v.iter().all(|&x| x == 0.0) {
            // texts without content terms still get a stable direction
            v[(fnv1a(text.as_bytes()) % dim as u64) as usize] = 1.0;
        }
        v
    }
}

impl Embedder for StubEmbedder {
    fn id(&self) -> &str {
        "stub-embedder"
    }

    fn embed_batch(&self, texts: &[String], _role: Role, dim: usize) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.vector(t, dim)).collect())
    }
}

/// "yes" logit grows with the share of document terms whose concept occurs
/// in the query; the "no" logit is fixed at zero.
#[derive(Debug, Clone, Default)]
pub struct StubLogitScorer {
    lexicon: ConceptLexicon,
}

impl StubLogitScorer {
    pub fn new(lexicon: ConceptLexicon) -> Self {
        Self { lexicon }
    }
}

impl LogitScorer for StubLogitScorer {
    fn id(&self) -> &str {
        "stub-reranker"
    }

    fn label_logits(&self, request: &RerankRequest) -> Result<LabelLogits, ProviderError> {
        let query: HashSet<String> = self.lexicon.concepts(&request.query_text).into_iter().collect();
        let doc = self.lexicon.concepts(&request.doc_text);
        let share = if doc.is_empty() {
            0.0
        } else {
            doc.iter().filter(|c| query.contains(*c)).count() as f64 / doc.len() as f64
        };
        Ok(LabelLogits { yes_logit: 10.0 * share - 3.0, no_logit: 0.0 })
    }
}
