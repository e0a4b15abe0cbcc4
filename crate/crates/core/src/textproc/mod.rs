//! English text preprocessing shared by the sparse index and expansion-term
//! extraction.
//!
//! The pipeline is: NFC-normalize, lowercase, split on every
//! non-alphanumeric character, drop digit-only and single-character tokens,
//! drop stopwords, then Porter-stem. Stems are taken to a fixed point and
//! re-filtered so that preprocessing the space-joined output reproduces it.

mod porter;
mod stopwords;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use unicode_normalization::UnicodeNormalization;

pub use porter::stem;
pub use stopwords::{StopwordError, StopwordList, STOPWORDS_VERSION};

/// Ordered multiset of preprocessed terms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    tokens: Vec<String>,
}

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }

    /// Space-joined form.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

impl<'a> IntoIterator for &'a TokenStream {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.tokens.iter()
    }
}

/// Tokenizer + stopword filter + stemmer bundle.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    stopwords: StopwordList,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::new(StopwordList::builtin().clone())
    }
}

impl Preprocessor {
    pub fn new(stopwords: StopwordList) -> Self {
        Self { stopwords }
    }

    /// Preprocessor using a stopword file instead of the built-in list.
    pub fn from_stopword_file(path: &Path) -> Result<Self, StopwordError> {
        Ok(Self::new(StopwordList::from_file(path)?))
    }

    pub fn stopwords(&self) -> &StopwordList {
        &self.stopwords
    }

    /// Identifies the preprocessing configuration; stored in index files.
    pub fn tag(&self) -> &str {
        self.stopwords.version()
    }

    pub fn preprocess(&self, text: &str) -> TokenStream {
        let normalized: String = text.nfc().collect::<String>().to_lowercase().nfc().collect();
        let tokens = normalized
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| self.keep(t))
            .map(stem_to_fixpoint)
            .filter(|t| self.keep(t))
            .collect();
        TokenStream { tokens }
    }

    fn keep(&self, token: &str) -> bool {
        let mut chars = token.chars();
        // at least two characters
        if chars.next().is_none() || chars.next().is_none() {
            return false;
        }
        if token.chars().all(|c| c.is_numeric()) {
            return false;
        }
        !self.stopwords.contains(token)
    }
}

fn stem_to_fixpoint(token: &str) -> String {
    let mut current = stem(token);
    loop {
        let next = stem(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn default_preprocessor() -> &'static Preprocessor {
    static DEFAULT: OnceLock<Preprocessor> = OnceLock::new();
    DEFAULT.get_or_init(Preprocessor::default)
}

/// Preprocesses `text` with the built-in stopword list.
pub fn preprocess(text: &str) -> TokenStream {
    default_preprocessor().preprocess(text)
}

/// Exact occurrence counts.
pub fn term_frequencies(stream: &TokenStream) -> BTreeMap<String, usize> {
    let mut tf = BTreeMap::new();
    for t in stream.iter() {
        *tf.entry(t.to_string()).or_insert(0) += 1;
    }
    tf
}
