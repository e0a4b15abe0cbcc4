use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use thiserror::Error;

/// Version tag of the embedded list in `data/stopwords.txt`.
pub const STOPWORDS_VERSION: &str = "en-172-v1";

const BUILTIN: &str = include_str!("../../data/stopwords.txt");

#[derive(Debug, Error)]
pub enum StopwordError {
    #[error("cannot read stopword file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: HashSet<String>,
    version: String,
}

impl StopwordList {
    /// The list shipped with the crate.
    pub fn builtin() -> &'static StopwordList {
        static LIST: OnceLock<StopwordList> = OnceLock::new();
        LIST.get_or_init(|| StopwordList::parse(BUILTIN, STOPWORDS_VERSION))
    }

    /// Parses one word per line; blank lines and `#` comments are skipped.
    pub fn parse(contents: &str, version: impl Into<String>) -> Self {
        let words = contents
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { words, version: version.into() }
    }

    /// Loads a custom list; its version tag is `file:<path>`.
    pub fn from_file(path: &Path) -> Result<Self, StopwordError> {
        let contents = std::fs::read_to_string(path).map_err(|source| StopwordError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::parse(&contents, format!("file:{}", path.display())))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}
