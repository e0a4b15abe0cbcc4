//! Binary index file.
//!
//! Layout (all integers are LEB128 varints unless noted):
//!
//! ```text
//! magic        6 bytes   "SPIDX1"
//! version      1 byte    INDEX_FORMAT_VERSION
//! tag_len, tag           preprocessor tag (UTF-8)
//! n_docs
//!   n_docs x { id_len, id bytes (UTF-8), doc_len }
//! n_terms
//!   n_terms x { term_len, term bytes (UTF-8), df, df x { doc_gap, tf } }
//! ```
//!
//! Terms are written in byte order and `doc_gap` is the difference to the
//! previous posting's ordinal (the first gap is the ordinal itself), so the
//! same index always serializes to the same bytes.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{IndexError, InvertedIndex, Posting};

pub const INDEX_MAGIC: &[u8; 6] = b"SPIDX1";
pub const INDEX_FORMAT_VERSION: u8 = 1;

impl InvertedIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.total_len as usize * 2);
        out.extend_from_slice(INDEX_MAGIC);
        out.push(INDEX_FORMAT_VERSION);
        put_str(&mut out, &self.preprocessor_tag);
        put_varint(&mut out, self.doc_ids.len() as u64);
        for (id, &len) in self.doc_ids.iter().zip(&self.doc_len) {
            put_str(&mut out, id);
            put_varint(&mut out, u64::from(len));
        }
        let terms = self.sorted_terms();
        put_varint(&mut out, terms.len() as u64);
        for term in terms {
            let list = &self.postings[term];
            put_str(&mut out, term);
            put_varint(&mut out, list.len() as u64);
            let mut prev = 0u32;
            for p in list {
                put_varint(&mut out, u64::from(p.doc - prev));
                put_varint(&mut out, u64::from(p.tf));
                prev = p.doc;
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(INDEX_MAGIC.len())? != INDEX_MAGIC {
            return Err(IndexError::BadMagic);
        }
        let version = r.take(1)?[0];
        if version != INDEX_FORMAT_VERSION {
            return Err(IndexError::VersionMismatch { found: version, expected: INDEX_FORMAT_VERSION });
        }
        let preprocessor_tag = r.string()?;
        let n_docs = r.usize()?;
        if n_docs == 0 {
            return Err(IndexError::Corrupt("zero documents".into()));
        }
        let mut doc_ids = Vec::with_capacity(n_docs.min(bytes.len()));
        let mut doc_len = Vec::with_capacity(n_docs.min(bytes.len()));
        for _ in 0..n_docs {
            doc_ids.push(r.string()?);
            doc_len.push(r.u32()?);
        }
        let n_terms = r.usize()?;
        let mut postings = HashMap::with_capacity(n_terms.min(bytes.len()));
        let mut tf_sum = vec![0u64; n_docs];
        for _ in 0..n_terms {
            let term = r.string()?;
            let df = r.usize()?;
            if df == 0 {
                return Err(IndexError::Corrupt(format!("term {term:?} has no postings")));
            }
            let mut list = Vec::with_capacity(df.min(n_docs));
            let mut prev: Option<u32> = None;
            for _ in 0..df {
                let gap = r.u32()?;
                let doc = match prev {
                    None => gap,
                    Some(p) if gap > 0 => p
                        .checked_add(gap)
                        .ok_or_else(|| IndexError::Corrupt("posting overflow".into()))?,
                    Some(_) => return Err(IndexError::Corrupt(format!("postings of {term:?} not increasing"))),
                };
                if doc as usize >= n_docs {
                    return Err(IndexError::Corrupt(format!("posting of {term:?} beyond document count")));
                }
                let tf = r.u32()?;
                if tf == 0 {
                    return Err(IndexError::Corrupt(format!("zero tf in postings of {term:?}")));
                }
                tf_sum[doc as usize] += u64::from(tf);
                list.push(Posting { doc, tf });
                prev = Some(doc);
            }
            if postings.insert(term.clone(), list).is_some() {
                return Err(IndexError::Corrupt(format!("term {term:?} repeated")));
            }
        }
        if r.pos != bytes.len() {
            return Err(IndexError::Corrupt("trailing bytes".into()));
        }
        if tf_sum.iter().zip(&doc_len).any(|(&s, &l)| s != u64::from(l)) {
            return Err(IndexError::Corrupt("document lengths disagree with postings".into()));
        }
        let total_len = doc_len.iter().map(|&l| u64::from(l)).sum();
        Ok(Self { postings, doc_len, doc_ids, total_len, preprocessor_tag })
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        fs::write(path, self.to_bytes()).map_err(|source| IndexError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = fs::read(path).map_err(|source| IndexError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_varint(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| IndexError::Corrupt("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn varint(&mut self) -> Result<u64, IndexError> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.take(1)?[0];
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(IndexError::Corrupt("varint too long".into()))
    }

    fn usize(&mut self) -> Result<usize, IndexError> {
        usize::try_from(self.varint()?).map_err(|_| IndexError::Corrupt("count overflow".into()))
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        u32::try_from(self.varint()?).map_err(|_| IndexError::Corrupt("value overflow".into()))
    }

    fn string(&mut self) -> Result<String, IndexError> {
        let n = self.usize()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| IndexError::Corrupt("invalid UTF-8".into()))
    }
}
