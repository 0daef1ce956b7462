//! Okapi BM25 first-stage retrieval over an in-memory inverted index.
//!
//! Scoring uses the nonnegative idf variant `ln(1 + (N - df + 0.5) / (df + 0.5))`
//! so scores stay >= 0 even for terms present in every document, which keeps
//! ranked-list score monotonicity unconditional. Ties are broken by ascending
//! passage id for determinism.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Query, RankedList};
use crate::error::{Error, Result};
use crate::util::atomic_write;

/// Index file format marker and version, checked on load.
const INDEX_FORMAT: &str = "listrank.bm25_index";
const INDEX_VERSION: u32 = 1;

/// Okapi parameters. Defaults k1=0.9, b=0.4 (the common MS MARCO convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if self.k1.is_nan() || self.k1 < 0.0 {
            return Err(Error::Config(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("b must be in [0,1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Lowercase and split on non-alphanumeric characters, dropping empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    // term -> [(doc index, term frequency)], doc indices ascending
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

/// Immutable inverted index over a corpus.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    id_to_idx: HashMap<String, u32>,
    avgdl: f64,
}

impl InvertedIndex {
    /// Number of indexed passages.
    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    /// Mean token length over indexed passages.
    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.doc_ids.iter().map(String::as_str)
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        let n = self.num_docs() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_score(&self, params: Bm25Params, tf: f64, idf: f64, len: f64) -> f64 {
        let norm = params.k1 * (1.0 - params.b + params.b * len / self.avgdl);
        idf * tf * (params.k1 + 1.0) / (tf + norm)
    }

    /// BM25 score of one passage against the given query tokens.
    /// Tokens absent from the passage contribute exactly 0.
    pub fn score(
        &self,
        params: Bm25Params,
        query_tokens: &[String],
        passage_id: &str,
    ) -> Result<f64> {
        params.validate()?;
        let &idx = self
            .id_to_idx
            .get(passage_id)
            .ok_or_else(|| Error::UnknownPassage(passage_id.to_string()))?;
        let len = f64::from(self.doc_lengths[idx as usize]);
        let mut total = 0.0;
        for token in query_tokens {
            let Some(postings) = self.postings.get(token) else {
                continue;
            };
            if let Ok(pos) = postings.binary_search_by_key(&idx, |&(d, _)| d) {
                let tf = f64::from(postings[pos].1);
                total += self.term_score(params, tf, self.idf(token), len);
            }
        }
        Ok(total)
    }

    /// Top-k retrieval: passages with score > 0, by descending score then
    /// ascending passage id.
    pub fn retrieve(&self, params: Bm25Params, query: &Query, k: usize) -> Result<RankedList> {
        self.retrieve_tokens(params, &query.id, &tokenize(&query.text), k)
    }

    /// As [`retrieve`](Self::retrieve) but with pre-tokenized query text.
    pub fn retrieve_tokens(
        &self,
        params: Bm25Params,
        query_id: &str,
        tokens: &[String],
        k: usize,
    ) -> Result<RankedList> {
        params.validate()?;
        if k == 0 {
            return Err(Error::Config("retrieval depth k must be >= 1".into()));
        }
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for token in tokens {
            let Some(postings) = self.postings.get(token) else {
                continue;
            };
            let idf = self.idf(token);
            for &(doc, tf) in postings {
                let len = f64::from(self.doc_lengths[doc as usize]);
                *acc.entry(doc).or_insert(0.0) += self.term_score(params, f64::from(tf), idf, len);
            }
        }
        let mut scored: Vec<(&str, f64)> = acc
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(doc, s)| (self.doc_ids[doc as usize].as_str(), s))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        scored.truncate(k);
        RankedList::from_scored(
            query_id.to_string(),
            scored
                .into_iter()
                .map(|(id, s)| (id.to_string(), s))
                .collect(),
            "bm25".to_string(),
        )
    }

    /// Persist to a versioned JSON file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = IndexFile {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            doc_ids: self.doc_ids.clone(),
            doc_lengths: self.doc_lengths.clone(),
            postings: self.postings.clone(),
        };
        let mut bytes = serde_json::to_vec(&file)
            .map_err(|e| Error::Config(format!("index serialization failed: {e}")))?;
        bytes.push(b'\n');
        atomic_write(path, &bytes)
    }

    /// Load a previously saved index, validating header and structure.
    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: IndexFile = serde_json::from_slice(&content)
            .map_err(|e| Error::malformed(path, 0, e.to_string()))?;
        if file.format != INDEX_FORMAT {
            return Err(Error::malformed(
                path,
                0,
                format!("not a bm25 index (format {:?})", file.format),
            ));
        }
        if file.version != INDEX_VERSION {
            return Err(Error::malformed(
                path,
                0,
                format!(
                    "unsupported index version {} (expected {INDEX_VERSION})",
                    file.version
                ),
            ));
        }
        if file.doc_lengths.len() != file.doc_ids.len() {
            return Err(Error::malformed(
                path,
                0,
                "doc_lengths/doc_ids length mismatch",
            ));
        }
        let n = file.doc_ids.len() as u32;
        for (term, postings) in &file.postings {
            if postings.iter().any(|&(d, _)| d >= n) {
                return Err(Error::malformed(
                    path,
                    0,
                    format!("posting for {term:?} references missing doc"),
                ));
            }
        }
        Ok(Self::assemble(
            file.doc_ids,
            file.doc_lengths,
            file.postings,
        ))
    }

    fn assemble(
        doc_ids: Vec<String>,
        doc_lengths: Vec<u32>,
        postings: BTreeMap<String, Vec<(u32, u32)>>,
    ) -> Self {
        let id_to_idx = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        let avgdl = if doc_ids.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_ids.len() as f64
        };
        Self {
            doc_ids,
            doc_lengths,
            postings,
            id_to_idx,
            avgdl,
        }
    }
}

/// Build an index over a non-empty corpus.
pub fn build_index(corpus: &Corpus) -> Result<InvertedIndex> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut doc_ids = Vec::with_capacity(corpus.len());
    let mut doc_lengths = Vec::with_capacity(corpus.len());
    let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    for (i, passage) in corpus.iter().enumerate() {
        let tokens = tokenize(&passage.body);
        doc_ids.push(passage.id.clone());
        doc_lengths.push(tokens.len() as u32);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t).or_insert(0) += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push((i as u32, count));
        }
    }
    Ok(InvertedIndex::assemble(doc_ids, doc_lengths, postings))
}
