//! Domain types and file I/O: corpora, queries, relevance judgments, and
//! TREC run files.
//!
//! File formats:
//! - corpus: JSON-lines with fields `id`/`title`/`text` (`.tsv` extension
//!   switches to `id<TAB>title<TAB>body` columns)
//! - queries: TSV `qid<TAB>text`
//! - qrels: TREC `qid 0 docid grade`, grades 0..=3
//! - runs: TREC `qid Q0 docid rank score tag`
//!
//! All collections are immutable after loading and safe to share across
//! worker threads.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::util::atomic_write;

/// Highest relevance grade a judgment may carry.
pub const MAX_GRADE: u8 = 3;

/// One corpus text unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub id: String,
    /// May be empty; untitled passages render with an empty title slot.
    pub title: String,
    pub body: String,
}

/// One search request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
}

/// One graded relevance label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgment {
    pub query_id: String,
    pub passage_id: String,
    pub grade: u8,
}

/// An immutable passage collection with id lookup.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Build from passages, rejecting duplicate or empty ids and empty bodies.
    pub fn new(passages: Vec<Passage>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            if p.id.is_empty() {
                return Err(Error::InvalidPassage("empty passage id".into()));
            }
            if p.body.is_empty() {
                return Err(Error::InvalidPassage(format!(
                    "passage {:?} has an empty body",
                    p.id
                )));
            }
            if by_id.insert(p.id.clone(), i).is_some() {
                return Err(Error::DuplicatePassageId(p.id.clone()));
            }
        }
        Ok(Self { passages, by_id })
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Passage> {
        self.passages.iter()
    }
}

/// An immutable query collection with id lookup.
#[derive(Debug, Clone, Default)]
pub struct QuerySet {
    queries: Vec<Query>,
    by_id: HashMap<String, usize>,
}

impl QuerySet {
    pub fn new(queries: Vec<Query>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if q.id.is_empty() || q.text.is_empty() {
                return Err(Error::InvalidQuery(format!(
                    "empty id or text for query {:?}",
                    q.id
                )));
            }
            if by_id.insert(q.id.clone(), i).is_some() {
                return Err(Error::DuplicateQueryId(q.id.clone()));
            }
        }
        Ok(Self { queries, by_id })
    }

    pub fn get(&self, id: &str) -> Option<&Query> {
        self.by_id.get(id).map(|&i| &self.queries[i])
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Query> {
        self.queries.iter()
    }
}

/// Graded judgments keyed by query then passage. Iteration order is
/// deterministic (sorted by id).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<String, u8>>,
}

impl Qrels {
    pub fn from_judgments<I: IntoIterator<Item = Judgment>>(judgments: I) -> Result<Self> {
        let mut grades: BTreeMap<String, BTreeMap<String, u8>> = BTreeMap::new();
        for j in judgments {
            if j.grade > MAX_GRADE {
                return Err(Error::QrelsConflict(format!(
                    "grade {} for ({:?}, {:?}) outside 0..={MAX_GRADE}",
                    j.grade, j.query_id, j.passage_id
                )));
            }
            let per_query = grades.entry(j.query_id.clone()).or_default();
            if per_query.insert(j.passage_id.clone(), j.grade).is_some() {
                return Err(Error::DuplicateJudgment {
                    query_id: j.query_id,
                    passage_id: j.passage_id,
                });
            }
        }
        Ok(Self { grades })
    }

    /// Grade for a (query, passage) pair, if judged.
    pub fn grade(&self, query_id: &str, passage_id: &str) -> Option<u8> {
        self.grades
            .get(query_id)
            .and_then(|m| m.get(passage_id))
            .copied()
    }

    /// All judgments for one query, sorted by passage id.
    pub fn judged(&self, query_id: &str) -> Option<&BTreeMap<String, u8>> {
        self.grades.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = Judgment> + '_ {
        self.grades.iter().flat_map(|(q, m)| {
            m.iter().map(move |(p, &g)| Judgment {
                query_id: q.clone(),
                passage_id: p.clone(),
                grade: g,
            })
        })
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }
}

/// One scored entry of a ranked list.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub passage_id: String,
    /// 1-based rank.
    pub rank: u32,
    pub score: f64,
}

/// An ordered, scored passage list for one query — the universal pipeline
/// currency.
///
/// Invariants, enforced at construction: ranks are exactly `1..=len`,
/// scores are non-increasing with rank, and passage ids are distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    query_id: String,
    entries: Vec<RunEntry>,
    tag: String,
}

impl RankedList {
    pub fn new(query_id: String, entries: Vec<RunEntry>, tag: String) -> Result<Self> {
        let mut seen = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.rank as usize != i + 1 {
                return Err(Error::InvalidRankedList {
                    query_id,
                    msg: format!("rank {} at position {} (expected {})", e.rank, i, i + 1),
                });
            }
            if i > 0 && entries[i - 1].score < e.score {
                return Err(Error::InvalidRankedList {
                    query_id,
                    msg: format!(
                        "score increases from {} to {} at rank {}",
                        entries[i - 1].score,
                        e.score,
                        e.rank
                    ),
                });
            }
            if let Some(prev) = seen.insert(e.passage_id.clone(), i) {
                return Err(Error::InvalidRankedList {
                    query_id,
                    msg: format!(
                        "passage {:?} appears at ranks {} and {}",
                        e.passage_id,
                        prev + 1,
                        i + 1
                    ),
                });
            }
        }
        Ok(Self {
            query_id,
            entries,
            tag,
        })
    }

    /// Build from `(passage_id, score)` pairs already sorted by descending
    /// score; ranks are assigned 1..=len.
    pub fn from_scored(query_id: String, scored: Vec<(String, f64)>, tag: String) -> Result<Self> {
        let entries = scored
            .into_iter()
            .enumerate()
            .map(|(i, (passage_id, score))| RunEntry {
                passage_id,
                rank: i as u32 + 1,
                score,
            })
            .collect();
        Self::new(query_id, entries, tag)
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn entries(&self) -> &[RunEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn passage_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.passage_id.as_str())
    }
}

#[derive(Deserialize)]
struct CorpusLine {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Load a corpus file. `.tsv` files are parsed as `id<TAB>title<TAB>body`;
/// anything else as JSON-lines with fields `id`/`title`/`text`.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let content = read_to_string(path)?;
    let is_tsv = path.extension().and_then(|e| e.to_str()) == Some("tsv");
    let mut passages = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let passage = if is_tsv {
            let mut cols = line.splitn(3, '\t');
            let id = cols.next().unwrap_or("").to_string();
            let title = cols.next().map(str::to_string);
            let body = cols.next().map(str::to_string);
            match (title, body) {
                (Some(title), Some(body)) => Passage { id, title, body },
                _ => {
                    return Err(Error::malformed(
                        path,
                        lineno,
                        "expected 3 tab-separated columns",
                    ))
                }
            }
        } else {
            let parsed: CorpusLine = serde_json::from_str(line)
                .map_err(|e| Error::malformed(path, lineno, e.to_string()))?;
            Passage {
                id: parsed.id,
                title: parsed.title,
                body: parsed.text,
            }
        };
        if passage.id.is_empty() {
            return Err(Error::malformed(path, lineno, "empty passage id"));
        }
        if passage.body.is_empty() {
            return Err(Error::malformed(path, lineno, "empty passage body"));
        }
        passages.push(passage);
    }
    Corpus::new(passages)
}

/// Load a TSV query file (`qid<TAB>text`).
pub fn load_queries(path: &Path) -> Result<QuerySet> {
    let content = read_to_string(path)?;
    let mut queries = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, text)) = line.split_once('\t') else {
            return Err(Error::malformed(path, lineno, "expected `qid<TAB>text`"));
        };
        if id.is_empty() || text.is_empty() {
            return Err(Error::malformed(path, lineno, "empty query id or text"));
        }
        queries.push(Query {
            id: id.to_string(),
            text: text.to_string(),
        });
    }
    QuerySet::new(queries)
}

/// Load TREC qrels (`qid 0 docid grade`). Grades outside 0..=3 are rejected.
pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let content = read_to_string(path)?;
    let mut judgments = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::malformed(
                path,
                lineno,
                "expected `qid 0 docid grade`",
            ));
        }
        let grade: i64 = fields[3].parse().map_err(|_| {
            Error::malformed(path, lineno, format!("non-integer grade {:?}", fields[3]))
        })?;
        if !(0..=i64::from(MAX_GRADE)).contains(&grade) {
            return Err(Error::malformed(
                path,
                lineno,
                format!("grade {grade} outside 0..={MAX_GRADE}"),
            ));
        }
        judgments.push(Judgment {
            query_id: fields[0].to_string(),
            passage_id: fields[2].to_string(),
            grade: grade as u8,
        });
    }
    Qrels::from_judgments(judgments).map_err(|e| match e {
        Error::DuplicateJudgment {
            query_id,
            passage_id,
        } => Error::malformed(
            path,
            0,
            format!("duplicate judgment for ({query_id:?}, {passage_id:?})"),
        ),
        other => other,
    })
}

/// Load a TREC run file, grouping lines by query in first-appearance order.
/// Ranks per query must be contiguous from 1; docids must be unique per query.
pub fn load_run(path: &Path) -> Result<Vec<RankedList>> {
    let content = read_to_string(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, (Vec<RunEntry>, String)> = HashMap::new();
    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::malformed(
                path,
                lineno,
                "expected `qid Q0 docid rank score tag`",
            ));
        }
        let rank: u32 = fields[3].parse().map_err(|_| {
            Error::malformed(path, lineno, format!("non-integer rank {:?}", fields[3]))
        })?;
        let score: f64 = fields[4].parse().map_err(|_| {
            Error::malformed(path, lineno, format!("non-numeric score {:?}", fields[4]))
        })?;
        let qid = fields[0].to_string();
        if !pending.contains_key(&qid) {
            order.push(qid.clone());
        }
        let (entries, _) = pending
            .entry(qid)
            .or_insert_with(|| (Vec::new(), fields[5].to_string()));
        entries.push(RunEntry {
            passage_id: fields[2].to_string(),
            rank,
            score,
        });
    }
    let mut lists = Vec::with_capacity(order.len());
    for qid in order {
        let (entries, tag) = pending.remove(&qid).unwrap();
        lists.push(RankedList::new(qid, entries, tag)?);
    }
    Ok(lists)
}

/// Serialize a run to TREC format with fixed 6-decimal scores.
pub fn format_run(lists: &[RankedList]) -> String {
    let mut out = String::new();
    for list in lists {
        for e in list.entries() {
            let _ = writeln!(
                out,
                "{} Q0 {} {} {:.6} {}",
                list.query_id(),
                e.passage_id,
                e.rank,
                e.score,
                list.tag()
            );
        }
    }
    out
}

/// Save a run atomically. `load_run` of the result reproduces the run.
pub fn save_run(lists: &[RankedList], path: &Path) -> Result<()> {
    atomic_write(path, format_run(lists).as_bytes())
}
