//! Listwise fine-tuning dataset construction.
//!
//! Two gold-ordering modes:
//! - P-GT (pointwise ground truth): judged-relevant candidates first (grade
//!   descending, ties by first-stage rank), the rest in first-stage order.
//! - silver: the ordering of an existing ranking system restricted to the
//!   candidate window; candidates the silver ranking never scored go last,
//!   in first-stage order. BM25 silver can be computed internally or fed
//!   from a saved run file; both routes produce identical datasets.
//!
//! Every example pairs the rendered listwise prompt for its window with the
//! gold completion expressing the gold ordering in window-local identifiers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bm25::{tokenize, Bm25Params, InvertedIndex};
use crate::data::{Corpus, Qrels, QuerySet, RankedList};
use crate::error::{Error, Result};
use crate::permutation::Permutation;
use crate::prompt::{
    render_completion, truncate_words, PromptBudget, PromptPassage, PromptTemplate,
};
use crate::util::{atomic_write, derive_seed};

/// Where a training example's gold ordering came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceTag {
    Pgt,
    Silver(String),
}

impl SourceTag {
    fn label(&self) -> String {
        match self {
            SourceTag::Pgt => "pgt".to_string(),
            SourceTag::Silver(tag) => format!("silver:{tag}"),
        }
    }
}

/// One window passage as it appears in the exported dataset (body already
/// truncated to the cap the prompt renderer settled on).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgedPassage {
    pub id: String,
    pub title: String,
    pub body: String,
}

/// One prompt/gold-completion pair.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub query_id: String,
    pub window: Vec<ForgedPassage>,
    pub prompt: String,
    pub gold: String,
    pub source: SourceTag,
}

/// Dataset construction knobs.
#[derive(Debug, Clone, Copy)]
pub struct ForgeConfig {
    /// How many queries to sample (seeded-uniform) from the eligible set.
    pub num_queries: usize,
    /// Window size per query; queries with fewer candidates are skipped.
    pub passages_per_query: usize,
    /// Shuffle each input window (seeded) instead of keeping first-stage order.
    pub shuffle_input: bool,
    pub seed: u64,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            num_queries: 5000,
            passages_per_query: 20,
            shuffle_input: false,
            seed: 0,
        }
    }
}

impl ForgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_queries == 0 {
            return Err(Error::Forge("num_queries must be >= 1".into()));
        }
        if self.passages_per_query < 2 {
            return Err(Error::Forge("passages_per_query must be >= 2".into()));
        }
        Ok(())
    }
}

/// Why queries were dropped during forging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SkipCounts {
    /// P-GT: no judged-relevant passage among the candidates.
    pub no_relevant: usize,
    /// Silver: the silver ranking does not cover this query.
    pub missing_silver: usize,
    /// Fewer candidates than `passages_per_query`.
    pub short_candidates: usize,
    /// A candidate passage id is absent from the corpus.
    pub missing_passage: usize,
}

#[derive(Debug)]
pub struct ForgeOutcome {
    /// Examples sorted by query id.
    pub examples: Vec<TrainingExample>,
    pub skipped: SkipCounts,
}

/// Silver ranking supplier: an ingested run file, or BM25 computed in-process.
pub enum SilverSource<'a> {
    Run(&'a [RankedList]),
    Bm25 {
        index: &'a InvertedIndex,
        params: Bm25Params,
    },
}

struct ForgeInputs<'a> {
    queries: &'a QuerySet,
    candidates: &'a [RankedList],
    corpus: &'a Corpus,
    template: &'a PromptTemplate,
    budget: PromptBudget,
    config: ForgeConfig,
}

/// Select, deterministically, which candidate lists to forge from.
fn select_lists<'a>(inputs: &ForgeInputs<'a>) -> Vec<&'a RankedList> {
    let mut eligible: Vec<&RankedList> = inputs
        .candidates
        .iter()
        .filter(|l| inputs.queries.get(l.query_id()).is_some())
        .collect();
    eligible.sort_by(|a, b| a.query_id().cmp(b.query_id()));
    if inputs.config.num_queries < eligible.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(inputs.config.seed, &["sample"]));
        let picked = rand::seq::index::sample(&mut rng, eligible.len(), inputs.config.num_queries);
        let mut selected: Vec<&RankedList> = picked.iter().map(|i| eligible[i]).collect();
        selected.sort_by(|a, b| a.query_id().cmp(b.query_id()));
        selected
    } else {
        eligible
    }
}

/// Build one example given the gold ordering over candidate ids.
fn build_example(
    inputs: &ForgeInputs<'_>,
    list: &RankedList,
    gold_ids: &[&str],
    source: SourceTag,
) -> Result<Option<TrainingExample>> {
    let query_id = list.query_id();
    let query = inputs
        .queries
        .get(query_id)
        .expect("selection guarantees query text");

    // window in first-stage order, optionally shuffled
    let mut window_ids: Vec<&str> = list
        .entries()
        .iter()
        .take(inputs.config.passages_per_query)
        .map(|e| e.passage_id.as_str())
        .collect();
    if inputs.config.shuffle_input {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(inputs.config.seed, &["shuffle", query_id]));
        window_ids.shuffle(&mut rng);
    }

    let mut passages = Vec::with_capacity(window_ids.len());
    for id in &window_ids {
        match inputs.corpus.get(id) {
            Some(p) => passages.push(p),
            None => {
                log::warn!("query {query_id}: candidate {id} missing from corpus; skipping query");
                return Ok(None);
            }
        }
    }

    let prompt_passages: Vec<PromptPassage<'_>> = passages
        .iter()
        .map(|p| PromptPassage {
            title: &p.title,
            body: &p.body,
        })
        .collect();
    let rendered = inputs
        .template
        .render(&query.text, &prompt_passages, inputs.budget)?;

    // gold ordering -> window-local identifiers
    let order: Vec<u32> = gold_ids
        .iter()
        .map(|gid| {
            window_ids
                .iter()
                .position(|wid| wid == gid)
                .map(|pos| pos as u32 + 1)
                .ok_or_else(|| Error::Forge(format!("gold id {gid:?} not in window of {query_id}")))
        })
        .collect::<Result<_>>()?;
    let gold = render_completion(&Permutation::new(order)?);

    let window = passages
        .iter()
        .map(|p| ForgedPassage {
            id: p.id.clone(),
            title: p.title.clone(),
            body: truncate_words(&p.body, rendered.per_passage_cap),
        })
        .collect();

    Ok(Some(TrainingExample {
        query_id: query_id.to_string(),
        window,
        prompt: rendered.text,
        gold,
        source,
    }))
}

/// Pointwise ground truth: labeled relevant candidates first (grade
/// descending, ties by first-stage rank), then the rest in first-stage order.
pub fn forge_pgt(
    queries: &QuerySet,
    qrels: &Qrels,
    candidates: &[RankedList],
    corpus: &Corpus,
    template: &PromptTemplate,
    budget: PromptBudget,
    config: ForgeConfig,
) -> Result<ForgeOutcome> {
    config.validate()?;
    let inputs = ForgeInputs {
        queries,
        candidates,
        corpus,
        template,
        budget,
        config,
    };
    let mut outcome = ForgeOutcome {
        examples: Vec::new(),
        skipped: SkipCounts::default(),
    };

    for list in select_lists(&inputs) {
        if list.len() < config.passages_per_query {
            log::warn!(
                "query {}: only {} candidates; skipping",
                list.query_id(),
                list.len()
            );
            outcome.skipped.short_candidates += 1;
            continue;
        }
        let candidate_ids: Vec<&str> = list
            .entries()
            .iter()
            .take(config.passages_per_query)
            .map(|e| e.passage_id.as_str())
            .collect();
        let grade_of = |id: &str| qrels.grade(list.query_id(), id).unwrap_or(0);

        let mut relevant: Vec<&str> = candidate_ids
            .iter()
            .copied()
            .filter(|id| grade_of(id) > 0)
            .collect();
        if relevant.is_empty() {
            log::warn!("query {}: no relevant candidate; skipping", list.query_id());
            outcome.skipped.no_relevant += 1;
            continue;
        }
        // candidate_ids is in first-stage order, so a stable sort by grade
        // keeps first-stage order among ties
        relevant.sort_by_key(|id| std::cmp::Reverse(grade_of(id)));
        let mut gold_ids = relevant.clone();
        gold_ids.extend(candidate_ids.iter().copied().filter(|id| grade_of(id) == 0));

        match build_example(&inputs, list, &gold_ids, SourceTag::Pgt)? {
            Some(example) => outcome.examples.push(example),
            None => outcome.skipped.missing_passage += 1,
        }
    }
    Ok(outcome)
}

/// Silver ranking: gold ordering taken from an existing ranking system.
pub fn forge_silver(
    queries: &QuerySet,
    silver: &SilverSource<'_>,
    candidates: &[RankedList],
    corpus: &Corpus,
    template: &PromptTemplate,
    budget: PromptBudget,
    config: ForgeConfig,
) -> Result<ForgeOutcome> {
    config.validate()?;
    let inputs = ForgeInputs {
        queries,
        candidates,
        corpus,
        template,
        budget,
        config,
    };
    let mut outcome = ForgeOutcome {
        examples: Vec::new(),
        skipped: SkipCounts::default(),
    };

    for list in select_lists(&inputs) {
        if list.len() < config.passages_per_query {
            log::warn!(
                "query {}: only {} candidates; skipping",
                list.query_id(),
                list.len()
            );
            outcome.skipped.short_candidates += 1;
            continue;
        }
        let silver_list: Option<(Vec<String>, String)> = match silver {
            SilverSource::Run(run) => {
                run.iter()
                    .find(|l| l.query_id() == list.query_id())
                    .map(|l| {
                        (
                            l.passage_ids().map(String::from).collect(),
                            l.tag().to_string(),
                        )
                    })
            }
            SilverSource::Bm25 { index, params } => {
                let query = queries
                    .get(list.query_id())
                    .expect("selection guarantees query text");
                let retrieved = index.retrieve_tokens(
                    *params,
                    list.query_id(),
                    &tokenize(&query.text),
                    index.num_docs(),
                )?;
                (!retrieved.is_empty()).then(|| {
                    (
                        retrieved.passage_ids().map(String::from).collect(),
                        retrieved.tag().to_string(),
                    )
                })
            }
        };
        let Some((silver_ids, silver_tag)) = silver_list else {
            log::warn!(
                "query {}: absent from silver ranking; skipping",
                list.query_id()
            );
            outcome.skipped.missing_silver += 1;
            continue;
        };

        let candidate_ids: Vec<&str> = list
            .entries()
            .iter()
            .take(config.passages_per_query)
            .map(|e| e.passage_id.as_str())
            .collect();
        // silver order restricted to the window, then silver-missing
        // candidates in first-stage order
        let mut gold_ids: Vec<&str> = silver_ids
            .iter()
            .map(String::as_str)
            .filter(|id| candidate_ids.contains(id))
            .collect();
        gold_ids.extend(
            candidate_ids
                .iter()
                .copied()
                .filter(|id| !silver_ids.iter().any(|s| s == id)),
        );

        match build_example(&inputs, list, &gold_ids, SourceTag::Silver(silver_tag))? {
            Some(example) => outcome.examples.push(example),
            None => outcome.skipped.missing_passage += 1,
        }
    }
    Ok(outcome)
}

#[derive(Serialize)]
struct ExportMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ExportLine<'a> {
    id: &'a str,
    source: String,
    messages: [ExportMessage<'a>; 2],
}

/// Serialize a dataset as chat-format JSON-lines.
pub fn export_string(examples: &[TrainingExample]) -> Result<String> {
    let mut out = String::new();
    for example in examples {
        let line = ExportLine {
            id: &example.query_id,
            source: example.source.label(),
            messages: [
                ExportMessage {
                    role: "user",
                    content: &example.prompt,
                },
                ExportMessage {
                    role: "assistant",
                    content: &example.gold,
                },
            ],
        };
        out.push_str(
            &serde_json::to_string(&line).map_err(|e| Error::Forge(format!("serialize: {e}")))?,
        );
        out.push('\n');
    }
    Ok(out)
}

/// Export a dataset atomically to a JSONL file, ordered by query id.
pub fn export(examples: &[TrainingExample], path: &std::path::Path) -> Result<()> {
    atomic_write(path, export_string(examples)?.as_bytes())
}
