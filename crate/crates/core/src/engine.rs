//! Sliding-window listwise reranking.
//!
//! A window of size `n` slides from the end of the candidate list to the
//! front, striding `m` positions per step; each window is reranked by the
//! backend and written back in place, so the top `n - m` survivors of one
//! window join the next. When `start - m` would go negative the final window
//! clamps to 0 and may overlap its predecessor by more than `n - m`; every
//! position is covered.
//!
//! Queries are independent: the run-level driver processes them in parallel
//! while each query's windows stay strictly sequential (later windows see
//! earlier results).

use rayon::prelude::*;
use serde::Serialize;

use crate::backend::{ListwiseBackend, WindowPassage, WindowRequest};
use crate::data::{Corpus, Passage, Query, QuerySet, RankedList, RunEntry};
use crate::error::{Error, Result};
use crate::permutation::{self, Anomalies, Permutation};
use crate::prompt::{PromptBudget, PromptTemplate};

/// Sliding-window geometry: window size `n`, stride `m`, pass count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct WindowConfig {
    pub window: usize,
    pub stride: usize,
    pub passes: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window: 20,
            stride: 10,
            passes: 1,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::InvalidWindowConfig(format!(
                "window must be >= 2, got {}",
                self.window
            )));
        }
        if self.stride == 0 || self.stride >= self.window {
            return Err(Error::InvalidWindowConfig(format!(
                "stride must satisfy 1 <= stride < window, got stride {} window {}",
                self.stride, self.window
            )));
        }
        if self.passes == 0 {
            return Err(Error::InvalidWindowConfig("passes must be >= 1".into()));
        }
        Ok(())
    }
}

/// What to do when a backend call or completion parse fails for a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    /// Keep the window's current order and count the fallback.
    #[default]
    KeepOrder,
    /// Abort the whole query; the run driver reports it as failed.
    FailQuery,
}

/// `[start, end)` window bounds for one pass, back to front.
pub fn window_schedule(k: usize, window: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    let mut start = k.saturating_sub(window);
    loop {
        out.push((start, (start + window).min(k)));
        if start == 0 {
            break;
        }
        start = start.saturating_sub(stride);
    }
    out
}

/// One reranked window as recorded in the trace.
#[derive(Debug, Clone, Serialize)]
pub struct WindowRecord {
    pub pass: usize,
    pub start: usize,
    /// Window passage ids before this rerank, in order.
    pub before: Vec<String>,
    /// Applied permutation (window slots in ranked order).
    pub permutation: Vec<u32>,
    pub repaired: bool,
    pub fallback: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceInputEntry {
    pub passage_id: String,
    /// First-stage score, kept here because output scores are synthesized
    /// from ranks.
    pub score: f64,
}

/// Per-query record of everything the engine did.
#[derive(Debug, Clone, Serialize)]
pub struct RerankTrace {
    pub query_id: String,
    pub input: Vec<TraceInputEntry>,
    pub windows: Vec<WindowRecord>,
    pub fallbacks: u32,
    pub anomalies: Anomalies,
}

/// Shared, read-only inputs for reranking.
pub struct RerankContext<'a> {
    pub backend: &'a dyn ListwiseBackend,
    pub corpus: &'a Corpus,
    pub template: &'a PromptTemplate,
    pub budget: PromptBudget,
    pub config: WindowConfig,
    pub fallback: FallbackPolicy,
}

impl RerankContext<'_> {
    fn run_tag(&self) -> String {
        let name: String = self
            .backend
            .name()
            .chars()
            .map(|c| if c.is_whitespace() { '-' } else { c })
            .collect();
        format!(
            "{}-n{}m{}p{}",
            name, self.config.window, self.config.stride, self.config.passes
        )
    }
}

/// Rerank one query's candidate list.
///
/// Output ids are a permutation of the input ids; scores are reassigned
/// `k..1` down the final order so the run file stays valid.
pub fn rerank(
    ctx: &RerankContext<'_>,
    query: &Query,
    list: &RankedList,
) -> Result<(RankedList, RerankTrace)> {
    ctx.config.validate()?;
    ctx.budget.validate()?;
    if list.is_empty() {
        return Err(Error::InvalidRankedList {
            query_id: list.query_id().to_string(),
            msg: "cannot rerank an empty list".into(),
        });
    }
    if ctx.config.window > ctx.backend.max_window() {
        return Err(Error::InvalidWindowConfig(format!(
            "window {} exceeds backend max_window {}",
            ctx.config.window,
            ctx.backend.max_window()
        )));
    }

    let mut working: Vec<&Passage> = Vec::with_capacity(list.len());
    for entry in list.entries() {
        working.push(
            ctx.corpus
                .get(&entry.passage_id)
                .ok_or_else(|| Error::UnknownPassage(entry.passage_id.clone()))?,
        );
    }

    let k = working.len();
    let mut trace = RerankTrace {
        query_id: list.query_id().to_string(),
        input: list
            .entries()
            .iter()
            .map(|e| TraceInputEntry {
                passage_id: e.passage_id.clone(),
                score: e.score,
            })
            .collect(),
        windows: Vec::new(),
        fallbacks: 0,
        anomalies: Anomalies::default(),
    };

    for pass in 0..ctx.config.passes {
        for (start, end) in window_schedule(k, ctx.config.window, ctx.config.stride) {
            let slice = &working[start..end];
            let window_passages: Vec<WindowPassage<'_>> = slice
                .iter()
                .map(|p| WindowPassage {
                    id: &p.id,
                    title: &p.title,
                    body: &p.body,
                })
                .collect();
            let prompt_passages: Vec<crate::prompt::PromptPassage<'_>> = window_passages
                .iter()
                .map(|p| crate::prompt::PromptPassage {
                    title: p.title,
                    body: p.body,
                })
                .collect();
            let prompt = ctx
                .template
                .render(&query.text, &prompt_passages, ctx.budget)?;
            let request = WindowRequest {
                query,
                passages: &window_passages,
                prompt: &prompt.text,
            };

            let parsed = ctx
                .backend
                .rank_window(&request)
                .and_then(|completion| permutation::parse(&completion, slice.len()));
            let (perm, repaired, fallback) = match parsed {
                Ok(report) => {
                    trace.anomalies.add(&report.anomalies);
                    (report.permutation, report.repaired, false)
                }
                Err(e) => match ctx.fallback {
                    FallbackPolicy::KeepOrder => {
                        log::warn!(
                            "query {}: window at {start} fell back to input order: {e}",
                            query.id
                        );
                        trace.fallbacks += 1;
                        (Permutation::identity(slice.len()), false, true)
                    }
                    FallbackPolicy::FailQuery => return Err(e),
                },
            };

            trace.windows.push(WindowRecord {
                pass,
                start,
                before: slice.iter().map(|p| p.id.clone()).collect(),
                permutation: perm.order().to_vec(),
                repaired,
                fallback,
            });

            let reordered = perm.apply(slice)?;
            working[start..end].clone_from_slice(&reordered);
        }
    }

    let entries = working
        .iter()
        .enumerate()
        .map(|(i, p)| RunEntry {
            passage_id: p.id.clone(),
            rank: i as u32 + 1,
            score: (k - i) as f64,
        })
        .collect();
    let out = RankedList::new(list.query_id().to_string(), entries, ctx.run_tag())?;
    Ok((out, trace))
}

/// A query the run driver could not rerank.
#[derive(Debug, Clone, Serialize)]
pub struct QueryFailure {
    pub query_id: String,
    pub error: String,
}

/// Output of reranking a whole run.
#[derive(Debug)]
pub struct RunOutcome {
    pub lists: Vec<RankedList>,
    pub traces: Vec<RerankTrace>,
    /// Queries that could not be processed; their lists pass through in
    /// first-stage order. Callers should exit nonzero when non-empty.
    pub failures: Vec<QueryFailure>,
}

/// Rerank every query of a run, isolating per-query failures.
///
/// Queries run in parallel on up to `workers` threads (0 = rayon default);
/// output order matches input order regardless of scheduling.
pub fn rerank_run(
    ctx: &RerankContext<'_>,
    queries: &QuerySet,
    run: &[RankedList],
    workers: usize,
) -> Result<RunOutcome> {
    ctx.config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let results: Vec<(RankedList, Option<RerankTrace>, Option<QueryFailure>)> =
        pool.install(|| {
            run.par_iter()
                .map(|list| {
                    let query = match queries.get(list.query_id()) {
                        Some(q) => q,
                        None => {
                            let failure = QueryFailure {
                                query_id: list.query_id().to_string(),
                                error: Error::UnknownQuery(list.query_id().to_string()).to_string(),
                            };
                            return (list.clone(), None, Some(failure));
                        }
                    };
                    match rerank(ctx, query, list) {
                        Ok((out, trace)) => (out, Some(trace), None),
                        Err(e) => {
                            let failure = QueryFailure {
                                query_id: list.query_id().to_string(),
                                error: e.to_string(),
                            };
                            (list.clone(), None, Some(failure))
                        }
                    }
                })
                .collect()
        });

    let mut outcome = RunOutcome {
        lists: Vec::new(),
        traces: Vec::new(),
        failures: Vec::new(),
    };
    for (list, trace, failure) in results {
        outcome.lists.push(list);
        if let Some(t) = trace {
            outcome.traces.push(t);
        }
        if let Some(f) = failure {
            log::warn!("query {} failed: {}", f.query_id, f.error);
            outcome.failures.push(f);
        }
    }
    Ok(outcome)
}
