//! Position-movement analysis of reranking: where relevant passages sit
//! before vs. after, and how much of that movement stays inside the local
//! sliding-window block.
//!
//! The movement matrix counts, per (query, relevant passage) pair present in
//! the top-k of both runs, one hit at (first-stage position, reranked
//! position). Pairs entering or leaving the top-k are excluded from the
//! matrix and reported separately. Diagonal blocks are anchored at multiples
//! of the stride `m` with width `n`, mirroring window placement, so a pair
//! promoted only within its own or the next window stays inside a block.

use std::path::Path;

use crate::data::{Qrels, RankedList};
use crate::error::{Error, Result};
use crate::util::atomic_write;

/// Which judged passages count as relevant for the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradeFilter {
    /// Any grade >= the threshold.
    Min(u8),
    /// Exactly this grade (for per-level heatmaps).
    Exact(u8),
}

impl Default for GradeFilter {
    fn default() -> Self {
        GradeFilter::Min(1)
    }
}

impl GradeFilter {
    pub fn matches(self, grade: u8) -> bool {
        match self {
            GradeFilter::Min(t) => grade >= t,
            GradeFilter::Exact(g) => grade == g,
        }
    }

    /// CLI syntax: `1`, `2`, `3` (exact) or `min:1` (threshold).
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(level) = spec.strip_prefix("min:") {
            let level: u8 = level
                .parse()
                .map_err(|_| Error::Analysis(format!("bad grade filter {spec:?}")))?;
            return Ok(GradeFilter::Min(level));
        }
        let level: u8 = spec
            .parse()
            .map_err(|_| Error::Analysis(format!("bad grade filter {spec:?}")))?;
        Ok(GradeFilter::Exact(level))
    }
}

/// k x k counts of relevant-passage positions: row = first-stage position,
/// column = reranked position, both 0-based internally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MovementMatrix {
    k: usize,
    counts: Vec<u64>,
    /// Relevant pairs present in the top-k of exactly one of the two runs.
    pub excluded: u64,
    pub filter: GradeFilter,
}

impl MovementMatrix {
    fn zeros(k: usize, filter: GradeFilter) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
            excluded: 0,
            filter,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Count at (first-stage position y, reranked position x), 0-based.
    pub fn count(&self, y: usize, x: usize) -> u64 {
        self.counts[y * self.k + x]
    }

    /// Total mass: pairs represented in the matrix.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Iterate non-zero cells as (y, x, count).
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(move |(i, &c)| (i / self.k, i % self.k, c))
    }
}

/// Build the movement matrix for a reranking.
///
/// `before` and `after` must cover the same queries with identical per-query
/// id sets (i.e. `after` is a reranking of `before`).
pub fn movement_matrix(
    before: &[RankedList],
    after: &[RankedList],
    qrels: &Qrels,
    k: usize,
    filter: GradeFilter,
) -> Result<MovementMatrix> {
    if k == 0 {
        return Err(Error::Analysis("k must be >= 1".into()));
    }
    let after_by_id: std::collections::HashMap<&str, &RankedList> =
        after.iter().map(|l| (l.query_id(), l)).collect();
    if before.len() != after.len()
        || before
            .iter()
            .any(|l| !after_by_id.contains_key(l.query_id()))
    {
        return Err(Error::Analysis("runs cover different query sets".into()));
    }

    let mut matrix = MovementMatrix::zeros(k, filter);
    for before_list in before {
        let after_list = after_by_id[before_list.query_id()];
        let mut before_ids: Vec<&str> = before_list.passage_ids().collect();
        let mut after_ids: Vec<&str> = after_list.passage_ids().collect();
        before_ids.sort_unstable();
        after_ids.sort_unstable();
        if before_ids != after_ids {
            return Err(Error::Analysis(format!(
                "query {:?}: after-run id set differs from before-run",
                before_list.query_id()
            )));
        }

        let Some(judged) = qrels.judged(before_list.query_id()) else {
            continue;
        };
        let rank_of = |list: &RankedList, id: &str| -> Option<usize> {
            list.entries().iter().position(|e| e.passage_id == id)
        };
        for (passage_id, &grade) in judged {
            if !filter.matches(grade) {
                continue;
            }
            let Some(y) = rank_of(before_list, passage_id) else {
                continue;
            };
            let Some(x) = rank_of(after_list, passage_id) else {
                continue;
            };
            match (y < k, x < k) {
                (true, true) => matrix.counts[y * k + x] += 1,
                (true, false) | (false, true) => matrix.excluded += 1,
                (false, false) => {}
            }
        }
    }
    Ok(matrix)
}

/// Block-diagonal statistics over a movement matrix.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BlockStats {
    pub block_n: usize,
    pub block_m: usize,
    /// Fraction of matrix mass inside some block
    /// `[b*m, b*m+n) x [b*m, b*m+n)`.
    pub diagonal_block_mass: f64,
    /// Fraction of mass promoted further than a window:
    /// reranked position < first-stage position - n.
    pub long_promotion_mass: f64,
    pub total_pairs: u64,
}

/// Compute block statistics with window size `n` and stride `m` matching the
/// rerank configuration.
pub fn block_stats(matrix: &MovementMatrix, n: usize, m: usize) -> Result<BlockStats> {
    if n < 2 || m == 0 || m >= n {
        return Err(Error::Analysis(format!(
            "inconsistent block geometry n={n} m={m}"
        )));
    }
    let total = matrix.total();
    let mut in_block = 0u64;
    let mut long_promoted = 0u64;
    for (y, x, count) in matrix.cells() {
        // largest block start at or below min(x, y) still covering max(x, y)
        let lo = y.min(x);
        let hi = y.max(x);
        if (lo / m) * m + n > hi {
            in_block += count;
        }
        if x + n < y {
            long_promoted += count;
        }
    }
    let frac = |mass: u64| {
        if total == 0 {
            0.0
        } else {
            mass as f64 / total as f64
        }
    };
    Ok(BlockStats {
        block_n: n,
        block_m: m,
        diagonal_block_mass: frac(in_block),
        long_promotion_mass: frac(long_promoted),
        total_pairs: total,
    })
}

/// CSV serialization: a header row of 1-based reranked positions, then k
/// rows of k integer counts (rows are first-stage positions).
pub fn format_matrix_csv(matrix: &MovementMatrix) -> String {
    let k = matrix.k();
    let mut out = String::new();
    let header: Vec<String> = (1..=k).map(|x| x.to_string()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for y in 0..k {
        let row: Vec<String> = (0..k).map(|x| matrix.count(y, x).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Export the matrix as CSV, atomically.
pub fn export_matrix(matrix: &MovementMatrix, path: &Path) -> Result<()> {
    atomic_write(path, format_matrix_csv(matrix).as_bytes())
}
