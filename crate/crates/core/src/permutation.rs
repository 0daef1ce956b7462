//! Parse listwise completions into valid permutations, repairing ill-formed
//! output deterministically.
//!
//! Models prompted for a ranking like `[4] > [2] > ...` routinely emit
//! duplicates, out-of-range identifiers, or surrounding chatter. The repair
//! pipeline is fixed: extract maximal digit runs in order of appearance,
//! keep the first occurrence of each value, drop values outside `[1, n]`,
//! then append missing values in ascending order (i.e. original window
//! order, preserving first-stage evidence for unranked items).

use crate::error::{Error, Result};

/// A bijection on window slots `1..=n`, in ranked order (best first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<u32>,
}

impl Permutation {
    /// Validate that `order` is a bijection on `1..=order.len()`.
    pub fn new(order: Vec<u32>) -> Result<Self> {
        let n = order.len();
        if n == 0 {
            return Err(Error::InvalidPermutation("empty order".into()));
        }
        let mut seen = vec![false; n];
        for &v in &order {
            if v == 0 || v as usize > n {
                return Err(Error::InvalidPermutation(format!(
                    "value {v} outside 1..={n}"
                )));
            }
            if std::mem::replace(&mut seen[v as usize - 1], true) {
                return Err(Error::InvalidPermutation(format!("duplicate value {v}")));
            }
        }
        Ok(Self { order })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            order: (1..=n as u32).collect(),
        }
    }

    /// Window slots in ranked order, 1-based.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.order
            .iter()
            .enumerate()
            .all(|(i, &v)| v as usize == i + 1)
    }

    /// Reorder a window by this permutation: `output[j] = window[order[j] - 1]`.
    pub fn apply<T: Clone>(&self, window: &[T]) -> Result<Vec<T>> {
        if window.len() != self.order.len() {
            return Err(Error::InvalidPermutation(format!(
                "window length {} does not match permutation size {}",
                window.len(),
                self.order.len()
            )));
        }
        Ok(self
            .order
            .iter()
            .map(|&v| window[v as usize - 1].clone())
            .collect())
    }
}

/// Per-anomaly repair counts for one parsed completion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Anomalies {
    /// Occurrences dropped because the value had already appeared.
    pub duplicate: u32,
    /// Distinct values dropped because they fell outside `[1, n]`.
    pub out_of_range: u32,
    /// Values appended because the completion never mentioned them.
    pub missing: u32,
    /// 1 if the completion was not exactly a `[a] > [b] > ...` ranking
    /// (modulo surrounding whitespace), else 0.
    pub garbage_text: u32,
}

impl Anomalies {
    pub fn any(&self) -> bool {
        self.duplicate > 0 || self.out_of_range > 0 || self.missing > 0 || self.garbage_text > 0
    }

    pub fn add(&mut self, other: &Anomalies) {
        self.duplicate += other.duplicate;
        self.out_of_range += other.out_of_range;
        self.missing += other.missing;
        self.garbage_text += other.garbage_text;
    }
}

/// Outcome of parsing one completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseReport {
    pub permutation: Permutation,
    /// True iff any repair was applied (any anomaly count > 0).
    pub repaired: bool,
    pub anomalies: Anomalies,
}

/// Maximal digit runs in order of appearance; runs too long for u64 count
/// as out-of-range sentinels.
fn extract_numbers(text: &str) -> Vec<u64> {
    let mut out = Vec::new();
    let mut current: Option<u64> = None;
    for c in text.chars() {
        if let Some(d) = c.to_digit(10) {
            let next = current
                .unwrap_or(0)
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(d)))
                .unwrap_or(u64::MAX);
            current = Some(next);
        } else if let Some(v) = current.take() {
            out.push(v);
        }
    }
    if let Some(v) = current {
        out.push(v);
    }
    out
}

/// Parse an LLM completion into a permutation of `1..=n`, repairing
/// deterministically. Errors only when no in-range identifier is present at
/// all, which signals a backend failure to the caller.
pub fn parse(completion: &str, n: usize) -> Result<ParseReport> {
    if n == 0 {
        return Err(Error::InvalidPermutation("window size 0".into()));
    }
    let extracted = extract_numbers(completion);
    if !extracted.iter().any(|&v| v >= 1 && v <= n as u64) {
        return Err(Error::UnusableCompletion {
            n,
            completion: completion.to_string(),
        });
    }

    let mut anomalies = Anomalies::default();

    // keep first occurrence of each value
    let mut deduped: Vec<u64> = Vec::with_capacity(extracted.len());
    for &v in &extracted {
        if deduped.contains(&v) {
            anomalies.duplicate += 1;
        } else {
            deduped.push(v);
        }
    }

    // drop out-of-range values
    let mut order: Vec<u32> = Vec::with_capacity(n);
    for v in deduped {
        if v >= 1 && v <= n as u64 {
            order.push(v as u32);
        } else {
            anomalies.out_of_range += 1;
        }
    }

    // append missing values in ascending order
    let mut present = vec![false; n];
    for &v in &order {
        present[v as usize - 1] = true;
    }
    for v in 1..=n as u32 {
        if !present[v as usize - 1] {
            order.push(v);
            anomalies.missing += 1;
        }
    }

    // anything beyond the canonical "[a] > [b] > ..." shape is garbage text
    let canonical = render_ranking(&extracted);
    if completion.trim() != canonical {
        anomalies.garbage_text = 1;
    }

    let permutation = Permutation::new(order)?;
    Ok(ParseReport {
        repaired: anomalies.any(),
        permutation,
        anomalies,
    })
}

fn render_ranking(values: &[u64]) -> String {
    values
        .iter()
        .map(|v| format!("[{v}]"))
        .collect::<Vec<_>>()
        .join(" > ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_well_formed_completion() {
        let r = parse("[4] > [5] > [2] > [3] > [1]", 5).unwrap();
        assert_eq!(r.permutation.order(), &[4, 5, 2, 3, 1]);
        assert!(!r.repaired);
        assert_eq!(r.anomalies, Anomalies::default());
    }

    #[test]
    fn parse_repairs_duplicate_and_missing() {
        let r = parse("[2] > [2] > [1]", 3).unwrap();
        assert_eq!(r.permutation.order(), &[2, 1, 3]);
        assert!(r.repaired);
        assert_eq!(r.anomalies.duplicate, 1);
        assert_eq!(r.anomalies.missing, 1);
        assert_eq!(r.anomalies.out_of_range, 0);
        assert_eq!(r.anomalies.garbage_text, 0);
    }

    #[test]
    fn parse_drops_out_of_range_and_flags_garbage() {
        // hand trace: extract (7,1,9); 7 and 9 dropped; 2,3 appended
        let r = parse("Sure! Ranking: [7] > [1] > [9]", 3).unwrap();
        assert_eq!(r.permutation.order(), &[1, 2, 3]);
        assert_eq!(r.anomalies.out_of_range, 2);
        assert_eq!(r.anomalies.missing, 2);
        assert_eq!(r.anomalies.garbage_text, 1);
        assert!(r.repaired);
    }

    #[test]
    fn parse_unusable_completion_is_error() {
        assert!(matches!(
            parse("no identifiers here", 3),
            Err(Error::UnusableCompletion { .. })
        ));
        assert!(matches!(
            parse("[9] > [12]", 3),
            Err(Error::UnusableCompletion { .. })
        ));
    }

    #[test]
    fn parse_surrounding_whitespace_is_not_garbage() {
        let r = parse("  [2] > [1]\n", 2).unwrap();
        assert!(!r.repaired);
    }

    #[test]
    fn parse_trailing_punctuation_counts_as_garbage() {
        let r = parse("[2] > [1].", 2).unwrap();
        assert_eq!(r.permutation.order(), &[2, 1]);
        assert_eq!(r.anomalies.garbage_text, 1);
        assert!(r.repaired);
    }

    #[test]
    fn parse_multidigit_identifiers() {
        let completion: String = (1..=100)
            .rev()
            .map(|i| format!("[{i}]"))
            .collect::<Vec<_>>()
            .join(" > ");
        let r = parse(&completion, 100).unwrap();
        assert!(!r.repaired);
        assert_eq!(r.permutation.order()[0], 100);
        assert_eq!(r.permutation.order()[99], 1);
    }

    #[test]
    fn parse_huge_number_is_out_of_range_not_panic() {
        let r = parse("[99999999999999999999999999] > [1] > [2]", 2).unwrap();
        assert_eq!(r.permutation.order(), &[1, 2]);
        assert_eq!(r.anomalies.out_of_range, 1);
    }

    #[test]
    fn apply_reorders_window() {
        let p = Permutation::new(vec![3, 1, 2]).unwrap();
        let out = p.apply(&["a", "b", "c"]).unwrap();
        assert_eq!(out, vec!["c", "a", "b"]);
    }

    #[test]
    fn apply_identity_is_noop() {
        let p = Permutation::identity(3);
        assert_eq!(p.apply(&[10, 20, 30]).unwrap(), vec![10, 20, 30]);
    }

    #[test]
    fn apply_length_mismatch_is_error() {
        let p = Permutation::new(vec![1, 2]).unwrap();
        assert!(p.apply(&["a"]).is_err());
    }

    #[test]
    fn apply_then_inverse_restores_window() {
        let p = Permutation::new(vec![3, 1, 4, 2]).unwrap();
        // inverse[p[j]-1] = j+1
        let mut inv = vec![0u32; p.len()];
        for (j, &v) in p.order().iter().enumerate() {
            inv[v as usize - 1] = j as u32 + 1;
        }
        let inv = Permutation::new(inv).unwrap();
        let window = vec!["w", "x", "y", "z"];
        let there = p.apply(&window).unwrap();
        let back = inv.apply(&there).unwrap();
        assert_eq!(back, window);
    }

    #[test]
    fn permutation_rejects_invalid() {
        assert!(Permutation::new(vec![]).is_err());
        assert!(Permutation::new(vec![1, 1]).is_err());
        assert!(Permutation::new(vec![0, 1]).is_err());
        assert!(Permutation::new(vec![1, 3]).is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        /// Any string with at least one in-range token parses to a valid permutation.
        #[test]
        fn parse_always_valid(
            junk in "[ -~]{0,60}",
            n in 1usize..=20,
            pick in 0u32..20,
            split in 0usize..60,
        ) {
            let forced = pick % n as u32 + 1;
            let at = split.min(junk.len());
            // keep the forced token a maximal digit run
            let input = format!("{} {} {}", &junk[..at], forced, &junk[at..]);
            let report = parse(&input, n).unwrap();
            let perm = report.permutation;
            prop_assert_eq!(perm.len(), n);
            let mut sorted: Vec<u32> = perm.order().to_vec();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (1..=n as u32).collect::<Vec<_>>());
        }

        /// Idempotence through rendering: re-parsing a canonical rendering of a
        /// parse result reproduces it exactly.
        #[test]
        fn parse_idempotent_through_render(
            junk in "[ -~]{0,40}",
            n in 1usize..=20,
            pick in 0u32..20,
        ) {
            let forced = pick % n as u32 + 1;
            let input = format!("{junk} {forced} ");
            let first = parse(&input, n).unwrap();
            let rendered = crate::prompt::render_completion(&first.permutation);
            let second = parse(&rendered, n).unwrap();
            prop_assert_eq!(second.permutation, first.permutation);
            prop_assert!(!second.repaired);
        }
    }
}
