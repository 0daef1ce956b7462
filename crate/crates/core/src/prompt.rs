//! Listwise instruction-prompt rendering under a token budget.
//!
//! The default template is the standard listwise ranking instruction used by
//! RankGPT-style rerankers, embedded verbatim. Custom templates use the same
//! placeholder grammar: `{num}` and `{query}` anywhere, plus a passage block
//! that starts at a line beginning with `[1]` and ends at the line containing
//! `[{num}]`. The `[1]` line is the per-passage pattern; titles are rendered
//! for every passage uniformly.
//!
//! Token budgets use a model-agnostic estimate (whitespace words x 1.5,
//! rounded up). When a rendered prompt exceeds `max_units`, the per-passage
//! word cap is halved repeatedly (floor 8) until the prompt fits.

use std::path::Path;

use crate::error::{Error, Result};
use crate::permutation::Permutation;

/// Largest window the template supports; identifiers are `[1]`..`[100]`.
pub const MAX_WINDOW: usize = 100;

const DEFAULT_TEMPLATE: &str = "I will provide you with {num} passages, each
indicated by a numerical identifier []. Rank the
passages based on their relevance to the search
query: {query}.
[1] {title 1} {passage 1}
[2] {title 2} {passage 2}
...
[{num}] {passage {num}}
Search Query: {query}.
Rank the {num} passages above based on their
relevance to the search query. All the passages
should be included and listed using identifiers, in
descending order of relevance. The output format
should be [] > [], e.g., [4] > [2]. Only respond
with the ranking results, do not say any word
or explain.";

/// Approximate token cap and per-passage word cap for prompt rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PromptBudget {
    /// Approximate token cap for the whole prompt (words x 1.5, rounded up).
    pub max_units: usize,
    /// Maximum whitespace-delimited words kept per passage body.
    pub per_passage_cap: usize,
}

impl Default for PromptBudget {
    fn default() -> Self {
        Self {
            max_units: 4096,
            per_passage_cap: 120,
        }
    }
}

impl PromptBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_units == 0 || self.per_passage_cap == 0 {
            return Err(Error::Config("prompt budget fields must be > 0".into()));
        }
        Ok(())
    }
}

/// One passage as seen by the prompt renderer.
#[derive(Debug, Clone, Copy)]
pub struct PromptPassage<'a> {
    pub title: &'a str,
    pub body: &'a str,
}

/// A parsed listwise prompt template: header, per-passage pattern, footer.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    header: String,
    passage_pattern: String,
    footer: String,
}

/// A rendered prompt plus the per-passage cap that made it fit the budget.
#[derive(Debug, Clone)]
pub struct RenderedPrompt {
    pub text: String,
    /// Effective per-passage word cap after any budget-driven halving.
    pub per_passage_cap: usize,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("embedded template is well-formed")
    }
}

impl PromptTemplate {
    /// Parse template text into header, passage pattern, and footer.
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.split('\n').collect();
        let first = lines
            .iter()
            .position(|l| l.starts_with("[1]"))
            .ok_or_else(|| Error::InvalidTemplate("no passage line starting with `[1]`".into()))?;
        if !lines[first].contains("{passage 1}") {
            return Err(Error::InvalidTemplate(
                "`[1]` line lacks a `{passage 1}` placeholder".into(),
            ));
        }
        let last = lines
            .iter()
            .position(|l| l.contains("[{num}]"))
            .ok_or_else(|| Error::InvalidTemplate("no closing `[{num}]` line".into()))?;
        if last < first {
            return Err(Error::InvalidTemplate(
                "`[{num}]` line precedes the `[1]` line".into(),
            ));
        }
        Ok(Self {
            header: format!("{}\n", lines[..first].join("\n")),
            passage_pattern: lines[first].to_string(),
            footer: lines[last + 1..].join("\n"),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Render the prompt for one window, truncating passage bodies until
    /// the estimated unit count fits the budget.
    pub fn render(
        &self,
        query: &str,
        passages: &[PromptPassage<'_>],
        budget: PromptBudget,
    ) -> Result<RenderedPrompt> {
        budget.validate()?;
        if passages.is_empty() {
            return Err(Error::EmptyWindow);
        }
        if passages.len() > MAX_WINDOW {
            return Err(Error::WindowTooLarge(passages.len(), MAX_WINDOW));
        }
        let mut cap = budget.per_passage_cap;
        loop {
            let text = self.render_with_cap(query, passages, cap);
            if estimate_units(&text) <= budget.max_units {
                return Ok(RenderedPrompt {
                    text,
                    per_passage_cap: cap,
                });
            }
            if cap <= 8 {
                return Err(Error::BudgetUnsatisfiable {
                    max_units: budget.max_units,
                    cap,
                });
            }
            cap = (cap / 2).max(8);
        }
    }

    fn render_with_cap(&self, query: &str, passages: &[PromptPassage<'_>], cap: usize) -> String {
        let num = passages.len().to_string();
        let mut out = substitute(&self.header, &[("{num}", &num), ("{query}", query)]);
        for (i, p) in passages.iter().enumerate() {
            let ident = format!("[{}]", i + 1);
            let body = truncate_words(p.body, cap);
            out.push_str(&substitute(
                &self.passage_pattern,
                &[
                    ("[1]", &ident),
                    ("{title 1}", p.title),
                    ("{passage 1}", &body),
                ],
            ));
            out.push('\n');
        }
        out.push_str(&substitute(
            &self.footer,
            &[("{num}", &num), ("{query}", query)],
        ));
        out
    }
}

/// Keep the first `cap` whitespace-delimited words. Bodies already within
/// the cap pass through byte-identical.
pub fn truncate_words(body: &str, cap: usize) -> String {
    if body.split_whitespace().count() <= cap {
        body.to_string()
    } else {
        body.split_whitespace()
            .take(cap)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Model-agnostic token estimate: whitespace words x 1.5, rounded up.
pub fn estimate_units(text: &str) -> usize {
    let words = text.split_whitespace().count();
    (words * 3).div_ceil(2)
}

/// Serialize a permutation as a completion: `[4] > [5] > [2] > [3] > [1]`.
pub fn render_completion(permutation: &Permutation) -> String {
    permutation
        .order()
        .iter()
        .map(|v| format!("[{v}]"))
        .collect::<Vec<_>>()
        .join(" > ")
}

/// Single-pass token substitution; replaced values are never rescanned.
fn substitute(pattern: &str, replacements: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(pattern.len());
    let mut rest = pattern;
    while !rest.is_empty() {
        let hit = replacements
            .iter()
            .filter_map(|&(tok, val)| rest.find(tok).map(|at| (at, tok, val)))
            .min_by_key(|&(at, tok, _)| (at, std::cmp::Reverse(tok.len())));
        match hit {
            Some((at, tok, val)) => {
                out.push_str(&rest[..at]);
                out.push_str(val);
                rest = &rest[at + tok.len()..];
            }
            None => {
                out.push_str(rest);
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn passage<'a>(title: &'a str, body: &'a str) -> PromptPassage<'a> {
        PromptPassage { title, body }
    }

    fn window(n: usize) -> Vec<(String, String)> {
        (1..=n)
            .map(|i| (format!("Title {i}"), format!("body words for passage {i}")))
            .collect()
    }

    fn as_refs(owned: &[(String, String)]) -> Vec<PromptPassage<'_>> {
        owned.iter().map(|(t, b)| passage(t, b)).collect()
    }

    #[test]
    fn render_matches_template_shape() {
        let owned = window(5);
        let tpl = PromptTemplate::default();
        let out = tpl
            .render("test query", &as_refs(&owned), PromptBudget::default())
            .unwrap();
        assert!(out
            .text
            .starts_with("I will provide you with 5 passages, each\n"));
        assert!(out
            .text
            .ends_with("with the ranking results, do not say any word\nor explain."));
        for i in 1..=5 {
            let line = format!("[{i}] Title {i} body words for passage {i}");
            assert_eq!(out.text.matches(&line).count(), 1, "missing line {i}");
        }
        // the query appears exactly twice: header and the Search Query line
        assert_eq!(out.text.matches("test query").count(), 2);
        assert!(out.text.contains("Search Query: test query.\n"));
    }

    #[test]
    fn render_identifier_appears_once_per_passage() {
        let owned = window(12);
        let tpl = PromptTemplate::default();
        let out = tpl
            .render("q", &as_refs(&owned), PromptBudget::default())
            .unwrap();
        for i in 1..=12 {
            let ident = format!("\n[{i}] ");
            assert_eq!(out.text.matches(&ident).count(), 1);
        }
    }

    #[test]
    fn render_is_deterministic() {
        let owned = window(3);
        let tpl = PromptTemplate::default();
        let a = tpl
            .render("q", &as_refs(&owned), PromptBudget::default())
            .unwrap();
        let b = tpl
            .render("q", &as_refs(&owned), PromptBudget::default())
            .unwrap();
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn generous_budget_keeps_body_untruncated() {
        let body = "alpha  beta\tgamma"; // odd whitespace must survive untruncated
        let tpl = PromptTemplate::default();
        let out = tpl
            .render("q", &[passage("t", body)], PromptBudget::default())
            .unwrap();
        assert!(out.text.contains("alpha  beta\tgamma"));
    }

    #[test]
    fn long_body_truncated_to_cap_words() {
        let body = vec!["w"; 1000].join(" ");
        let tpl = PromptTemplate::default();
        let budget = PromptBudget {
            max_units: 100_000,
            per_passage_cap: 120,
        };
        let out = tpl.render("q", &[passage("t", &body)], budget).unwrap();
        let line = out.text.lines().find(|l| l.starts_with("[1]")).unwrap();
        // "[1]" + "t" + 120 body words
        assert_eq!(line.split_whitespace().count(), 2 + 120);
        assert_eq!(out.per_passage_cap, 120);
    }

    #[test]
    fn tight_budget_halves_cap() {
        let owned: Vec<(String, String)> = (0..4)
            .map(|i| (format!("t{i}"), vec!["w"; 200].join(" ")))
            .collect();
        let tpl = PromptTemplate::default();
        let budget = PromptBudget {
            max_units: 400,
            per_passage_cap: 120,
        };
        let out = tpl.render("q", &as_refs(&owned), budget).unwrap();
        assert!(out.per_passage_cap < 120);
        assert!(estimate_units(&out.text) <= 400);
    }

    #[test]
    fn unsatisfiable_budget_is_error() {
        let owned = window(20);
        let tpl = PromptTemplate::default();
        let budget = PromptBudget {
            max_units: 10,
            per_passage_cap: 120,
        };
        assert!(matches!(
            tpl.render("q", &as_refs(&owned), budget),
            Err(Error::BudgetUnsatisfiable { .. })
        ));
    }

    #[test]
    fn empty_window_is_error() {
        let tpl = PromptTemplate::default();
        assert!(matches!(
            tpl.render("q", &[], PromptBudget::default()),
            Err(Error::EmptyWindow)
        ));
    }

    #[test]
    fn oversize_window_is_error() {
        let owned = window(101);
        let tpl = PromptTemplate::default();
        assert!(matches!(
            tpl.render(
                "q",
                &as_refs(&owned),
                PromptBudget {
                    max_units: 1_000_000,
                    per_passage_cap: 120
                }
            ),
            Err(Error::WindowTooLarge(101, 100))
        ));
    }

    #[test]
    fn empty_title_renders_as_empty_string() {
        let tpl = PromptTemplate::default();
        let out = tpl
            .render("q", &[passage("", "body")], PromptBudget::default())
            .unwrap();
        assert!(out.text.contains("[1]  body"), "{}", out.text);
    }

    #[test]
    fn render_completion_examples() {
        let p = Permutation::new(vec![4, 5, 2, 3, 1]).unwrap();
        assert_eq!(render_completion(&p), "[4] > [5] > [2] > [3] > [1]");
        assert_eq!(render_completion(&Permutation::identity(1)), "[1]");
        assert_eq!(
            render_completion(&Permutation::identity(3)),
            "[1] > [2] > [3]"
        );
    }

    #[test]
    fn custom_template_roundtrip() {
        let text = "Rank for {query} ({num} items):\n[1] {title 1} :: {passage 1}\n[{num}] last\nAnswer now.";
        let tpl = PromptTemplate::parse(text).unwrap();
        let out = tpl
            .render(
                "q",
                &[passage("T", "B"), passage("U", "C")],
                PromptBudget::default(),
            )
            .unwrap();
        assert_eq!(
            out.text,
            "Rank for q (2 items):\n[1] T :: B\n[2] U :: C\nAnswer now."
        );
    }

    #[test]
    fn template_without_passage_block_is_error() {
        assert!(PromptTemplate::parse("no block at all {num}").is_err());
        assert!(PromptTemplate::parse("[1] {passage 1}\nno closing line").is_err());
    }

    #[test]
    fn completion_roundtrip_through_parser() {
        let p = Permutation::new(vec![2, 4, 1, 3]).unwrap();
        let report = crate::permutation::parse(&render_completion(&p), 4).unwrap();
        assert_eq!(report.permutation, p);
        assert!(!report.repaired);
    }
}
