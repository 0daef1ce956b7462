//! Shared test fixtures and independent reference oracles.
//!
//! Everything here recomputes expected values from first principles (naive
//! loops, numeric integration) so the implementations under test are checked
//! against a genuinely separate code path.
#![allow(dead_code)]

use std::collections::BTreeMap;

use listrank::data::{Corpus, Judgment, Passage, Qrels, Query, QuerySet, RankedList};
use listrank::metrics::Gain;

/// Deterministic synthetic retrieval task: `num_topics` queries, each with
/// `per_topic` on-topic passages (graded by a fixed cycle) plus shared
/// filler vocabulary so BM25 retrieves deep candidate lists.
pub struct SyntheticTask {
    pub corpus: Corpus,
    pub queries: QuerySet,
    pub qrels: Qrels,
}

/// Grade cycle over each topic's passages: 12 relevant, 13 not.
pub const TOPIC_GRADES: [u8; 25] = [
    3, 3, 2, 2, 2, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
];

pub fn synthetic_task(num_topics: usize, per_topic: usize) -> SyntheticTask {
    let filler = [
        "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
    ];
    let mut passages = Vec::new();
    let mut judgments = Vec::new();
    let mut queries = Vec::new();
    for topic in 0..num_topics {
        let term = format!("topic{topic:02}");
        queries.push(Query {
            id: format!("q{topic:02}"),
            text: format!("{term} common"),
        });
        for j in 0..per_topic {
            let id = format!("d{topic:02}x{j:02}");
            // vary term frequency and length so BM25 scores are distinct-ish
            let tf = 1 + (j % 3);
            let mut words = vec![term.as_str(); tf];
            words.push("common");
            words.push(filler[j % filler.len()]);
            words.push(filler[(j / 2) % filler.len()]);
            let grade = TOPIC_GRADES[j % TOPIC_GRADES.len()];
            judgments.push(Judgment {
                query_id: format!("q{topic:02}"),
                passage_id: id.clone(),
                grade,
            });
            passages.push(Passage {
                id,
                title: format!("Topic {topic} item {j}"),
                body: words.join(" "),
            });
        }
    }
    SyntheticTask {
        corpus: Corpus::new(passages).unwrap(),
        queries: QuerySet::new(queries).unwrap(),
        qrels: Qrels::from_judgments(judgments).unwrap(),
    }
}

/// Serialize a task to corpus/queries/qrels files for CLI-level tests.
pub fn write_task_files(
    task: &SyntheticTask,
    dir: &std::path::Path,
) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    let corpus_path = dir.join("corpus.jsonl");
    let queries_path = dir.join("queries.tsv");
    let qrels_path = dir.join("qrels.txt");

    let mut corpus_lines = String::new();
    for p in task.corpus.iter() {
        corpus_lines.push_str(
            &serde_json::json!({"id": p.id, "title": p.title, "text": p.body}).to_string(),
        );
        corpus_lines.push('\n');
    }
    std::fs::write(&corpus_path, corpus_lines).unwrap();

    let mut query_lines = String::new();
    for q in task.queries.iter() {
        query_lines.push_str(&format!("{}\t{}\n", q.id, q.text));
    }
    std::fs::write(&queries_path, query_lines).unwrap();

    let mut qrels_lines = String::new();
    for j in task.qrels.iter() {
        qrels_lines.push_str(&format!("{} 0 {} {}\n", j.query_id, j.passage_id, j.grade));
    }
    std::fs::write(&qrels_path, qrels_lines).unwrap();

    (corpus_path, queries_path, qrels_path)
}

/// Naive nDCG reference: explicit loops, `ln(x)/ln(2)` discounts, ideal over
/// all judged passages. Returns per-query values and excluded queries.
pub fn ndcg_oracle(
    run: &[RankedList],
    qrels: &Qrels,
    k: usize,
    gain: Gain,
) -> (BTreeMap<String, f64>, Vec<String>) {
    let g = |grade: u8| -> f64 {
        match gain {
            Gain::Linear => grade as f64,
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    };
    let mut per_query = BTreeMap::new();
    let mut excluded = Vec::new();
    for list in run {
        let judged = qrels.judged(list.query_id());
        let mut ideal: Vec<f64> = judged
            .map(|m| m.values().map(|&gr| g(gr)).collect())
            .unwrap_or_default();
        ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut idcg = 0.0;
        for (i, gain_value) in ideal.iter().take(k).enumerate() {
            idcg += gain_value / (((i + 2) as f64).ln() / 2f64.ln());
        }
        if idcg <= 0.0 {
            excluded.push(list.query_id().to_string());
            continue;
        }
        let mut dcg = 0.0;
        for (i, entry) in list.entries().iter().take(k).enumerate() {
            let grade = qrels.grade(list.query_id(), &entry.passage_id).unwrap_or(0);
            dcg += g(grade) / (((i + 2) as f64).ln() / 2f64.ln());
        }
        per_query.insert(list.query_id().to_string(), dcg / idcg);
    }
    (per_query, excluded)
}

/// Adaptive Simpson quadrature.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 60)
}

/// Integrate `f` over `[from, +inf)` via the substitution `x = from + u/(1-u)`.
fn integrate_to_infinity(f: &dyn Fn(f64) -> f64, from: f64, limit_at_inf: f64, tol: f64) -> f64 {
    let h = move |u: f64| {
        if u >= 1.0 {
            return limit_at_inf;
        }
        let rest = 1.0 - u;
        let x = from + u / rest;
        let v = f(x) / (rest * rest);
        if v.is_finite() {
            v
        } else {
            limit_at_inf
        }
    };
    adaptive_simpson(&h, 0.0, 1.0, tol)
}

/// Two-tailed Student-t p-value by numeric integration of the unnormalized
/// density; no gamma functions involved, so it is independent of the
/// incomplete-beta route used by the implementation.
pub fn t_two_tailed_p_by_integration(t: f64, df: usize) -> f64 {
    let nu = df as f64;
    let density = move |x: f64| (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    // limit of density(x)/(1-u)^2 as x -> inf is 0 for nu > 1 and 1 for nu = 1
    let limit = if df == 1 { 1.0 } else { 0.0 };
    let half_total = integrate_to_infinity(&density, 0.0, limit, 1e-13);
    let tail = integrate_to_infinity(&density, t.abs(), limit, 1e-13);
    (tail / half_total).min(1.0)
}

/// Naive paired t statistic from first principles.
pub fn paired_t_oracle(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    mean / (var / n).sqrt()
}

/// Brute-force Kendall tau distance (discordant pair count).
pub fn kendall_tau(a: &[u32], b: &[u32]) -> usize {
    let pos: std::collections::HashMap<u32, usize> =
        b.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut distance = 0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if pos[&a[i]] > pos[&a[j]] {
                distance += 1;
            }
        }
    }
    distance
}

/// Least-squares slope of y over x.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// One-sided (H1: mean > 0) p-value for a sample of values, via the
/// implementation-independent integration CDF.
pub fn one_sided_positive_trend_p(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return if mean > 0.0 { 0.0 } else { 1.0 };
    }
    let t = mean / (var / n).sqrt();
    let two = t_two_tailed_p_by_integration(t, values.len() - 1);
    if t > 0.0 {
        two / 2.0
    } else {
        1.0 - two / 2.0
    }
}
