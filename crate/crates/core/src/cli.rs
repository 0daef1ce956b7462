//! Command-line entry point wiring the pipeline stages together.
//!
//! Subcommands: `index`, `retrieve`, `rerank`, `makedata`, `eval`,
//! `analyze movement`. Every artifact-producing command writes a
//! `<out>.config.json` echo of its resolved configuration alongside the
//! output, and all file writes are atomic (temp file + rename), so a failed
//! run never leaves a partial artifact behind.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::analysis::{self, GradeFilter};
use crate::backend::{
    BackendSpec, HttpBackend, HttpBackendConfig, IdentityBackend, ListwiseBackend, OracleBackend,
    OracleConfig,
};
use crate::bm25::{build_index, Bm25Params, InvertedIndex};
use crate::data::{self, load_corpus, load_qrels, load_queries, load_run, save_run, Qrels};
use crate::engine::{rerank_run, FallbackPolicy, RerankContext, WindowConfig};
use crate::error::{Error, Result};
use crate::forge::{self, ForgeConfig, ForgeOutcome, SilverSource};
use crate::metrics::{judged_at_k, merge_qrels, ndcg_at_k, paired_ttest, Gain, MetricReport};
use crate::prompt::{PromptBudget, PromptTemplate};
use crate::util::atomic_write;

#[derive(Parser, Debug)]
#[command(
    name = "listrank",
    version,
    about = "BM25 retrieval, listwise reranking, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for all randomness (sampling, shuffles, oracle noise).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for per-query parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Log verbosity: error, warn, info, or debug.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a BM25 inverted index from a corpus file.
    Index(IndexArgs),
    /// Retrieve top-k candidates for each query.
    Retrieve(RetrieveArgs),
    /// Rerank a run with a listwise backend using sliding windows.
    Rerank(RerankArgs),
    /// Forge listwise fine-tuning data from runs and judgments.
    Makedata(MakedataArgs),
    /// Score runs with nDCG@k / Judged@k and compare runs.
    Eval(EvalArgs),
    /// Position-movement analysis of a reranking.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug)]
struct IndexArgs {
    /// Corpus file (JSON-lines with id/title/text, or .tsv).
    #[arg(long)]
    corpus: PathBuf,
    /// Output index file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    /// Index file produced by `index`.
    #[arg(long)]
    index: PathBuf,
    /// TSV query file (qid<TAB>text).
    #[arg(long)]
    queries: PathBuf,
    /// Retrieval depth per query.
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 0.9)]
    k1: f64,
    #[arg(long, default_value_t = 0.4)]
    b: f64,
    /// Output TREC run file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum FallbackArg {
    /// Keep a failed window's order and continue.
    KeepOrder,
    /// Mark the whole query as failed.
    FailQuery,
}

#[derive(Args, Debug)]
struct RerankArgs {
    /// Input TREC run of first-stage candidates.
    #[arg(long)]
    run: PathBuf,
    /// Backend selector: identity, oracle[:noise=..,seed=..], or http:<url>#<model>.
    #[arg(long)]
    backend: String,
    /// Corpus file supplying passage titles and bodies.
    #[arg(long)]
    corpus: PathBuf,
    /// TSV query file supplying query text.
    #[arg(long)]
    queries: PathBuf,
    /// Qrels file (required by the oracle backend).
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Sliding window size n.
    #[arg(long, default_value_t = 20)]
    window: usize,
    /// Stride m per step.
    #[arg(long, default_value_t = 10)]
    stride: usize,
    #[arg(long, default_value_t = 1)]
    passes: usize,
    /// Output TREC run file.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON trace of every window decision.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Prompt template file overriding the built-in one.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Approximate prompt token cap.
    #[arg(long, default_value_t = 4096)]
    max_units: usize,
    /// Per-passage word cap before budget-driven halving.
    #[arg(long, default_value_t = 120)]
    per_passage_cap: usize,
    /// Policy when a backend call or parse fails for a window.
    #[arg(long, value_enum, default_value_t = FallbackArg::KeepOrder)]
    fallback: FallbackArg,
    /// Environment variable holding an HTTP bearer token.
    #[arg(long)]
    auth_env: Option<String>,
    /// HTTP request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    /// HTTP retry attempts after the first failure.
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Decoding temperature for the HTTP backend.
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ModeArg {
    Pgt,
    Silver,
}

#[derive(Args, Debug)]
struct MakedataArgs {
    /// Gold-ordering mode.
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Candidate run supplying each query's passage window.
    #[arg(long)]
    candidates: PathBuf,
    /// Silver run file (mode silver).
    #[arg(long, conflicts_with = "silver_from_index")]
    silver: Option<PathBuf>,
    /// Compute BM25 silver internally from this index (mode silver).
    #[arg(long)]
    silver_from_index: Option<PathBuf>,
    /// TSV query file.
    #[arg(long)]
    queries: PathBuf,
    /// Qrels file (required by mode pgt).
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Corpus file supplying passage text.
    #[arg(long)]
    corpus: PathBuf,
    /// Number of queries to sample.
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// Passages per query window.
    #[arg(long, default_value_t = 20)]
    per_query: usize,
    /// Shuffle each input window (seeded) instead of first-stage order.
    #[arg(long, default_value_t = false)]
    shuffle_input: bool,
    /// Output JSONL dataset.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long, default_value_t = 4096)]
    max_units: usize,
    #[arg(long, default_value_t = 120)]
    per_passage_cap: usize,
    #[arg(long, default_value_t = 0.9)]
    k1: f64,
    #[arg(long, default_value_t = 0.4)]
    b: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum GainArg {
    Linear,
    Exp,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Run file to score.
    #[arg(long)]
    run: PathBuf,
    /// Base qrels.
    #[arg(long)]
    qrels: PathBuf,
    /// Additional judgments merged into the base (enriched qrels).
    #[arg(long)]
    add_qrels: Option<PathBuf>,
    /// Comma-separated metrics, e.g. ndcg@10,judged@10.
    #[arg(long, default_value = "ndcg@10,judged@10")]
    metrics: String,
    /// Gain function for nDCG.
    #[arg(long, value_enum, default_value_t = GainArg::Linear)]
    gain: GainArg,
    /// Second run; adds its scores and a paired t-test per metric.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Optional JSON report output.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(subcommand)]
    action: AnalyzeAction,
}

#[derive(Subcommand, Debug)]
enum AnalyzeAction {
    /// Movement matrix of relevant passages: first-stage vs. reranked position.
    Movement(MovementArgs),
}

#[derive(Args, Debug)]
struct MovementArgs {
    /// First-stage run.
    #[arg(long)]
    before: PathBuf,
    /// Reranked run (same queries, same per-query id sets).
    #[arg(long)]
    after: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Matrix dimension: top-k positions on both axes.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Relevance filter: 1|2|3 for an exact grade, or min:<g>.
    #[arg(long, default_value = "min:1")]
    grade: String,
    /// Block width (window size of the rerank under analysis).
    #[arg(long, default_value_t = 20)]
    block_n: usize,
    /// Block anchor stride (stride of the rerank under analysis).
    #[arg(long, default_value_t = 10)]
    block_m: usize,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

/// Parse argv, run the selected subcommand, and return the process exit
/// code: 0 on success, 1 on failure, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(&cli.log_level);
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn init_logging(level: &str) {
    let filter = match level {
        "error" => log::LevelFilter::Error,
        "warn" => log::LevelFilter::Warn,
        "debug" => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    let _ = env_logger::Builder::new().filter_level(filter).try_init();
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Index(args) => cmd_index(cli, args),
        Command::Retrieve(args) => cmd_retrieve(cli, args),
        Command::Rerank(args) => cmd_rerank(cli, args),
        Command::Makedata(args) => cmd_makedata(cli, args),
        Command::Eval(args) => cmd_eval(cli, args),
        Command::Analyze(args) => match &args.action {
            AnalyzeAction::Movement(margs) => cmd_movement(cli, margs),
        },
    }
}

/// Resolve an output path against the global --out-dir.
fn resolve(cli: &Cli, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        cli.out_dir.join(path)
    }
}

/// Write the `<out>.config.json` echo for a produced artifact.
fn write_config_echo(out: &Path, config: serde_json::Value) -> Result<()> {
    let echo_path = PathBuf::from(format!("{}.config.json", out.display()));
    let mut bytes = serde_json::to_vec_pretty(&config)
        .map_err(|e| Error::Config(format!("config echo: {e}")))?;
    bytes.push(b'\n');
    atomic_write(&echo_path, &bytes)
}

fn global_config(cli: &Cli) -> serde_json::Value {
    serde_json::json!({
        "seed": cli.seed,
        "workers": cli.workers,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn cmd_index(cli: &Cli, args: &IndexArgs) -> Result<i32> {
    let corpus = load_corpus(&args.corpus)?;
    let index = build_index(&corpus)?;
    let out = resolve(cli, &args.out);
    index.save(&out)?;
    write_config_echo(
        &out,
        serde_json::json!({
            "command": "index",
            "corpus": args.corpus,
            "out": out,
            "passages": corpus.len(),
            "global": global_config(cli),
        }),
    )?;
    log::info!("indexed {} passages into {}", corpus.len(), out.display());
    Ok(0)
}

fn cmd_retrieve(cli: &Cli, args: &RetrieveArgs) -> Result<i32> {
    let index = InvertedIndex::load(&args.index)?;
    let queries = load_queries(&args.queries)?;
    let params = Bm25Params {
        k1: args.k1,
        b: args.b,
    };
    params.validate()?;
    if args.k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let query_list: Vec<_> = queries.iter().collect();
    let lists = pool.install(|| {
        query_list
            .par_iter()
            .map(|q| index.retrieve(params, q, args.k))
            .collect::<Result<Vec<_>>>()
    })?;
    for list in &lists {
        if list.is_empty() {
            log::warn!("query {} matched no passages", list.query_id());
        }
    }

    let out = resolve(cli, &args.out);
    save_run(&lists, &out)?;
    write_config_echo(
        &out,
        serde_json::json!({
            "command": "retrieve",
            "index": args.index,
            "queries": args.queries,
            "k": args.k,
            "k1": args.k1,
            "b": args.b,
            "out": out,
            "global": global_config(cli),
        }),
    )?;
    log::info!("retrieved {} lists into {}", lists.len(), out.display());
    Ok(0)
}

fn build_backend(
    cli: &Cli,
    args: &RerankArgs,
    qrels: Option<&Arc<Qrels>>,
) -> Result<Box<dyn ListwiseBackend>> {
    match BackendSpec::parse(&args.backend)? {
        BackendSpec::Identity => Ok(Box::new(IdentityBackend)),
        BackendSpec::Oracle { noise, seed } => {
            let qrels = qrels
                .ok_or_else(|| Error::Config("the oracle backend requires --qrels".into()))?
                .clone();
            let config = OracleConfig {
                noise,
                seed: seed.unwrap_or(cli.seed),
            };
            Ok(Box::new(OracleBackend::new(qrels, config)?))
        }
        BackendSpec::Http { url, model } => {
            let config = HttpBackendConfig {
                endpoint: url,
                model,
                temperature: args.temperature,
                timeout: Duration::from_secs(args.timeout_secs),
                max_retries: args.retries,
                auth_env: args.auth_env.clone(),
            };
            Ok(Box::new(HttpBackend::new(config)?))
        }
    }
}

fn cmd_rerank(cli: &Cli, args: &RerankArgs) -> Result<i32> {
    let corpus = load_corpus(&args.corpus)?;
    let queries = load_queries(&args.queries)?;
    let run = load_run(&args.run)?;
    let qrels = args
        .qrels
        .as_deref()
        .map(load_qrels)
        .transpose()?
        .map(Arc::new);
    let backend = build_backend(cli, args, qrels.as_ref())?;
    let template = match &args.template {
        Some(path) => PromptTemplate::from_file(path)?,
        None => PromptTemplate::default(),
    };
    let config = WindowConfig {
        window: args.window,
        stride: args.stride,
        passes: args.passes,
    };
    let ctx = RerankContext {
        backend: backend.as_ref(),
        corpus: &corpus,
        template: &template,
        budget: PromptBudget {
            max_units: args.max_units,
            per_passage_cap: args.per_passage_cap,
        },
        config,
        fallback: match args.fallback {
            FallbackArg::KeepOrder => FallbackPolicy::KeepOrder,
            FallbackArg::FailQuery => FallbackPolicy::FailQuery,
        },
    };

    let outcome = rerank_run(&ctx, &queries, &run, cli.workers)?;

    let out = resolve(cli, &args.out);
    save_run(&outcome.lists, &out)?;
    if let Some(trace_path) = &args.trace {
        let trace_path = resolve(cli, trace_path);
        let trace = serde_json::json!({
            "backend": backend.name(),
            "window": config,
            "queries": outcome.traces,
            "failures": outcome.failures,
        });
        let mut bytes = serde_json::to_vec_pretty(&trace)
            .map_err(|e| Error::Config(format!("trace serialization: {e}")))?;
        bytes.push(b'\n');
        atomic_write(&trace_path, &bytes)?;
    }
    write_config_echo(
        &out,
        serde_json::json!({
            "command": "rerank",
            "run": args.run,
            "backend": args.backend,
            "corpus": args.corpus,
            "queries": args.queries,
            "qrels": args.qrels,
            "window": args.window,
            "stride": args.stride,
            "passes": args.passes,
            "max_units": args.max_units,
            "per_passage_cap": args.per_passage_cap,
            "fallback": format!("{:?}", args.fallback),
            "out": out,
            "trace": args.trace,
            "global": global_config(cli),
        }),
    )?;

    let mut anomalies = crate::permutation::Anomalies::default();
    let mut fallbacks = 0;
    for trace in &outcome.traces {
        anomalies.add(&trace.anomalies);
        fallbacks += trace.fallbacks;
    }
    println!(
        "reranked {} queries ({} failed); window fallbacks: {}; repairs: {} duplicate, {} out-of-range, {} missing, {} garbage",
        outcome.lists.len(),
        outcome.failures.len(),
        fallbacks,
        anomalies.duplicate,
        anomalies.out_of_range,
        anomalies.missing,
        anomalies.garbage_text,
    );
    Ok(if outcome.failures.is_empty() { 0 } else { 1 })
}

fn cmd_makedata(cli: &Cli, args: &MakedataArgs) -> Result<i32> {
    let corpus = load_corpus(&args.corpus)?;
    let queries = load_queries(&args.queries)?;
    let candidates = load_run(&args.candidates)?;
    let template = match &args.template {
        Some(path) => PromptTemplate::from_file(path)?,
        None => PromptTemplate::default(),
    };
    let budget = PromptBudget {
        max_units: args.max_units,
        per_passage_cap: args.per_passage_cap,
    };
    let config = ForgeConfig {
        num_queries: args.n,
        passages_per_query: args.per_query,
        shuffle_input: args.shuffle_input,
        seed: cli.seed,
    };

    let outcome: ForgeOutcome = match args.mode {
        ModeArg::Pgt => {
            let qrels_path = args
                .qrels
                .as_ref()
                .ok_or_else(|| Error::Config("--mode pgt requires --qrels".into()))?;
            let qrels = load_qrels(qrels_path)?;
            forge::forge_pgt(
                &queries,
                &qrels,
                &candidates,
                &corpus,
                &template,
                budget,
                config,
            )?
        }
        ModeArg::Silver => {
            if let Some(silver_path) = &args.silver {
                let silver_run = load_run(silver_path)?;
                forge::forge_silver(
                    &queries,
                    &SilverSource::Run(&silver_run),
                    &candidates,
                    &corpus,
                    &template,
                    budget,
                    config,
                )?
            } else if let Some(index_path) = &args.silver_from_index {
                let index = InvertedIndex::load(index_path)?;
                let params = Bm25Params {
                    k1: args.k1,
                    b: args.b,
                };
                forge::forge_silver(
                    &queries,
                    &SilverSource::Bm25 {
                        index: &index,
                        params,
                    },
                    &candidates,
                    &corpus,
                    &template,
                    budget,
                    config,
                )?
            } else {
                return Err(Error::Config(
                    "--mode silver requires --silver <run> or --silver-from-index <index>".into(),
                ));
            }
        }
    };

    let out = resolve(cli, &args.out);
    forge::export(&outcome.examples, &out)?;
    write_config_echo(
        &out,
        serde_json::json!({
            "command": "makedata",
            "mode": format!("{:?}", args.mode),
            "candidates": args.candidates,
            "silver": args.silver,
            "silver_from_index": args.silver_from_index,
            "queries": args.queries,
            "qrels": args.qrels,
            "corpus": args.corpus,
            "n": args.n,
            "per_query": args.per_query,
            "shuffle_input": args.shuffle_input,
            "max_units": args.max_units,
            "per_passage_cap": args.per_passage_cap,
            "out": out,
            "skipped": outcome.skipped,
            "global": global_config(cli),
        }),
    )?;
    println!(
        "forged {} examples into {} (skipped: {} no-relevant, {} missing-silver, {} short, {} missing-passage)",
        outcome.examples.len(),
        out.display(),
        outcome.skipped.no_relevant,
        outcome.skipped.missing_silver,
        outcome.skipped.short_candidates,
        outcome.skipped.missing_passage,
    );
    Ok(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MetricSpec {
    Ndcg(usize),
    Judged(usize),
}

impl MetricSpec {
    fn parse_list(spec: &str) -> Result<Vec<MetricSpec>> {
        spec.split(',')
            .filter(|s| !s.is_empty())
            .map(|one| {
                let (name, k) = one.split_once('@').unwrap_or((one, "10"));
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::Metric(format!("bad cutoff in metric {one:?}")))?;
                match name {
                    "ndcg" => Ok(MetricSpec::Ndcg(k)),
                    "judged" => Ok(MetricSpec::Judged(k)),
                    _ => Err(Error::Metric(format!(
                        "unknown metric {name:?} (expected ndcg or judged)"
                    ))),
                }
            })
            .collect()
    }

    fn compute(self, run: &[data::RankedList], qrels: &Qrels, gain: Gain) -> Result<MetricReport> {
        match self {
            MetricSpec::Ndcg(k) => ndcg_at_k(run, qrels, k, gain),
            MetricSpec::Judged(k) => judged_at_k(run, qrels, k),
        }
    }
}

fn json_f64(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::json!(v.to_string())
    }
}

fn report_json(report: &MetricReport) -> serde_json::Value {
    serde_json::json!({
        "name": report.name,
        "k": report.k,
        "mean": report.mean,
        "queries": report.per_query.len(),
        "excluded": report.excluded,
        "per_query": report.per_query,
    })
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<i32> {
    let run = load_run(&args.run)?;
    let mut qrels = load_qrels(&args.qrels)?;
    if let Some(extra) = &args.add_qrels {
        let additions = load_qrels(extra)?;
        let enriched = merge_qrels(&qrels, &additions)?;
        log::info!(
            "enriched qrels: {} added, {} duplicates dropped",
            enriched.added,
            enriched.deduplicated
        );
        qrels = enriched.qrels;
    }
    let gain = match args.gain {
        GainArg::Linear => Gain::Linear,
        GainArg::Exp => Gain::Exponential,
    };
    let specs = MetricSpec::parse_list(&args.metrics)?;
    if specs.is_empty() {
        return Err(Error::Metric("no metrics requested".into()));
    }

    let compare_run = args.compare.as_deref().map(load_run).transpose()?;

    let run_label = args.run.display().to_string();
    println!(
        "{:<12} {:<28} {:>10} {:>9} {:>9}",
        "metric", "run", "mean", "queries", "excluded"
    );
    let mut json_metrics = Vec::new();
    let mut json_tests = Vec::new();
    for spec in &specs {
        let report = spec.compute(&run, &qrels, gain)?;
        println!(
            "{:<12} {:<28} {:>10.4} {:>9} {:>9}",
            report.name,
            run_label,
            report.mean,
            report.per_query.len(),
            report.excluded.len()
        );
        let mut entry = serde_json::json!({ "run": report_json(&report) });
        if let Some(other) = &compare_run {
            let other_label = args.compare.as_ref().unwrap().display().to_string();
            let other_report = spec.compute(other, &qrels, gain)?;
            println!(
                "{:<12} {:<28} {:>10.4} {:>9} {:>9}",
                other_report.name,
                other_label,
                other_report.mean,
                other_report.per_query.len(),
                other_report.excluded.len()
            );
            let test = paired_ttest(&report, &other_report)?;
            println!(
                "{:<12} paired t-test: t={:.6}, p={:.6e}, n={}",
                report.name, test.t, test.p, test.n
            );
            entry["compare"] = report_json(&other_report);
            json_tests.push(serde_json::json!({
                "metric": report.name,
                "t": json_f64(test.t),
                "p": test.p,
                "n": test.n,
            }));
        }
        json_metrics.push(entry);
    }

    if let Some(json_path) = &args.json {
        let json_path = resolve(cli, json_path);
        let value = serde_json::json!({
            "run": args.run,
            "qrels": args.qrels,
            "add_qrels": args.add_qrels,
            "compare": args.compare,
            "gain": format!("{:?}", args.gain),
            "metrics": json_metrics,
            "tests": json_tests,
        });
        let mut bytes = serde_json::to_vec_pretty(&value)
            .map_err(|e| Error::Config(format!("json report: {e}")))?;
        bytes.push(b'\n');
        atomic_write(&json_path, &bytes)?;
        write_config_echo(
            &json_path,
            serde_json::json!({
                "command": "eval",
                "run": args.run,
                "qrels": args.qrels,
                "add_qrels": args.add_qrels,
                "metrics": args.metrics,
                "gain": format!("{:?}", args.gain),
                "compare": args.compare,
                "out": json_path,
                "global": global_config(cli),
            }),
        )?;
    }
    Ok(0)
}

fn cmd_movement(cli: &Cli, args: &MovementArgs) -> Result<i32> {
    let before = load_run(&args.before)?;
    let after = load_run(&args.after)?;
    let qrels = load_qrels(&args.qrels)?;
    let filter = GradeFilter::parse(&args.grade)?;
    let matrix = analysis::movement_matrix(&before, &after, &qrels, args.k, filter)?;
    let stats = analysis::block_stats(&matrix, args.block_n, args.block_m)?;

    let out = resolve(cli, &args.out);
    analysis::export_matrix(&matrix, &out)?;
    write_config_echo(
        &out,
        serde_json::json!({
            "command": "analyze movement",
            "before": args.before,
            "after": args.after,
            "qrels": args.qrels,
            "k": args.k,
            "grade": args.grade,
            "block_n": args.block_n,
            "block_m": args.block_m,
            "out": out,
            "stats": stats,
            "global": global_config(cli),
        }),
    )?;
    println!("pairs_in_matrix {}", stats.total_pairs);
    println!("pairs_excluded {}", matrix.excluded);
    println!("diagonal_block_mass {:.6}", stats.diagonal_block_mass);
    println!("long_promotion_mass {:.6}", stats.long_promotion_mass);
    Ok(0)
}
