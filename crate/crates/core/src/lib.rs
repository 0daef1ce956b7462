//! A retrieval-and-listwise-reranking toolkit.
//!
//! The pipeline, end to end:
//! 1. [`bm25`] builds an inverted index and retrieves top-k candidates.
//! 2. [`prompt`] renders the listwise ranking instruction for a window of
//!    passages under a token budget.
//! 3. [`backend`] produces a ranking completion for each window (remote LLM
//!    over HTTP, or local identity/oracle backends for simulation).
//! 4. [`permutation`] parses completions into valid permutations, repairing
//!    ill-formed output.
//! 5. [`engine`] slides a window back-to-front over each candidate list,
//!    applying backend rankings in place.
//! 6. [`forge`] turns runs plus judgments into listwise fine-tuning data.
//! 7. [`metrics`] scores runs (nDCG@k, Judged@k) and compares them with a
//!    paired t-test; [`analysis`] maps where relevant passages moved.
//!
//! [`data`] holds the domain types and the TREC-style file formats that tie
//! the stages together. The `listrank` binary exposes each stage as a CLI
//! subcommand.

pub mod analysis;
pub mod backend;
pub mod bm25;
pub mod cli;
pub mod data;
pub mod engine;
pub mod error;
pub mod forge;
pub mod metrics;
pub mod permutation;
pub mod prompt;
pub mod util;

pub use error::{Error, Result};
