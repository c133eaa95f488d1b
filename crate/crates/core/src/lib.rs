//! Generate, refine, rank, and evaluate natural-language hypotheses for
//! classification tasks.
//!
//! The library wraps an LLM behind a record/replay [`gateway`] and builds
//! on it in layers:
//!
//! - [`model`] — tasks, examples, hypotheses, banks, reward, configuration;
//! - [`template`] — prompt templates and serialization of examples,
//!   hypothesis lists, and summaries into prompt blocks;
//! - [`parse`] — extraction of hypothesis lists, final answers, and
//!   yes/no verdicts from model responses;
//! - [`literature`] — document summarization and literature-driven
//!   hypothesis generation;
//! - [`engine`] — initial generation plus the online update loop with a
//!   wrong-example pool and reward-ranked bank;
//! - [`refine`] — alternating data/literature refinement of regenerated
//!   batches;
//! - [`combine`] — pairwise redundancy judging, greedy deduplication, and
//!   the union of data-driven and literature banks;
//! - [`eval`] — bank-driven inference, baselines, accuracy and macro-F1;
//! - [`store`] — file formats: datasets, task configs, banks, summaries,
//!   reports, refinement traces.

pub mod combine;
pub mod engine;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod literature;
pub mod model;
pub mod ops;
pub mod parse;
pub mod refine;
pub mod store;
pub mod template;
