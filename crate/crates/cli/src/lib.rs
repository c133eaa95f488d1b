//! Command-line front end for the hypothesis pipeline.
//!
//! Subcommands cover the full workflow: ingest and summarize a literature
//! corpus, generate banks (data-driven, literature-driven, refined, or
//! zero-shot), merge banks, and run inference and evaluation. Every
//! command writes a manifest beside its primary output so replay-mode
//! runs are reproducible byte for byte.

pub mod args;
pub mod commands;
pub mod manifest;

use hypogen_core::error::Result;

/// Dispatch a parsed command line.
pub fn run(cli: args::Cli) -> Result<()> {
    match &cli.command {
        args::Command::IngestLiterature(a) => commands::ingest_literature(a),
        args::Command::Summarize(a) => commands::summarize(a),
        args::Command::Generate(a) => commands::generate(a),
        args::Command::Union(a) => commands::union(a),
        args::Command::Infer(a) => commands::infer(a),
        args::Command::Evaluate(a) => commands::evaluate(a, false),
        args::Command::CrossEval(a) => commands::evaluate(a, true),
    }
}
