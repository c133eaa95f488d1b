//! Literature pipeline: load a corpus of documents, summarize each one,
//! and generate hypotheses from the summaries alone.
//!
//! Documents are summarized one at a time (long texts are truncated to the
//! configured character budget first); a single generation call then sees
//! all summaries together. Literature hypotheses carry no trial counts —
//! they are scored only if they later enter an online training run — and
//! an optional booster pass rewrites each hypothesis to be more specific.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::AgentRole;
use crate::model::{EngineConfig, Hypothesis, HypothesisBank, Provenance};
use crate::ops::{make_request, request_hypothesis_list, PipelineContext};
use crate::template::RenderContext;

/// One source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperDoc {
    /// Stable identifier; defaults to the file stem when loaded from disk.
    #[serde(default)]
    pub paper_id: String,
    pub title: String,
    pub text: String,
}

/// One summarized document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperSummary {
    pub paper_id: String,
    pub title: String,
    pub summary: String,
}

/// Load every `*.json` document under `dir`, sorted by file name for a
/// stable order. Each file holds one [`PaperDoc`] object.
pub fn load_corpus(dir: &Path) -> Result<Vec<PaperDoc>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidData(format!(
            "no .json documents found in {}",
            dir.display()
        )));
    }
    let mut docs = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut doc: PaperDoc = serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
            path: path.clone(),
            line: 0,
            reason: format!("bad document: {e}"),
        })?;
        if doc.paper_id.is_empty() {
            doc.paper_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        if doc.title.trim().is_empty() || doc.text.trim().is_empty() {
            return Err(Error::InvalidData(format!(
                "document `{}` must have a nonempty title and text",
                doc.paper_id
            )));
        }
        docs.push(doc);
    }
    let mut ids: Vec<&str> = docs.iter().map(|d| d.paper_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != docs.len() {
        return Err(Error::InvalidData("duplicate paper_id in corpus".into()));
    }
    Ok(docs)
}

/// Serialize summaries as title / key-findings blocks, in input order.
pub fn format_summaries(summaries: &[PaperSummary]) -> String {
    summaries
        .iter()
        .map(|s| format!("Title: {}\nKey findings: {}\n", s.title, s.summary))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Summarize each document with one call. Document text beyond the
/// configured character budget is dropped before prompting; an empty
/// summary is an error.
pub fn summarize_corpus(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    docs: &[PaperDoc],
) -> Result<Vec<PaperSummary>> {
    let budget = config.effective_char_budget();
    let mut summaries = Vec::with_capacity(docs.len());
    for doc in docs {
        let body: String = doc.text.chars().take(budget).collect();
        if body.len() < doc.text.len() {
            log::info!(
                "document `{}` truncated to {budget} characters for summarization",
                doc.paper_id
            );
        }
        let context = RenderContext::new()
            .bind("paper_text", format!("Title: {}\n\n{}", doc.title, body));
        let prompt = ctx.registry.render("summarizer", &context)?;
        let request = make_request(ctx.model_id, &prompt, config);
        let response = ctx.gateway.complete(AgentRole::Summarizer, &request)?;
        let summary = response.text.trim().to_string();
        if summary.is_empty() {
            return Err(Error::EmptyResponse);
        }
        summaries.push(PaperSummary {
            paper_id: doc.paper_id.clone(),
            title: doc.title.clone(),
            summary,
        });
    }
    Ok(summaries)
}

/// Generate `count` hypotheses from summaries alone. The resulting bank is
/// unscored (`n_seen = 0` everywhere) and keeps generation order.
pub fn generate_literature_bank(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    summaries: &[PaperSummary],
    count: usize,
) -> Result<HypothesisBank> {
    if summaries.is_empty() {
        return Err(Error::InvalidData(
            "cannot generate from an empty summary list".into(),
        ));
    }
    let context = RenderContext::new()
        .bind_count("num_hypotheses", count)
        .bind("summaries", format_summaries(summaries));
    let texts = request_hypothesis_list(
        ctx.gateway,
        AgentRole::GeneratorLiterature,
        ctx.registry,
        "generator-literature",
        &context,
        ctx.model_id,
        config,
        count,
        true,
    )?;
    let mut bank = HypothesisBank::new(config.capacity.max(count));
    for (i, text) in texts.iter().enumerate() {
        bank.push(Hypothesis::new(
            format!("lit-{:04}", i + 1),
            text,
            Provenance::Literature,
            0,
        ))?;
    }
    Ok(bank)
}

/// Rewrite each hypothesis in place to be more specific, one booster call
/// per hypothesis. Trial counts and ids are preserved; an empty rewrite is
/// an error.
pub fn boost_specificity(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    bank: &mut HypothesisBank,
) -> Result<()> {
    let ids: Vec<String> = bank.entries().iter().map(|h| h.id.clone()).collect();
    for id in ids {
        let original = bank.get(&id).expect("id came from the bank").text.clone();
        let context = RenderContext::new().bind("hypothesis", original);
        let prompt = ctx.registry.render("booster", &context)?;
        let request = make_request(ctx.model_id, &prompt, config);
        let response = ctx.gateway.complete(AgentRole::Booster, &request)?;
        let rewritten = crate::model::normalize_hypothesis_text(&response.text);
        if rewritten.is_empty() {
            return Err(Error::EmptyResponse);
        }
        bank.get_mut(&id).expect("id came from the bank").text = rewritten;
    }
    Ok(())
}
