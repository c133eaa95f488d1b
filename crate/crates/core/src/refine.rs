//! Alternating refinement of regenerated hypothesis batches.
//!
//! When a regeneration event produces a fresh batch, the batch can be
//! passed through `refine_rounds` rewriting rounds that alternate between
//! two context kinds: the accumulated wrong-example pool (data) and the
//! literature summaries. The first round's kind is configurable; with the
//! default (`data`), round `i` uses data context exactly when `i` is odd.
//!
//! Refinement is best-effort: a failed round keeps the last successful
//! output and truncates the trace, rather than aborting the training step
//! that triggered it. The trace is kept alongside the bank for audit.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gateway::AgentRole;
use crate::literature::{format_summaries, PaperSummary};
use crate::model::{EngineConfig, Example, RefineContextKind};
use crate::ops::{request_hypothesis_list, PipelineContext};
use crate::template::{format_examples, format_hypothesis_list, RenderContext};

/// One completed refinement round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementRound {
    /// 1-based position in the chain.
    pub index: usize,
    pub context: RefineContextKind,
    /// The batch as it stood after this round.
    pub output: Vec<String>,
}

/// The audit record of one refinement chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementTrace {
    /// Step-counter value of the regeneration event that ran this chain.
    pub step: u64,
    pub rounds: Vec<RefinementRound>,
    /// True when a round failed and the chain stopped early.
    pub truncated: bool,
}

/// Context kind for round `i` (1-based): odd rounds use the configured
/// first kind, even rounds the other.
pub fn round_context(config: &EngineConfig, index: usize) -> RefineContextKind {
    let other = match config.first_round {
        RefineContextKind::Data => RefineContextKind::Literature,
        RefineContextKind::Literature => RefineContextKind::Data,
    };
    if index % 2 == 1 {
        config.first_round
    } else {
        other
    }
}

/// Run the configured refinement chain over `initial`.
///
/// Returns the final batch and the trace. With `refine_rounds = 0` this is
/// the identity with an empty trace. Rounds that fail (gateway or parse)
/// stop the chain: the last successful output is returned and the trace is
/// flagged as truncated.
pub fn refine_batch(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    initial: Vec<String>,
    pool: &[Example],
    summaries: &[PaperSummary],
    step: u64,
) -> (Vec<String>, RefinementTrace) {
    let mut current = initial;
    let mut trace = RefinementTrace {
        step,
        rounds: Vec::with_capacity(config.refine_rounds),
        truncated: false,
    };
    for index in 1..=config.refine_rounds {
        let kind = round_context(config, index);
        match refine_round(ctx, config, &current, pool, summaries, kind) {
            Ok(output) => {
                trace.rounds.push(RefinementRound {
                    index,
                    context: kind,
                    output: output.clone(),
                });
                current = output;
            }
            Err(err) => {
                log::warn!(
                    "refinement round {index} ({kind:?}) failed: {err}; keeping the previous batch"
                );
                trace.truncated = true;
                break;
            }
        }
    }
    (current, trace)
}

fn refine_round(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    current: &[String],
    pool: &[Example],
    summaries: &[PaperSummary],
    kind: RefineContextKind,
) -> Result<Vec<String>> {
    let expected = current.len();
    let base = RenderContext::new()
        .bind_count("num_hypotheses", expected)
        .bind("hypotheses", format_hypothesis_list(current));
    let (role, template_id, context) = match kind {
        RefineContextKind::Data => (
            AgentRole::RefinerData,
            "refiner-data",
            base.bind("examples", format_examples(ctx.task, pool)),
        ),
        RefineContextKind::Literature => (
            AgentRole::RefinerLiterature,
            "refiner-literature",
            base.bind("summaries", format_summaries(summaries)),
        ),
    };
    request_hypothesis_list(
        ctx.gateway,
        role,
        ctx.registry,
        template_id,
        &context,
        ctx.model_id,
        config,
        expected,
        false, // a failed round truncates the chain instead of retrying
    )
}
