//! Shared request-building and response-shaping helpers used by every
//! pipeline stage that asks the backend for a hypothesis list.

use crate::error::{Error, Result};
use crate::gateway::{AgentRole, CompletionClient, CompletionRequest};
use crate::model::{EngineConfig, TaskSpec};
use crate::parse::parse_hypothesis_list;
use crate::template::{RenderContext, RenderedPrompt, TemplateRegistry};

/// Everything a pipeline stage needs to talk to the backend about one task:
/// the task definition, its templates, the completion client, and the model
/// to address. Bundled so stage signatures stay small.
#[derive(Clone, Copy)]
pub struct PipelineContext<'a> {
    pub task: &'a TaskSpec,
    pub registry: &'a TemplateRegistry,
    pub gateway: &'a dyn CompletionClient,
    pub model_id: &'a str,
}

/// Build a completion request from a rendered prompt and the engine's
/// sampling knobs.
pub fn make_request(
    model_id: &str,
    prompt: &RenderedPrompt,
    config: &EngineConfig,
) -> CompletionRequest {
    CompletionRequest {
        model_id: model_id.to_string(),
        system: prompt.system.clone(),
        user: prompt.user.clone(),
        temperature: config.temperature,
        max_tokens: config.max_tokens,
    }
}

/// Render `template_id`, send it, and parse a numbered hypothesis list of
/// up to `expected` items.
///
/// When `retry_on_shortfall` is set and the first response yields fewer
/// than `expected` items (or none), the identical request is issued once
/// more — in replay mode that consumes the next recorded response for the
/// same fingerprint. A replay miss on the retry means the recorded session
/// never retried, so the first outcome stands. A persistent empty list is
/// an error; a persistent shortfall is logged and accepted.
pub fn request_hypothesis_list(
    gateway: &dyn CompletionClient,
    role: AgentRole,
    registry: &TemplateRegistry,
    template_id: &str,
    context: &RenderContext,
    model_id: &str,
    config: &EngineConfig,
    expected: usize,
    retry_on_shortfall: bool,
) -> Result<Vec<String>> {
    let prompt = registry.render(template_id, context)?;
    let request = make_request(model_id, &prompt, config);
    let response = gateway.complete(role, &request)?;
    let first = parse_hypothesis_list(&response.text, expected);
    let shortfall = match &first {
        Ok(items) => items.len() < expected,
        Err(_) => true,
    };
    if !(shortfall && retry_on_shortfall) {
        return finish(role, template_id, expected, first);
    }

    log::warn!(
        "{role} returned {} of {expected} expected hypotheses; retrying once",
        first.as_ref().map(Vec::len).unwrap_or(0)
    );
    match gateway.complete(role, &request) {
        Ok(retry_response) => {
            let retried = parse_hypothesis_list(&retry_response.text, expected);
            match (&first, &retried) {
                // Keep whichever attempt produced more items.
                (Ok(a), Ok(b)) if b.len() <= a.len() => {
                    finish(role, template_id, expected, first)
                }
                (_, Ok(_)) => finish(role, template_id, expected, retried),
                (Ok(_), Err(_)) => finish(role, template_id, expected, first),
                (Err(_), Err(_)) => finish(role, template_id, expected, retried),
            }
        }
        // The recorded session never retried here; the first outcome stands.
        Err(Error::ReplayMiss { .. }) => finish(role, template_id, expected, first),
        Err(other) => Err(other),
    }
}

fn finish(
    role: AgentRole,
    template_id: &str,
    expected: usize,
    parsed: Result<Vec<String>>,
) -> Result<Vec<String>> {
    let items = parsed?;
    if items.len() < expected {
        log::warn!(
            "{role} ({template_id}) produced {} of {expected} requested hypotheses; proceeding with the shortfall",
            items.len()
        );
    }
    Ok(items)
}
