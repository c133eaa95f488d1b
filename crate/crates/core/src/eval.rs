//! Inference and evaluation: classify test examples under a hypothesis
//! bank (or a zero/few-shot baseline) and score accuracy and macro-F1.
//!
//! Inference serializes the hypothesis list into a chain-of-thought prompt
//! and extracts the final answer; a response that cannot be resolved to a
//! task label is recorded as a parse failure and scored as incorrect —
//! evaluation never guesses. Evaluation repeats over a list of seeds.
//! The seed is not part of the completion request: with a sampling
//! backend, repeats explore response variability, and under replay each
//! repeat consumes the next recorded response for the same fingerprint.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::AgentRole;
use crate::model::{Dataset, EngineConfig, Example, HypothesisBank};
use crate::ops::{make_request, PipelineContext};
use crate::parse::parse_final_answer;
use crate::template::{format_hypothesis_list, format_shots, RenderContext};

/// Seeds used for evaluation when the caller does not supply a list.
pub const DEFAULT_SEEDS: [u64; 5] = [11376, 8271, 39660, 543, 3];

/// One classified test example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: String,
    pub gold: String,
    /// Canonical predicted label, or `None` when the response did not
    /// resolve to a task label.
    pub predicted: Option<String>,
    pub parse_ok: bool,
    /// Raw response text, retained for later auditing.
    pub raw_text: String,
}

impl Prediction {
    pub fn correct(&self) -> bool {
        self.predicted.as_deref() == Some(self.gold.as_str())
    }
}

/// Metrics for one evaluation seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub n_examples: usize,
    pub n_parse_failures: usize,
}

/// Metrics across all evaluation seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_seed: Vec<SeedMetrics>,
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
}

/// Predictions produced under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPredictions {
    pub seed: u64,
    pub rows: Vec<Prediction>,
}

/// A full evaluation: metrics plus the per-example rows behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub metrics: MetricsReport,
    pub predictions: Vec<SeedPredictions>,
}

/// Classify one example under a list of hypothesis texts.
///
/// Gateway failures propagate; an unparseable response becomes a
/// `parse_ok = false` prediction scored as incorrect.
pub fn infer_one(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    hypothesis_texts: &[&str],
    example: &Example,
) -> Result<Prediction> {
    let mut context = RenderContext::new().bind("hypotheses", format_hypothesis_list(hypothesis_texts));
    for field in &ctx.task.field_schema {
        let value = example.fields.get(field).map(String::as_str).unwrap_or("");
        context = context.bind(field, value);
    }
    let prompt = ctx.registry.render("inference", &context)?;
    let request = make_request(ctx.model_id, &prompt, config);
    let response = ctx.gateway.complete(AgentRole::Inference, &request)?;
    Ok(to_prediction(ctx, example, response.text))
}

/// Classify one example directly, with optional few-shot demonstrations.
pub fn baseline_one(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    shots: &[Example],
    example: &Example,
) -> Result<Prediction> {
    let mut context = RenderContext::new().bind("examples", format_shots(ctx.task, shots));
    for field in &ctx.task.field_schema {
        let value = example.fields.get(field).map(String::as_str).unwrap_or("");
        context = context.bind(field, value);
    }
    let prompt = ctx.registry.render("baseline", &context)?;
    let request = make_request(ctx.model_id, &prompt, config);
    let response = ctx.gateway.complete(AgentRole::Baseline, &request)?;
    Ok(to_prediction(ctx, example, response.text))
}

fn to_prediction(ctx: &PipelineContext<'_>, example: &Example, raw_text: String) -> Prediction {
    match parse_final_answer(&raw_text, ctx.task) {
        Ok(label) => Prediction {
            example_id: example.id.clone(),
            gold: example.label.clone(),
            predicted: Some(label),
            parse_ok: true,
            raw_text,
        },
        Err(err) => {
            log::debug!("unparseable response for example `{}`: {err}", example.id);
            Prediction {
                example_id: example.id.clone(),
                gold: example.label.clone(),
                predicted: None,
                parse_ok: false,
                raw_text,
            }
        }
    }
}

/// Fraction of predictions that match their gold label. Parse failures
/// count as incorrect. Empty input scores 0.
pub fn accuracy(predictions: &[Prediction]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let correct = predictions.iter().filter(|p| p.correct()).count();
    correct as f64 / predictions.len() as f64
}

/// Unweighted mean of per-class F1 over the full label set. A class with
/// no gold examples and no predictions contributes an F1 of 0, so the
/// metric penalizes both missing and spurious classes.
pub fn macro_f1(label_set: &[String], predictions: &[Prediction]) -> f64 {
    if label_set.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for label in label_set {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for p in predictions {
            let gold_is = p.gold == *label;
            let pred_is = p.predicted.as_deref() == Some(label.as_str());
            match (gold_is, pred_is) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        sum += f1;
    }
    sum / label_set.len() as f64
}

fn seed_metrics(label_set: &[String], seed: u64, rows: &[Prediction]) -> SeedMetrics {
    SeedMetrics {
        seed,
        accuracy: accuracy(rows),
        macro_f1: macro_f1(label_set, rows),
        n_examples: rows.len(),
        n_parse_failures: rows.iter().filter(|p| !p.parse_ok).count(),
    }
}

fn summarize(label_set: &[String], predictions: Vec<SeedPredictions>) -> EvalRun {
    let per_seed: Vec<SeedMetrics> = predictions
        .iter()
        .map(|sp| seed_metrics(label_set, sp.seed, &sp.rows))
        .collect();
    let n = per_seed.len().max(1) as f64;
    let metrics = MetricsReport {
        mean_accuracy: per_seed.iter().map(|m| m.accuracy).sum::<f64>() / n,
        mean_macro_f1: per_seed.iter().map(|m| m.macro_f1).sum::<f64>() / n,
        per_seed,
    };
    EvalRun {
        metrics,
        predictions,
    }
}

/// Evaluate a hypothesis bank on a test set, once per seed. The bank is
/// serialized in its stored order (descending reward) for every inference
/// call.
pub fn evaluate_bank(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    bank: &HypothesisBank,
    test: &Dataset,
    seeds: &[u64],
) -> Result<EvalRun> {
    if bank.is_empty() {
        return Err(Error::InvalidData("cannot evaluate an empty bank".into()));
    }
    if test.is_empty() {
        return Err(Error::InvalidData("cannot evaluate on an empty test set".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one seed".into()));
    }
    let texts: Vec<&str> = bank.entries().iter().map(|h| h.text.as_str()).collect();
    let mut predictions = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut rows = Vec::with_capacity(test.len());
        for example in test.examples() {
            rows.push(infer_one(ctx, config, &texts, example)?);
        }
        predictions.push(SeedPredictions { seed, rows });
    }
    Ok(summarize(&ctx.task.label_set, predictions))
}

/// Which baseline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Instructions only.
    ZeroShot,
    /// Instructions plus `few_shot_k` demonstrations drawn from the
    /// training set under the engine seed.
    FewShot,
}

/// Draw `count` demonstrations from `train` without replacement, in draw
/// order, deterministically under `seed`.
pub fn draw_shots(train: &[Example], count: usize, seed: u64) -> Result<Vec<Example>> {
    if count > train.len() {
        return Err(Error::InsufficientExamples {
            needed: count,
            available: train.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..train.len()).collect();
    let mut shots = Vec::with_capacity(count);
    for _ in 0..count {
        let at = rng.gen_range(0..pool.len());
        shots.push(train[pool.swap_remove(at)].clone());
    }
    Ok(shots)
}

/// Evaluate a zero- or few-shot baseline on a test set, once per seed.
pub fn evaluate_baseline(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    kind: BaselineKind,
    train: &[Example],
    test: &Dataset,
    seeds: &[u64],
) -> Result<EvalRun> {
    if test.is_empty() {
        return Err(Error::InvalidData("cannot evaluate on an empty test set".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one seed".into()));
    }
    let shots = match kind {
        BaselineKind::ZeroShot => Vec::new(),
        BaselineKind::FewShot => draw_shots(train, config.few_shot_k, config.seed)?,
    };
    let mut predictions = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut rows = Vec::with_capacity(test.len());
        for example in test.examples() {
            rows.push(baseline_one(ctx, config, &shots, example)?);
        }
        predictions.push(SeedPredictions { seed, rows });
    }
    Ok(summarize(&ctx.task.label_set, predictions))
}
