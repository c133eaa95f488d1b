//! Online hypothesis-generation training loop.
//!
//! The loop maintains a capacity-bounded bank of hypotheses under an
//! exploration-adjusted reward (see [`crate::model::compute_reward`]).
//! Training starts by generating an initial bank from a small batch of
//! examples, then walks the remaining training examples one at a time:
//!
//! 1. the current top-`k` hypotheses each predict the example's label;
//! 2. the step counter advances and every selected hypothesis records
//!    whether it was correct;
//! 3. if at least `w_hyp` of the selected hypotheses were wrong, the
//!    example joins the wrong-example pool;
//! 4. once the pool reaches `w_max` examples, a fresh batch of
//!    `num_per_update` hypotheses is generated from the pool (and, in
//!    refinement mode, rewritten by the alternating refinement chain),
//!    scored on the pool, merged into the bank under the capacity cap,
//!    and the pool is cleared.
//!
//! A gateway or parse failure anywhere in a step aborts that step and
//! leaves the training state exactly as it was before the step began;
//! failed refinement rounds are the one exception (they degrade to the
//! last successful batch instead, see [`crate::refine`]).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::infer_one;
use crate::gateway::AgentRole;
use crate::literature::{format_summaries, PaperSummary};
use crate::model::{EngineConfig, Example, Hypothesis, HypothesisBank, Provenance};
use crate::ops::{request_hypothesis_list, PipelineContext};
use crate::refine::{refine_batch, RefinementTrace};
use crate::template::{format_examples, RenderContext};

/// Which training variant to run.
#[derive(Debug, Clone, Copy)]
pub enum TrainMode<'a> {
    /// Data-only: the initial bank and every regenerated batch come
    /// straight from training examples.
    Hypogenic,
    /// Literature-integrated: the initial generation also sees paper
    /// summaries, and every regenerated batch is passed through the
    /// alternating refinement chain before scoring.
    Hyporefine { summaries: &'a [PaperSummary] },
}

/// Mutable state of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub bank: HypothesisBank,
    /// Examples that defeated the top-`k`, waiting to trigger regeneration.
    pub wrong_pool: Vec<Example>,
    /// Number of reward-counted trials so far (the `t` in the reward).
    pub step: u64,
    pub config: EngineConfig,
    /// Next ordinal per id prefix, so every hypothesis id is unique
    /// within the run.
    id_counters: BTreeMap<&'static str, u64>,
}

impl TrainingState {
    fn next_id(&mut self, prefix: &'static str) -> String {
        let counter = self.id_counters.entry(prefix).or_insert(0);
        *counter += 1;
        format!("{prefix}-{:04}", counter)
    }
}

/// What one update step did, for logging and audit.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub example_id: String,
    /// `(hypothesis id, predicted label, correct)` for each selected
    /// hypothesis, in bank-rank order. Unparseable predictions carry
    /// `None` and count as incorrect.
    pub votes: Vec<(String, Option<String>, bool)>,
    /// The example joined the wrong-example pool.
    pub pooled: bool,
    /// The pool reached `w_max` and a regeneration ran this step.
    pub regenerated: bool,
    /// Refinement audit for the regeneration, when one ran in
    /// refinement mode.
    pub refinement: Option<RefinementTrace>,
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub state: TrainingState,
    pub steps: Vec<StepOutcome>,
}

impl TrainingOutcome {
    /// All refinement traces, in the order the regenerations ran.
    pub fn refinement_traces(&self) -> Vec<&RefinementTrace> {
        self.steps
            .iter()
            .filter_map(|s| s.refinement.as_ref())
            .collect()
    }
}

/// Generate the initial bank from `init_examples` and score every
/// hypothesis on every one of them.
///
/// The generation requests `capacity` hypotheses (the bank starts full
/// when the model complies). Scoring walks hypotheses in list order and,
/// within each, the init examples in order. The step counter starts at
/// the number of init examples when `count_init_in_time` is set, else 0,
/// and the bank is sorted for that step.
pub fn initialize_bank(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    init_examples: &[Example],
    mode: TrainMode<'_>,
) -> Result<TrainingState> {
    config.validate()?;
    if init_examples.is_empty() {
        return Err(Error::InsufficientExamples {
            needed: 1,
            available: 0,
        });
    }
    let base = RenderContext::new()
        .bind_count("num_hypotheses", config.capacity)
        .bind("examples", format_examples(ctx.task, init_examples));
    let (role, template_id, context) = match mode {
        TrainMode::Hypogenic => (AgentRole::Generator, "generator", base),
        TrainMode::Hyporefine { summaries } => (
            AgentRole::GeneratorJoint,
            "generator-joint",
            base.bind("summaries", format_summaries(summaries)),
        ),
    };
    let texts = request_hypothesis_list(
        ctx.gateway,
        role,
        ctx.registry,
        template_id,
        &context,
        ctx.model_id,
        config,
        config.capacity,
        true,
    )?;

    let mut state = TrainingState {
        bank: HypothesisBank::new(config.capacity),
        wrong_pool: Vec::new(),
        step: 0,
        config: config.clone(),
        id_counters: BTreeMap::new(),
    };
    let mut entries = Vec::with_capacity(texts.len());
    for text in texts {
        let id = state.next_id("data");
        entries.push(Hypothesis::new(id, &text, Provenance::Data, 0));
    }
    for hyp in &mut entries {
        for example in init_examples {
            let prediction = infer_one(ctx, config, &[hyp.text.as_str()], example)?;
            hyp.record_trial(prediction.correct());
        }
    }
    for hyp in entries {
        state.bank.push(hyp)?;
    }
    state.step = if config.count_init_in_time {
        init_examples.len() as u64
    } else {
        0
    };
    state.bank.sort_for_reward(state.step, config.alpha);
    Ok(state)
}

/// Run one online update on `example`.
///
/// On success the state is advanced in place and the outcome returned.
/// On any gateway or parse error the state is left untouched (the step
/// effectively never happened), except that refinement-round failures
/// degrade gracefully inside [`refine_batch`].
pub fn update_step(
    ctx: &PipelineContext<'_>,
    state: &mut TrainingState,
    example: &Example,
    mode: TrainMode<'_>,
) -> Result<StepOutcome> {
    let mut work = state.clone();
    let config = work.config.clone();

    // Select the current top-k: the bank is kept sorted for the current
    // step, so selection is a prefix.
    let k_eff = config.k.min(work.bank.len());
    let selected: Vec<(String, String)> = work.bank.entries()[..k_eff]
        .iter()
        .map(|h| (h.id.clone(), h.text.clone()))
        .collect();

    let mut votes = Vec::with_capacity(selected.len());
    for (id, text) in &selected {
        let prediction = infer_one(ctx, &config, &[text.as_str()], example)?;
        let correct = prediction.correct();
        votes.push((id.clone(), prediction.predicted, correct));
    }

    work.step += 1;
    let t_new = work.step;
    for (id, _, correct) in &votes {
        work.bank
            .get_mut(id)
            .expect("selected ids come from the bank")
            .record_trial(*correct);
    }

    let wrong = votes.iter().filter(|(_, _, correct)| !correct).count();
    let pooled = wrong >= config.wrong_threshold();
    if pooled {
        work.wrong_pool.push(example.clone());
    }

    let mut regenerated = false;
    let mut refinement = None;
    if work.wrong_pool.len() >= config.w_max {
        regenerated = true;
        refinement = regenerate(ctx, &config, &mut work, mode, t_new)?;
        work.wrong_pool.clear();
    }

    work.bank.sort_for_reward(t_new, config.alpha);
    let outcome = StepOutcome {
        example_id: example.id.clone(),
        votes,
        pooled,
        regenerated,
        refinement,
    };
    *state = work;
    Ok(outcome)
}

/// Generate `num_per_update` hypotheses from the wrong-example pool,
/// optionally refine them, score them on the pool, and merge them into
/// the bank under the capacity cap.
fn regenerate(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    work: &mut TrainingState,
    mode: TrainMode<'_>,
    t_new: u64,
) -> Result<Option<RefinementTrace>> {
    let pool = work.wrong_pool.clone();
    let context = RenderContext::new()
        .bind_count("num_hypotheses", config.num_per_update)
        .bind("examples", format_examples(ctx.task, &pool));
    let texts = request_hypothesis_list(
        ctx.gateway,
        AgentRole::Generator,
        ctx.registry,
        "generator",
        &context,
        ctx.model_id,
        config,
        config.num_per_update,
        true,
    )?;

    let (final_texts, provenance, trace, prefix) = match mode {
        TrainMode::Hypogenic => (texts, Provenance::Data, None, "data"),
        TrainMode::Hyporefine { summaries } => {
            let (refined, trace) = refine_batch(ctx, config, texts, &pool, summaries, t_new);
            (refined, Provenance::Refined, Some(trace), "ref")
        }
    };

    let mut fresh = Vec::with_capacity(final_texts.len());
    for text in final_texts {
        let id = work.next_id(prefix);
        fresh.push(Hypothesis::new(id, &text, provenance, t_new));
    }
    for hyp in &mut fresh {
        for example in &pool {
            let prediction = infer_one(ctx, config, &[hyp.text.as_str()], example)?;
            hyp.record_trial(prediction.correct());
        }
    }
    work.bank.merge_and_cap(fresh, t_new, config.alpha)?;
    Ok(trace)
}

/// Run a full training pass over `train`: initialize from the first
/// `num_init` examples, then update once per remaining example in order.
pub fn run_training(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    train: &[Example],
    mode: TrainMode<'_>,
) -> Result<TrainingOutcome> {
    config.validate()?;
    if train.len() < config.num_init {
        return Err(Error::InsufficientExamples {
            needed: config.num_init,
            available: train.len(),
        });
    }
    let (init, rest) = train.split_at(config.num_init);
    let mut state = initialize_bank(ctx, config, init, mode)?;
    let mut steps = Vec::with_capacity(rest.len());
    for example in rest {
        let outcome = update_step(ctx, &mut state, example, mode)?;
        if outcome.regenerated {
            log::info!(
                "step {}: regenerated {} hypotheses after example {}",
                state.step,
                config.num_per_update,
                outcome.example_id
            );
        }
        steps.push(outcome);
    }
    Ok(TrainingOutcome { state, steps })
}

/// Generate a bank of hypotheses from the task description alone, with
/// no examples and no scoring.
pub fn generate_zero_shot_bank(
    ctx: &PipelineContext<'_>,
    config: &EngineConfig,
    count: usize,
) -> Result<HypothesisBank> {
    if count == 0 {
        return Err(Error::Config(
            "zero-shot generation needs a positive count".into(),
        ));
    }
    let context = RenderContext::new().bind_count("num_hypotheses", count);
    let texts = request_hypothesis_list(
        ctx.gateway,
        AgentRole::GeneratorZeroShot,
        ctx.registry,
        "generator-zero-shot",
        &context,
        ctx.model_id,
        config,
        count,
        true,
    )?;
    let mut bank = HypothesisBank::new(config.capacity.max(texts.len()));
    for (i, text) in texts.into_iter().enumerate() {
        bank.push(Hypothesis::new(
            format!("zero-{:04}", i + 1),
            &text,
            Provenance::ZeroShot,
            0,
        ))?;
    }
    Ok(bank)
}
