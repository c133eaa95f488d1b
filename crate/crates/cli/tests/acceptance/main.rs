//! Acceptance suite: one test per release criterion, each printing a
//! `ACCEPTANCE <name>: PASS/FAIL` line (visible with `--nocapture`) and
//! enforcing its runtime budget.
//!
//! The criteria check the algorithmic machinery end to end: the reward
//! formula against a high-precision oracle, the online update loop
//! against an independent straight-line simulator, refinement-chain
//! alternation and its reward-neutrality under identity rewrites, greedy
//! deduplication against a brute-force verifier over every 6x6 matrix,
//! the union composition laws, byte-level determinism of the CLI in
//! replay mode, the parsing corpora, and the metrics against a
//! confusion-matrix oracle.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::panic::AssertUnwindSafe;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use astro_float::{BigFloat, Consts, RoundingMode};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

use hypogen_core::combine::{deduplicate, union_banks, RedundancyMatrix};
use hypogen_core::engine::{initialize_bank, run_training, update_step, TrainMode};
use hypogen_core::eval::{accuracy, macro_f1, Prediction};
use hypogen_core::gateway::{
    AgentRole, CompletionClient, CompletionRequest, CompletionResponse,
};
use hypogen_core::literature::PaperSummary;
use hypogen_core::model::{
    compute_reward, EngineConfig, Example, Hypothesis, HypothesisBank, Provenance,
    RefineContextKind, TaskSpec,
};
use hypogen_core::ops::PipelineContext;
use hypogen_core::parse::{parse_final_answer, parse_hypothesis_list};
use hypogen_core::template::{format_hypothesis_list, TemplateRegistry};

#[path = "../common/mod.rs"]
mod common;

// --------------------------------------------------------------------
// Reporting scaffold
// --------------------------------------------------------------------

/// Run one criterion body, print its PASS/FAIL line, enforce the budget,
/// and fail the test on any error or overrun.
fn report(name: &str, budget_secs: f64, body: impl FnOnce() -> Result<(), String>) {
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed().as_secs_f64();
    let failure = match outcome {
        Ok(Ok(())) if elapsed <= budget_secs => None,
        Ok(Ok(())) => Some(format!(
            "runtime {elapsed:.2}s exceeded the {budget_secs:.0}s budget"
        )),
        Ok(Err(msg)) => Some(msg),
        Err(payload) => Some(
            payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panicked with a non-string payload".into()),
        ),
    };
    match failure {
        None => println!("ACCEPTANCE {name}: PASS ({elapsed:.2}s)"),
        Some(msg) => {
            println!("ACCEPTANCE {name}: FAIL ({elapsed:.2}s) - {msg}");
            panic!("acceptance criterion `{name}` failed: {msg}");
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn line_after<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(prefix))
}

/// Flat index of the unordered pair (i, j), i < j, among n items.
fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// The documented accuracy ordering: descending training accuracy with
/// unscored entries last, ties by more trials, then by id.
fn accuracy_order(entries: &[Hypothesis]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        let acc_a = entries[a].training_accuracy().unwrap_or(f64::NEG_INFINITY);
        let acc_b = entries[b].training_accuracy().unwrap_or(f64::NEG_INFINITY);
        acc_b
            .partial_cmp(&acc_a)
            .unwrap()
            .then_with(|| entries[b].n_seen.cmp(&entries[a].n_seen))
            .then_with(|| entries[a].id.cmp(&entries[b].id))
    });
    order
}

fn scored_hypothesis(id: String, rng: &mut ChaCha8Rng, max_seen: u64) -> Hypothesis {
    let mut h = Hypothesis::new(&id, &format!("rule behind {id}"), Provenance::Data, 0);
    h.n_seen = rng.gen_range(0..=max_seen);
    h.n_correct = if h.n_seen == 0 {
        0
    } else {
        rng.gen_range(0..=h.n_seen)
    };
    h
}

// --------------------------------------------------------------------
// Criterion: reward formula vs. a high-precision oracle
// --------------------------------------------------------------------

#[test]
fn reward_oracle() {
    report("reward-oracle", 5.0, || {
        const P: usize = 192;
        let rm = RoundingMode::ToEven;
        let mut cc =
            Consts::new().map_err(|e| format!("constants cache failed: {e:?}"))?;
        let tolerance = BigFloat::from_f64(1e-12, P);
        let mut rng = ChaCha8Rng::seed_from_u64(0x0001_5EED);
        for i in 0..10_000u32 {
            let n_seen = rng.gen_range(1..=1_000_000u64);
            let n_correct = rng.gen_range(0..=n_seen);
            let t = rng.gen_range(1..=1_000_000u64);
            let alpha: f64 = rng.gen_range(0.0..=2.0);

            let actual = compute_reward(n_correct, n_seen, t, alpha);

            let n_big = BigFloat::from_u64(n_seen, P);
            let acc = BigFloat::from_u64(n_correct, P).div(&n_big, P, rm);
            let bonus = BigFloat::from_u64(t, P)
                .ln(P, rm, &mut cc)
                .div(&n_big, P, rm)
                .sqrt(P, rm)
                .mul(&BigFloat::from_f64(alpha, P), P, rm);
            let oracle = acc.add(&bonus, P, rm);

            let diff = oracle.sub(&BigFloat::from_f64(actual, P), P, rm).abs();
            let within = matches!(diff.cmp(&tolerance), Some(c) if c <= 0);
            ensure!(
                within,
                "tuple #{i} (n_correct={n_correct}, n_seen={n_seen}, t={t}, \
                 alpha={alpha}): reward {actual} deviates from the oracle by \
                 more than 1e-12"
            );
        }
        Ok(())
    });
}

// --------------------------------------------------------------------
// Criterion: online update loop vs. an independent simulator
// --------------------------------------------------------------------

const LOOP_LABELS: [&str; 2] = ["alpha", "beta"];

/// Predetermined verdict for one (hypothesis text, example id) pair.
fn scripted_verdict(seed: u64, rule: &str, example_id: &str) -> bool {
    let digest = Sha256::digest(format!("{seed}|{rule}|{example_id}"));
    digest[0] & 1 == 0
}

fn loop_task() -> TaskSpec {
    TaskSpec {
        task_id: "loop-oracle".into(),
        description: String::new(),
        label_set: LOOP_LABELS.iter().map(|l| l.to_string()).collect(),
        field_schema: vec!["text".into()],
        positional_answers: false,
    }
}

fn loop_registry() -> TemplateRegistry {
    TemplateRegistry::from_toml_str(
        r#"
[templates.generator]
system = "propose rules"
user = "Propose <num_hypotheses> rules from:\n<examples>"
placeholders = ["num_hypotheses", "examples"]

[templates.generator-joint]
system = "propose rules"
user = "Propose <num_hypotheses> rules given notes:\n<summaries>\nand examples:\n<examples>"
placeholders = ["num_hypotheses", "summaries", "examples"]

[templates.inference]
system = "classify"
user = "apply:\n<hypotheses>\nitem: <text>"
placeholders = ["hypotheses", "text"]

[templates.refiner-data]
system = "refine"
user = "Refine these <num_hypotheses> rules:\n<hypotheses>\nagainst examples:\n<examples>"
placeholders = ["num_hypotheses", "hypotheses", "examples"]

[templates.refiner-literature]
system = "refine"
user = "Refine these <num_hypotheses> rules:\n<hypotheses>\nagainst notes:\n<summaries>"
placeholders = ["num_hypotheses", "hypotheses", "summaries"]
"#,
    )
    .expect("inline registry is valid")
}

fn loop_example(i: usize) -> Example {
    let label = LOOP_LABELS[i % 2];
    Example {
        id: format!("x{i:02}"),
        fields: BTreeMap::from([("text".to_string(), format!("x{i:02} g={label}"))]),
        label: label.to_string(),
    }
}

/// Scripted completion client: generation calls consume predetermined
/// batches in order; inference answers by the verdict script; refinement
/// calls echo the numbered list back unchanged (identity rewrite).
struct ScriptedLoopClient {
    seed: u64,
    batches: Mutex<VecDeque<Vec<String>>>,
    roles: Mutex<Vec<AgentRole>>,
}

impl ScriptedLoopClient {
    fn new(seed: u64, batches: Vec<Vec<String>>) -> Self {
        ScriptedLoopClient {
            seed,
            batches: Mutex::new(batches.into()),
            roles: Mutex::new(Vec::new()),
        }
    }

    fn recorded_roles(&self) -> Vec<AgentRole> {
        self.roles.lock().unwrap().clone()
    }
}

fn numbered_body(line: &str) -> Option<&str> {
    let (num, rest) = line.split_once(". ")?;
    if !num.is_empty() && num.chars().all(|c| c.is_ascii_digit()) {
        Some(rest)
    } else {
        None
    }
}

impl CompletionClient for ScriptedLoopClient {
    fn complete(
        &self,
        role: AgentRole,
        request: &CompletionRequest,
    ) -> hypogen_core::error::Result<CompletionResponse> {
        self.roles.lock().unwrap().push(role);
        let text = match role {
            AgentRole::Generator | AgentRole::GeneratorJoint => {
                let batch = self
                    .batches
                    .lock()
                    .unwrap()
                    .pop_front()
                    .expect("the script provides enough generation batches");
                format_hypothesis_list(&batch)
            }
            AgentRole::Inference => {
                let user = &request.user;
                let rule = line_after(user, "1. ").expect("rule line in prompt");
                let item = line_after(user, "item: ").expect("item line in prompt");
                let mut parts = item.split_whitespace();
                let example_id = parts.next().expect("example id");
                let gold = parts
                    .next()
                    .and_then(|p| p.strip_prefix("g="))
                    .expect("gold marker");
                let correct = scripted_verdict(self.seed, rule, example_id);
                let answer = if correct {
                    gold.to_string()
                } else {
                    LOOP_LABELS
                        .iter()
                        .find(|l| **l != gold)
                        .expect("two labels")
                        .to_string()
                };
                format!("Final answer: {answer}")
            }
            AgentRole::RefinerData | AgentRole::RefinerLiterature => {
                let echoed: Vec<&str> =
                    request.user.lines().filter_map(numbered_body).collect();
                assert!(!echoed.is_empty(), "refiner prompt carries the batch");
                format_hypothesis_list(&echoed)
            }
            other => panic!("unexpected agent role {other:?} in scripted run"),
        };
        Ok(CompletionResponse::of_text(text))
    }
}

/// One randomized scripted scenario for the update-loop oracle.
struct Scenario {
    seed: u64,
    config: EngineConfig,
    examples: Vec<Example>,
    batches: Vec<Vec<String>>,
}

impl Scenario {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let capacity = rng.gen_range(1..=8usize);
        let k = rng.gen_range(1..=capacity);
        let w_hyp = rng.gen_range(1..=k);
        let w_max = rng.gen_range(1..=4usize);
        let num_per_update = rng.gen_range(1..=8usize);
        let num_init = rng.gen_range(1..=4usize);
        let total = rng.gen_range(num_init..=50usize);
        let updates = total - num_init;

        let mut config = EngineConfig::default();
        config.alpha = rng.gen_range(0.05..=1.5);
        config.k = k;
        config.w_max = w_max;
        config.w_hyp = Some(w_hyp);
        config.num_init = num_init;
        config.capacity = capacity;
        config.num_per_update = num_per_update;
        config.count_init_in_time = rng.gen_bool(0.5);

        // Batch 0 seeds the bank; each later batch feeds one possible
        // regeneration (at most one per update step).
        let mut batches = vec![(0..capacity)
            .map(|j| format!("rule-0-{j:02}"))
            .collect::<Vec<_>>()];
        for g in 1..=updates {
            batches.push((0..num_per_update).map(|j| format!("rule-{g}-{j:02}")).collect());
        }

        Scenario {
            seed: rng.gen(),
            config,
            examples: (0..total).map(loop_example).collect(),
            batches,
        }
    }
}

/// Straight-line reference implementation of the online update loop.
struct SimHypothesis {
    id: String,
    text: String,
    n_correct: u64,
    n_seen: u64,
    created: u64,
}

struct Simulator {
    seed: u64,
    alpha: f64,
    k: usize,
    w_hyp: usize,
    w_max: usize,
    capacity: usize,
    hyps: Vec<SimHypothesis>,
    pool: Vec<Example>,
    t: u64,
    id_counter: u64,
    batches: VecDeque<Vec<String>>,
}

impl Simulator {
    fn new(scenario: &Scenario) -> Self {
        Simulator {
            seed: scenario.seed,
            alpha: scenario.config.alpha,
            k: scenario.config.k,
            w_hyp: scenario.config.w_hyp.expect("scenario sets w_hyp"),
            w_max: scenario.config.w_max,
            capacity: scenario.config.capacity,
            hyps: Vec::new(),
            pool: Vec::new(),
            t: 0,
            id_counter: 0,
            batches: scenario.batches.clone().into(),
        }
    }

    fn next_id(&mut self) -> String {
        self.id_counter += 1;
        format!("data-{:04}", self.id_counter)
    }

    fn key(&self, h: &SimHypothesis) -> f64 {
        if self.t == 0 {
            if h.n_seen == 0 {
                0.0
            } else {
                h.n_correct as f64 / h.n_seen as f64
            }
        } else {
            h.n_correct as f64 / h.n_seen as f64
                + self.alpha * ((self.t as f64).ln() / h.n_seen as f64).sqrt()
        }
    }

    fn sort(&mut self) {
        let keyed: Vec<f64> = self.hyps.iter().map(|h| self.key(h)).collect();
        let mut order: Vec<usize> = (0..self.hyps.len()).collect();
        order.sort_by(|&a, &b| {
            keyed[b]
                .partial_cmp(&keyed[a])
                .unwrap()
                .then_with(|| self.hyps[a].created.cmp(&self.hyps[b].created))
                .then_with(|| self.hyps[a].id.cmp(&self.hyps[b].id))
        });
        let mut rearranged = Vec::with_capacity(self.hyps.len());
        for &i in &order {
            rearranged.push(SimHypothesis {
                id: self.hyps[i].id.clone(),
                text: self.hyps[i].text.clone(),
                n_correct: self.hyps[i].n_correct,
                n_seen: self.hyps[i].n_seen,
                created: self.hyps[i].created,
            });
        }
        self.hyps = rearranged;
    }

    fn score_on(&mut self, from: usize, examples: &[Example]) {
        for i in from..self.hyps.len() {
            for ex in examples {
                let correct = scripted_verdict(self.seed, &self.hyps[i].text, &ex.id);
                self.hyps[i].n_seen += 1;
                if correct {
                    self.hyps[i].n_correct += 1;
                }
            }
        }
    }

    fn init(&mut self, init_examples: &[Example], count_init_in_time: bool) {
        let batch = self.batches.pop_front().expect("init batch");
        for text in batch {
            let id = self.next_id();
            self.hyps.push(SimHypothesis {
                id,
                text,
                n_correct: 0,
                n_seen: 0,
                created: 0,
            });
        }
        self.score_on(0, init_examples);
        self.t = if count_init_in_time {
            init_examples.len() as u64
        } else {
            0
        };
        self.sort();
    }

    /// Returns (pooled, regenerated) for this step.
    fn step(&mut self, example: &Example) -> (bool, bool) {
        let k_eff = self.k.min(self.hyps.len());
        let mut wrong = 0usize;
        let verdicts: Vec<bool> = (0..k_eff)
            .map(|i| scripted_verdict(self.seed, &self.hyps[i].text, &example.id))
            .collect();
        self.t += 1;
        for (i, &correct) in verdicts.iter().enumerate() {
            self.hyps[i].n_seen += 1;
            if correct {
                self.hyps[i].n_correct += 1;
            } else {
                wrong += 1;
            }
        }
        let pooled = wrong >= self.w_hyp;
        if pooled {
            self.pool.push(example.clone());
        }
        let mut regenerated = false;
        if self.pool.len() >= self.w_max {
            regenerated = true;
            let batch = self.batches.pop_front().expect("regeneration batch");
            let created = self.t;
            let from = self.hyps.len();
            for text in batch {
                let id = self.next_id();
                self.hyps.push(SimHypothesis {
                    id,
                    text,
                    n_correct: 0,
                    n_seen: 0,
                    created,
                });
            }
            let pool = self.pool.clone();
            self.score_on(from, &pool);
            self.sort();
            self.hyps.truncate(self.capacity);
            self.pool.clear();
        }
        self.sort();
        (pooled, regenerated)
    }

    fn snapshot(&self) -> (Vec<(String, String, u64, u64, u64)>, Vec<String>, u64) {
        (
            self.hyps
                .iter()
                .map(|h| {
                    (
                        h.id.clone(),
                        h.text.clone(),
                        h.n_correct,
                        h.n_seen,
                        h.created,
                    )
                })
                .collect(),
            self.pool.iter().map(|e| e.id.clone()).collect(),
            self.t,
        )
    }
}

fn engine_snapshot(
    state: &hypogen_core::engine::TrainingState,
) -> (Vec<(String, String, u64, u64, u64)>, Vec<String>, u64) {
    (
        state
            .bank
            .entries()
            .iter()
            .map(|h| {
                (
                    h.id.clone(),
                    h.text.clone(),
                    h.n_correct,
                    h.n_seen,
                    h.created_at_step,
                )
            })
            .collect(),
        state.wrong_pool.iter().map(|e| e.id.clone()).collect(),
        state.step,
    )
}

#[test]
fn update_loop_equivalence() {
    report("update-loop-equivalence", 30.0, || {
        let task = loop_task();
        let registry = loop_registry();
        let mut master = ChaCha8Rng::seed_from_u64(0x0002_5EED);
        for case in 0..100u32 {
            let scenario = Scenario::random(&mut master);
            let client =
                ScriptedLoopClient::new(scenario.seed, scenario.batches.clone());
            let ctx = PipelineContext {
                task: &task,
                registry: &registry,
                gateway: &client,
                model_id: "scripted-loop",
            };

            let (init, rest) = scenario.examples.split_at(scenario.config.num_init);
            let mut state = initialize_bank(
                &ctx,
                &scenario.config,
                init,
                TrainMode::Hypogenic,
            )
            .map_err(|e| format!("case #{case}: init failed: {e}"))?;

            let mut sim = Simulator::new(&scenario);
            sim.init(init, scenario.config.count_init_in_time);
            ensure!(
                engine_snapshot(&state) == sim.snapshot(),
                "case #{case}: states diverge immediately after initialization"
            );

            for (step_no, example) in rest.iter().enumerate() {
                let outcome =
                    update_step(&ctx, &mut state, example, TrainMode::Hypogenic)
                        .map_err(|e| format!("case #{case}: step failed: {e}"))?;
                let (pooled, regenerated) = sim.step(example);
                ensure!(
                    outcome.regenerated == regenerated,
                    "case #{case} step {step_no}: regeneration timing diverged \
                     (engine {}, simulator {})",
                    outcome.regenerated,
                    regenerated
                );
                ensure!(
                    outcome.pooled == pooled,
                    "case #{case} step {step_no}: wrong-pool admission diverged"
                );
                ensure!(
                    engine_snapshot(&state) == sim.snapshot(),
                    "case #{case} step {step_no}: engine state diverged from the \
                     reference simulator"
                );
            }

            // The orchestrated entry point must land on the same state as
            // the manual step loop.
            let rerun_client =
                ScriptedLoopClient::new(scenario.seed, scenario.batches.clone());
            let rerun_ctx = PipelineContext {
                task: &task,
                registry: &registry,
                gateway: &rerun_client,
                model_id: "scripted-loop",
            };
            let outcome = run_training(
                &rerun_ctx,
                &scenario.config,
                &scenario.examples,
                TrainMode::Hypogenic,
            )
            .map_err(|e| format!("case #{case}: run_training failed: {e}"))?;
            ensure!(
                engine_snapshot(&outcome.state) == sim.snapshot(),
                "case #{case}: run_training's final state diverged from the \
                 stepwise run"
            );
        }
        Ok(())
    });
}

// --------------------------------------------------------------------
// Criterion: refinement alternation and identity-rewrite neutrality
// --------------------------------------------------------------------

#[test]
fn refinement_alternation() {
    report("refinement-alternation", 10.0, || {
        let task = loop_task();
        let registry = loop_registry();

        let mut config = EngineConfig::default();
        config.alpha = 0.5;
        config.capacity = 4;
        config.k = 2;
        config.w_hyp = Some(1);
        config.w_max = 2;
        config.num_init = 3;
        config.num_per_update = 2;
        config.refine_rounds = 6;

        let total = 20usize;
        let examples: Vec<Example> = (0..total).map(loop_example).collect();
        let mut batches = vec![(0..config.capacity)
            .map(|j| format!("rule-0-{j:02}"))
            .collect::<Vec<_>>()];
        for g in 1..=(total - config.num_init) {
            batches.push(
                (0..config.num_per_update)
                    .map(|j| format!("rule-{g}-{j:02}"))
                    .collect(),
            );
        }
        let summaries = vec![PaperSummary {
            paper_id: "note-1".into(),
            title: "Field notes".into(),
            summary: "Short heuristic observations.".into(),
        }];

        let seed = 0x0003_5EED;
        let refined_client = ScriptedLoopClient::new(seed, batches.clone());
        let refined_ctx = PipelineContext {
            task: &task,
            registry: &registry,
            gateway: &refined_client,
            model_id: "scripted-loop",
        };
        let refined = run_training(
            &refined_ctx,
            &config,
            &examples,
            TrainMode::Hyporefine {
                summaries: &summaries,
            },
        )
        .map_err(|e| format!("refined run failed: {e}"))?;

        let plain_client = ScriptedLoopClient::new(seed, batches.clone());
        let plain_ctx = PipelineContext {
            task: &task,
            registry: &registry,
            gateway: &plain_client,
            model_id: "scripted-loop",
        };
        let plain = run_training(&plain_ctx, &config, &examples, TrainMode::Hypogenic)
            .map_err(|e| format!("plain run failed: {e}"))?;

        let regens = refined
            .steps
            .iter()
            .filter(|s| s.regenerated)
            .count();
        ensure!(
            regens >= 2,
            "scenario produced only {regens} regeneration events; need >= 2"
        );

        // Every trace alternates data/literature over exactly 6 rounds.
        let traces = refined.refinement_traces();
        ensure!(
            traces.len() == regens,
            "expected one trace per regeneration, got {} traces for {} events",
            traces.len(),
            regens
        );
        for (e, trace) in traces.iter().enumerate() {
            ensure!(!trace.truncated, "trace #{e} was truncated");
            ensure!(
                trace.rounds.len() == 6,
                "trace #{e} ran {} rounds instead of 6",
                trace.rounds.len()
            );
            for (i, round) in trace.rounds.iter().enumerate() {
                let index = i + 1;
                ensure!(
                    round.index == index,
                    "trace #{e} round {} mis-indexed as {}",
                    index,
                    round.index
                );
                let expected = if index % 2 == 1 {
                    RefineContextKind::Data
                } else {
                    RefineContextKind::Literature
                };
                ensure!(
                    round.context == expected,
                    "trace #{e} round {index} used {:?}, expected {:?}",
                    round.context,
                    expected
                );
            }
            // Identity rewrites keep the batch unchanged round to round.
            let batch = &batches[e + 1];
            for round in &trace.rounds {
                ensure!(
                    &round.output == batch,
                    "trace #{e} round {} altered the batch under an identity \
                     rewrite",
                    round.index
                );
            }
        }

        // The raw call stream shows, per regeneration, one generation
        // call followed by exactly 6 alternating refinement calls.
        let roles = refined_client.recorded_roles();
        let mut events = 0usize;
        let mut i = 0usize;
        while i < roles.len() {
            match roles[i] {
                AgentRole::Generator => {
                    events += 1;
                    let expected = [
                        AgentRole::RefinerData,
                        AgentRole::RefinerLiterature,
                        AgentRole::RefinerData,
                        AgentRole::RefinerLiterature,
                        AgentRole::RefinerData,
                        AgentRole::RefinerLiterature,
                    ];
                    ensure!(
                        roles.len() >= i + 7 && roles[i + 1..i + 7] == expected,
                        "generation call #{events} was not followed by 6 \
                         alternating refinement calls: {:?}",
                        &roles[i + 1..roles.len().min(i + 7)]
                    );
                    if let Some(next) = roles.get(i + 7) {
                        ensure!(
                            !matches!(
                                next,
                                AgentRole::RefinerData | AgentRole::RefinerLiterature
                            ),
                            "a seventh refinement call followed generation \
                             #{events}"
                        );
                    }
                    i += 7;
                }
                AgentRole::RefinerData | AgentRole::RefinerLiterature => {
                    return Err(format!(
                        "refinement call at position {i} outside a regeneration \
                         window"
                    ));
                }
                _ => i += 1,
            }
        }
        ensure!(
            events == regens,
            "saw {events} regeneration call windows for {regens} events"
        );

        // With identity refinement the reward bookkeeping must match the
        // plain run bit for bit (ids differ by provenance prefix only).
        ensure!(
            refined.state.step == plain.state.step,
            "step counters diverged: {} vs {}",
            refined.state.step,
            plain.state.step
        );
        let t = refined.state.step;
        let refined_entries = refined.state.bank.entries();
        let plain_entries = plain.state.bank.entries();
        ensure!(
            refined_entries.len() == plain_entries.len(),
            "bank sizes diverged: {} vs {}",
            refined_entries.len(),
            plain_entries.len()
        );
        for (r, p) in refined_entries.iter().zip(plain_entries) {
            ensure!(
                r.text == p.text
                    && r.n_correct == p.n_correct
                    && r.n_seen == p.n_seen
                    && r.created_at_step == p.created_at_step,
                "bank entries diverged: ({}, {}/{}) vs ({}, {}/{})",
                r.text,
                r.n_correct,
                r.n_seen,
                p.text,
                p.n_correct,
                p.n_seen
            );
            ensure!(
                r.reward(t, config.alpha).to_bits()
                    == p.reward(t, config.alpha).to_bits(),
                "rewards for `{}` differ bitwise",
                r.text
            );
        }
        ensure!(
            refined_entries
                .iter()
                .any(|h| h.provenance == Provenance::Refined),
            "no refined-provenance hypothesis survived to the final bank"
        );
        Ok(())
    });
}

// --------------------------------------------------------------------
// Criterion: greedy deduplication vs. brute-force verification
// --------------------------------------------------------------------

#[test]
fn dedup_greedy_optimality() {
    report("dedup-greedy-optimality", 60.0, || {
        const N: usize = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(0x0004_5EED);
        for pattern in 0..(1u32 << 15) {
            let entries: Vec<Hypothesis> = (0..N)
                .map(|i| {
                    let mut h = scored_hypothesis(format!("h-{i}"), &mut rng, 12);
                    if h.n_seen == 0 {
                        // Keep every entry scored so accuracy comparisons
                        // are total.
                        h.n_seen = 1;
                        h.n_correct = rng.gen_range(0..=1);
                    }
                    h
                })
                .collect();
            let ids: Vec<String> = entries.iter().map(|h| h.id.clone()).collect();
            let matrix = RedundancyMatrix::from_fn(ids, |i, j| {
                pattern >> pair_index(i, j, N) & 1 == 1
            });
            let bank = HypothesisBank::from_entries(N, entries.clone()).unwrap();
            let kept = deduplicate(&bank, &matrix)
                .map_err(|e| format!("matrix {pattern:#x}: dedup failed: {e}"))?;

            let kept_ids: BTreeSet<&str> =
                kept.entries().iter().map(|h| h.id.as_str()).collect();
            let position =
                |id: &str| matrix.position(id).expect("ids cover the matrix");
            let acc = |h: &Hypothesis| h.training_accuracy().expect("scored");

            // No two kept hypotheses may be redundant.
            let kept_list: Vec<&Hypothesis> = entries
                .iter()
                .filter(|h| kept_ids.contains(h.id.as_str()))
                .collect();
            for a in 0..kept_list.len() {
                for b in (a + 1)..kept_list.len() {
                    ensure!(
                        !matrix
                            .redundant(position(&kept_list[a].id), position(&kept_list[b].id)),
                        "matrix {pattern:#x}: kept pair ({}, {}) is redundant",
                        kept_list[a].id,
                        kept_list[b].id
                    );
                }
            }
            // Every dropped hypothesis must be redundant with some kept
            // hypothesis of no lower accuracy.
            for dropped in entries.iter().filter(|h| !kept_ids.contains(h.id.as_str())) {
                let justified = kept_list.iter().any(|keeper| {
                    matrix.redundant(position(&keeper.id), position(&dropped.id))
                        && acc(keeper) >= acc(dropped)
                });
                ensure!(
                    justified,
                    "matrix {pattern:#x}: `{}` was dropped without a kept, \
                     not-lower-accuracy redundant partner",
                    dropped.id
                );
            }
        }
        Ok(())
    });
}

// --------------------------------------------------------------------
// Criterion: union composition laws
// --------------------------------------------------------------------

#[test]
fn union_composition() {
    report("union-composition", 5.0, || {
        const H_MAX: usize = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(0x0005_5EED);
        for case in 0..1_000u32 {
            let main: Vec<Hypothesis> = (0..rng.gen_range(0..=25usize))
                .map(|i| scored_hypothesis(format!("m-{i:02}"), &mut rng, 20))
                .collect();
            let lit: Vec<Hypothesis> = (0..rng.gen_range(0..=25usize))
                .map(|i| scored_hypothesis(format!("l-{i:02}"), &mut rng, 20))
                .collect();
            let seed: u64 = rng.gen();

            let main_bank =
                HypothesisBank::from_entries(main.len().max(1), main.clone()).unwrap();
            let lit_bank =
                HypothesisBank::from_entries(lit.len().max(1), lit.clone()).unwrap();
            let union = union_banks(&main_bank, &lit_bank, H_MAX, seed)
                .map_err(|e| format!("case #{case}: union failed: {e}"))?;
            let again = union_banks(&main_bank, &lit_bank, H_MAX, seed).unwrap();
            ensure!(
                union.entries() == again.entries(),
                "case #{case}: union is not deterministic under a fixed seed"
            );

            let target = H_MAX.min(main.len() + lit.len());
            ensure!(
                union.len() == target,
                "case #{case}: union size {} != min(20, available) = {target}",
                union.len()
            );

            let ids: Vec<&str> = union.entries().iter().map(|h| h.id.as_str()).collect();
            let distinct: BTreeSet<&str> = ids.iter().copied().collect();
            ensure!(
                distinct.len() == ids.len(),
                "case #{case}: union repeats an id"
            );

            let prefix_len = (H_MAX / 2).min(main.len());
            let order = accuracy_order(&main);
            let expected: Vec<&str> = order[..prefix_len]
                .iter()
                .map(|&i| main[i].id.as_str())
                .collect();
            ensure!(
                ids[..prefix_len] == expected[..],
                "case #{case}: union does not open with the top-accuracy \
                 data-driven prefix"
            );

            // Literature draws are without replacement and fill up to the
            // target before any data-driven backfill.
            let lit_taken = ids.iter().filter(|id| id.starts_with("l-")).count();
            let expected_lit = lit.len().min(target - prefix_len);
            ensure!(
                lit_taken == expected_lit,
                "case #{case}: union drew {lit_taken} literature hypotheses, \
                 expected {expected_lit}"
            );
        }
        Ok(())
    });
}

// --------------------------------------------------------------------
// Criterion: byte-identical replay runs through the CLI
// --------------------------------------------------------------------

#[test]
fn end_to_end_determinism() {
    report("end-to-end-determinism", 20.0, || {
        let tmp = TempDir::new().map_err(|e| format!("tempdir: {e}"))?;
        let task = common::task_config();
        let task = task.to_str().unwrap();
        let gen_fixture = common::fixture("generate-hypogenic.jsonl");
        let eval_fixture = common::fixture("evaluate.jsonl");
        let train = common::data_dir().join("train.jsonl");
        let test = common::data_dir().join("test.jsonl");

        // Both passes run the exact same invocations against the same
        // paths; artifact bytes are captured between passes.
        let bank = tmp.path().join("bank.json");
        let report_path = tmp.path().join("report.json");
        let mut banks = Vec::new();
        let mut reports = Vec::new();
        for run in ["first", "second"] {
            let out = common::hypogen(&[
                "generate",
                "--method",
                "hypogenic",
                "--task-config",
                task,
                "--fixtures",
                gen_fixture.to_str().unwrap(),
                "--data",
                train.to_str().unwrap(),
                "--out",
                bank.to_str().unwrap(),
            ]);
            ensure!(
                out.status.success(),
                "{run} generate run failed:\n{}",
                String::from_utf8_lossy(&out.stderr)
            );
            banks.push(fs::read(&bank).map_err(|e| format!("read bank: {e}"))?);

            let out = common::hypogen(&[
                "evaluate",
                "--task-config",
                task,
                "--fixtures",
                eval_fixture.to_str().unwrap(),
                "--bank",
                bank.to_str().unwrap(),
                "--data",
                test.to_str().unwrap(),
                "--out",
                report_path.to_str().unwrap(),
            ]);
            ensure!(
                out.status.success(),
                "{run} evaluate run failed:\n{}",
                String::from_utf8_lossy(&out.stderr)
            );
            reports
                .push(fs::read(&report_path).map_err(|e| format!("read report: {e}"))?);
        }
        ensure!(
            banks[0] == banks[1],
            "the two generated bank files differ byte for byte"
        );
        ensure!(
            reports[0] == reports[1],
            "the two evaluation reports differ byte for byte"
        );
        ensure!(!banks[0].is_empty() && !reports[0].is_empty(), "empty artifacts");
        Ok(())
    });
}

// --------------------------------------------------------------------
// Criterion: answer-format parsing corpora
// --------------------------------------------------------------------

#[derive(Deserialize)]
struct AnswerRow {
    text: String,
    expected: String,
}

#[derive(Deserialize)]
struct MalformedRow {
    text: String,
    task: String,
    reason: String,
}

#[derive(Deserialize)]
struct ListRow {
    text: String,
    expected_count: usize,
    expected: Vec<String>,
}

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .expect("crates dir")
        .join("core/tests/data")
}

fn corpus_rows<T: for<'de> Deserialize<'de>>(name: &str) -> Result<Vec<T>, String> {
    let path = corpus_dir().join(name);
    let text =
        fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| format!("{name}: bad row: {e}")))
        .collect()
}

fn answer_task(tag: &str) -> TaskSpec {
    let (task_id, labels, positional): (&str, Vec<&str>, bool) = match tag {
        "brace" => ("review-veracity", vec!["truthful", "deceptive"], false),
        "bare" => ("strain-detection", vec!["stress", "no stress"], false),
        "positional" => (
            "argument-strength",
            vec!["first argument", "second argument"],
            true,
        ),
        other => panic!("unknown corpus tag `{other}`"),
    };
    TaskSpec {
        task_id: task_id.into(),
        description: String::new(),
        label_set: labels.into_iter().map(String::from).collect(),
        field_schema: vec!["text".into()],
        positional_answers: positional,
    }
}

#[test]
fn parsing_suite() {
    report("parsing-suite", 30.0, || {
        for (file, tag) in [
            ("answers_brace.jsonl", "brace"),
            ("answers_bare.jsonl", "bare"),
            ("answers_positional.jsonl", "positional"),
        ] {
            let rows: Vec<AnswerRow> = corpus_rows(file)?;
            ensure!(
                rows.len() >= 50,
                "{file} holds {} rows; at least 50 required",
                rows.len()
            );
            let task = answer_task(tag);
            for row in &rows {
                match parse_final_answer(&row.text, &task) {
                    Ok(label) => ensure!(
                        label == row.expected,
                        "{file}: resolved `{label}` instead of `{}` for:\n{}",
                        row.expected,
                        row.text
                    ),
                    Err(err) => {
                        return Err(format!("{file}: `{err}` for:\n{}", row.text))
                    }
                }
            }
            // The corpus must exercise repeated markers and case variants.
            ensure!(
                rows.iter().any(|r| r.text.to_lowercase().matches("final").count() >= 2),
                "{file} lacks a last-marker-wins case"
            );
            ensure!(
                rows.iter().any(|r| r.text.contains("FINAL ANSWER:")),
                "{file} lacks an upper-case marker variant"
            );
        }

        let malformed: Vec<MalformedRow> = corpus_rows("answers_malformed.jsonl")?;
        ensure!(
            malformed.len() >= 12,
            "malformed corpus holds only {} rows",
            malformed.len()
        );
        for row in &malformed {
            let task = answer_task(&row.task);
            if let Ok(label) = parse_final_answer(&row.text, &task) {
                return Err(format!(
                    "malformed row ({}) resolved to `{label}`:\n{}",
                    row.reason, row.text
                ));
            }
        }

        let lists: Vec<ListRow> = corpus_rows("hypothesis_lists.jsonl")?;
        ensure!(
            lists.len() >= 20,
            "list corpus holds only {} rows",
            lists.len()
        );
        for row in &lists {
            let items = parse_hypothesis_list(&row.text, row.expected_count)
                .map_err(|e| format!("`{e}` for list:\n{}", row.text))?;
            ensure!(
                items == row.expected,
                "wrong items for list:\n{}",
                row.text
            );
        }
        Ok(())
    });
}

// --------------------------------------------------------------------
// Criterion: metrics vs. a confusion-matrix oracle
// --------------------------------------------------------------------

/// Brute-force per-class F1 from raw prediction rows.
fn oracle_metrics(label_set: &[String], rows: &[Prediction]) -> (f64, f64) {
    let correct = rows
        .iter()
        .filter(|p| p.predicted.as_deref() == Some(p.gold.as_str()))
        .count();
    let acc = correct as f64 / rows.len() as f64;

    let mut f1_sum = 0.0;
    for label in label_set {
        let tp = rows
            .iter()
            .filter(|p| p.gold == *label && p.predicted.as_deref() == Some(label.as_str()))
            .count() as f64;
        let fp = rows
            .iter()
            .filter(|p| p.gold != *label && p.predicted.as_deref() == Some(label.as_str()))
            .count() as f64;
        let fn_ = rows
            .iter()
            .filter(|p| p.gold == *label && p.predicted.as_deref() != Some(label.as_str()))
            .count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        f1_sum += f1;
    }
    (acc, f1_sum / label_set.len() as f64)
}

#[test]
fn metrics_oracle() {
    report("metrics-oracle", 5.0, || {
        // Frozen hand-checked case: two classes, one miss.
        let frozen_labels = vec!["A".to_string(), "B".to_string()];
        let golds = ["A", "A", "B", "B"];
        let preds = ["A", "B", "B", "B"];
        let frozen: Vec<Prediction> = golds
            .iter()
            .zip(preds)
            .enumerate()
            .map(|(i, (gold, pred))| Prediction {
                example_id: format!("f-{i}"),
                gold: gold.to_string(),
                predicted: Some(pred.to_string()),
                parse_ok: true,
                raw_text: String::new(),
            })
            .collect();
        ensure!(
            (accuracy(&frozen) - 0.75).abs() <= 1e-9,
            "frozen case accuracy {} != 0.75",
            accuracy(&frozen)
        );
        let expected_f1 = (2.0 / 3.0 + 4.0 / 5.0) / 2.0;
        let got_f1 = macro_f1(&frozen_labels, &frozen);
        ensure!(
            (got_f1 - expected_f1).abs() <= 1e-9,
            "frozen case macro-F1 {got_f1} != {expected_f1}"
        );

        let names = ["a", "b", "c", "d"];
        let mut rng = ChaCha8Rng::seed_from_u64(0x0006_5EED);
        for case in 0..500u32 {
            let n_classes = rng.gen_range(2..=4usize);
            let label_set: Vec<String> =
                names[..n_classes].iter().map(|l| l.to_string()).collect();
            let size = rng.gen_range(1..=40usize);
            let rows: Vec<Prediction> = (0..size)
                .map(|i| {
                    let gold = label_set[rng.gen_range(0..n_classes)].clone();
                    let predicted = if rng.gen_bool(0.1) {
                        None
                    } else {
                        Some(label_set[rng.gen_range(0..n_classes)].clone())
                    };
                    Prediction {
                        example_id: format!("e-{i}"),
                        gold,
                        parse_ok: predicted.is_some(),
                        predicted,
                        raw_text: String::new(),
                    }
                })
                .collect();

            let (acc_oracle, f1_oracle) = oracle_metrics(&label_set, &rows);
            let acc = accuracy(&rows);
            let f1 = macro_f1(&label_set, &rows);
            ensure!(
                (acc - acc_oracle).abs() <= 1e-9,
                "case #{case}: accuracy {acc} deviates from oracle {acc_oracle}"
            );
            ensure!(
                (f1 - f1_oracle).abs() <= 1e-9,
                "case #{case}: macro-F1 {f1} deviates from oracle {f1_oracle}"
            );
        }
        Ok(())
    });
}

// --------------------------------------------------------------------
// Criterion (optional): live smoke run against a real endpoint
// --------------------------------------------------------------------

#[test]
fn live_smoke() {
    let base_url = std::env::var("HYPOGEN_SMOKE_BASE_URL").ok();
    let model_id = std::env::var("HYPOGEN_SMOKE_MODEL").ok();
    let api_key = std::env::var("HYPOGEN_API_KEY").ok();
    let (Some(base_url), Some(model_id), Some(api_key)) = (base_url, model_id, api_key)
    else {
        println!(
            "ACCEPTANCE live-smoke: SKIPPED (set HYPOGEN_SMOKE_BASE_URL, \
             HYPOGEN_SMOKE_MODEL, and HYPOGEN_API_KEY to run)"
        );
        return;
    };

    report("live-smoke", 600.0, || {
        use hypogen_core::combine::build_redundancy_matrix;
        use hypogen_core::eval::evaluate_bank;
        use hypogen_core::gateway::{
            BackendConfig, Gateway, HttpTransport, LiveBackend, RetryPolicy,
        };
        use hypogen_core::literature::{load_corpus, summarize_corpus};
        use hypogen_core::store::{load_dataset, load_task_file};

        let backend_config = BackendConfig {
            model_id: model_id.clone(),
            base_url,
            api_key_env: "HYPOGEN_API_KEY".into(),
            timeout_secs: 60,
        };
        let transport = HttpTransport::new(&backend_config, api_key);
        let gateway = Gateway::live(LiveBackend::new(
            Box::new(transport),
            RetryPolicy::no_delay(),
        ));

        let loaded = load_task_file(&common::task_config())
            .map_err(|e| format!("task config: {e}"))?;
        let train = load_dataset(
            &common::data_dir().join("train.jsonl"),
            hypogen_core::model::SplitTag::Train,
            &loaded.task,
        )
        .map_err(|e| format!("train data: {e}"))?;
        let test = load_dataset(
            &common::data_dir().join("test.jsonl"),
            hypogen_core::model::SplitTag::TestInd,
            &loaded.task,
        )
        .map_err(|e| format!("test data: {e}"))?;
        let test_slice = hypogen_core::model::Dataset::new(
            hypogen_core::model::SplitTag::TestInd,
            test.examples()[..3].to_vec(),
            &loaded.task,
        )
        .map_err(|e| format!("test slice: {e}"))?;

        let mut config = loaded.engine.clone();
        config.num_init = 5;
        config.capacity = 3;
        config.k = 2;
        config.w_hyp = Some(1);
        config.w_max = 3;
        config.num_per_update = 2;

        let ctx = PipelineContext {
            task: &loaded.task,
            registry: &loaded.registry,
            gateway: &gateway,
            model_id: &model_id,
        };

        let docs = load_corpus(&common::data_dir().join("corpus"))
            .map_err(|e| format!("corpus: {e}"))?;
        let summaries = summarize_corpus(&ctx, &config, &docs[..1])
            .map_err(|e| format!("live summarization failed: {e}"))?;
        ensure!(summaries.len() == 1, "expected one live summary");

        let outcome = run_training(
            &ctx,
            &config,
            &train.examples()[..10],
            TrainMode::Hypogenic,
        )
        .map_err(|e| format!("live training failed: {e}"))?;
        let bank = outcome.state.bank;
        ensure!(!bank.is_empty(), "live training produced an empty bank");

        let (matrix, _calls) = build_redundancy_matrix(&ctx, &config, &bank)
            .map_err(|e| format!("live redundancy check failed: {e}"))?;
        let deduped = deduplicate(&bank, &matrix)
            .map_err(|e| format!("dedup after live check failed: {e}"))?;
        ensure!(!deduped.is_empty(), "dedup emptied the live bank");

        let report = evaluate_bank(&ctx, &config, &deduped, &test_slice, &[config.seed])
            .map_err(|e| format!("live evaluation failed: {e}"))?;
        ensure!(
            report.metrics.per_seed.len() == 1,
            "expected a single-seed report from the live run"
        );
        Ok(())
    });
}
