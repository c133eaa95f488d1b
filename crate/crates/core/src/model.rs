//! Core data model: tasks, examples, hypotheses, banks, and engine
//! configuration.
//!
//! The reward used everywhere for ranking hypotheses is an
//! exploration-adjusted accuracy in the upper-confidence-bound style:
//!
//! ```text
//! reward = n_correct / n_seen + alpha * sqrt(ln t / n_seen)
//! ```
//!
//! where `t` counts examples consumed so far and `n_seen` counts trials of
//! one hypothesis. Accuracy favours exploitation; the bonus term favours
//! hypotheses that have been tried less often.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exploration-adjusted reward for a hypothesis after `t` consumed examples.
///
/// Uses the natural logarithm. Requires `n_seen >= 1` and `t >= 1`; callers
/// that need to rank untried hypotheses must do so by another key.
pub fn compute_reward(n_correct: u64, n_seen: u64, t: u64, alpha: f64) -> f64 {
    assert!(n_seen >= 1, "reward is undefined before the first trial");
    assert!(t >= 1, "reward is undefined before the first step");
    assert!(n_correct <= n_seen, "n_correct cannot exceed n_seen");
    let acc = n_correct as f64 / n_seen as f64;
    acc + alpha * ((t as f64).ln() / n_seen as f64).sqrt()
}

/// Where a hypothesis came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Generated from labeled training examples.
    Data,
    /// Generated from literature summaries, never scored online.
    Literature,
    /// Produced by a refinement chain during a regeneration event.
    Refined,
    /// Generated from task instructions alone, with no examples.
    ZeroShot,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Data => "data",
            Provenance::Literature => "literature",
            Provenance::Refined => "refined",
            Provenance::ZeroShot => "zero-shot",
        })
    }
}

/// A single task instance: named text fields plus a gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub fields: BTreeMap<String, String>,
    pub label: String,
}

/// A natural-language hypothesis plus its online scoring state.
///
/// `text` is always a single line: constructors collapse internal line
/// breaks so that numbered lists of hypotheses can be serialized into
/// prompts and re-parsed without ambiguity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: String,
    pub text: String,
    pub provenance: Provenance,
    pub n_correct: u64,
    pub n_seen: u64,
    /// Step-counter value at which this hypothesis entered the bank.
    pub created_at_step: u64,
}

impl Hypothesis {
    pub fn new(
        id: impl Into<String>,
        text: &str,
        provenance: Provenance,
        created_at_step: u64,
    ) -> Self {
        Hypothesis {
            id: id.into(),
            text: normalize_hypothesis_text(text),
            provenance,
            n_correct: 0,
            n_seen: 0,
            created_at_step,
        }
    }

    /// Training accuracy, or `None` before the first trial.
    pub fn training_accuracy(&self) -> Option<f64> {
        if self.n_seen == 0 {
            None
        } else {
            Some(self.n_correct as f64 / self.n_seen as f64)
        }
    }

    /// Record one trial outcome.
    pub fn record_trial(&mut self, correct: bool) {
        self.n_seen += 1;
        if correct {
            self.n_correct += 1;
        }
    }

    /// Reward at step `t`; see [`compute_reward`].
    pub fn reward(&self, t: u64, alpha: f64) -> f64 {
        compute_reward(self.n_correct, self.n_seen, t, alpha)
    }
}

/// Collapse a hypothesis text to one whitespace-normalized line.
pub fn normalize_hypothesis_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Ranking key used for reward ordering. At `t == 0` no example has been
/// consumed yet and the exploration bonus is undefined, so plain accuracy
/// is used instead.
fn ranking_key(h: &Hypothesis, t: u64, alpha: f64) -> f64 {
    if t == 0 {
        h.training_accuracy().unwrap_or(0.0)
    } else {
        h.reward(t, alpha)
    }
}

/// Compare two hypotheses for reward ordering: descending key, ties broken
/// by earlier `created_at_step`, then by id.
fn reward_order(a: &Hypothesis, b: &Hypothesis, t: u64, alpha: f64) -> std::cmp::Ordering {
    let ka = ranking_key(a, t, alpha);
    let kb = ranking_key(b, t, alpha);
    kb.partial_cmp(&ka)
        .expect("reward keys are finite")
        .then_with(|| a.created_at_step.cmp(&b.created_at_step))
        .then_with(|| a.id.cmp(&b.id))
}

/// An ordered, capacity-bounded collection of hypotheses.
///
/// The engine keeps entries sorted descending by current reward; banks built
/// from generation alone (literature, zero-shot) stay in generation order
/// until they are scored.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisBank {
    capacity: usize,
    entries: Vec<Hypothesis>,
}

impl HypothesisBank {
    pub fn new(capacity: usize) -> Self {
        HypothesisBank {
            capacity,
            entries: Vec::new(),
        }
    }

    /// Build a bank from existing entries, validating capacity, id
    /// uniqueness, and per-entry trial counts.
    pub fn from_entries(capacity: usize, entries: Vec<Hypothesis>) -> Result<Self> {
        let mut bank = HypothesisBank::new(capacity);
        for h in entries {
            bank.push(h)?;
        }
        Ok(bank)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Hypothesis] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&Hypothesis> {
        self.entries.iter().find(|h| h.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Hypothesis> {
        self.entries.iter_mut().find(|h| h.id == id)
    }

    /// Append a hypothesis, enforcing capacity and id uniqueness and the
    /// `n_correct <= n_seen` invariant.
    pub fn push(&mut self, h: Hypothesis) -> Result<()> {
        if self.entries.len() >= self.capacity {
            return Err(Error::InvalidData(format!(
                "bank is full ({} entries); cannot add `{}`",
                self.capacity, h.id
            )));
        }
        if h.n_correct > h.n_seen {
            return Err(Error::InvalidData(format!(
                "bank entry `{}`: n_correct {} exceeds n_seen {}",
                h.id, h.n_correct, h.n_seen
            )));
        }
        if self.entries.iter().any(|e| e.id == h.id) {
            return Err(Error::InvalidData(format!(
                "duplicate hypothesis id `{}`",
                h.id
            )));
        }
        self.entries.push(h);
        Ok(())
    }

    /// Sort entries descending by reward at step `t` (accuracy when
    /// `t == 0`), breaking ties by earlier creation step, then id.
    pub fn sort_for_reward(&mut self, t: u64, alpha: f64) {
        self.entries.sort_by(|a, b| reward_order(a, b, t, alpha));
    }

    /// Merge new entries, re-rank everything at step `t`, and drop the tail
    /// beyond capacity.
    pub fn merge_and_cap(&mut self, new: Vec<Hypothesis>, t: u64, alpha: f64) -> Result<()> {
        for h in new {
            if h.n_correct > h.n_seen {
                return Err(Error::InvalidData(format!(
                    "bank entry `{}`: n_correct {} exceeds n_seen {}",
                    h.id, h.n_correct, h.n_seen
                )));
            }
            if self.entries.iter().any(|e| e.id == h.id) {
                return Err(Error::InvalidData(format!(
                    "duplicate hypothesis id `{}`",
                    h.id
                )));
            }
            self.entries.push(h);
        }
        self.sort_for_reward(t, alpha);
        self.entries.truncate(self.capacity);
        Ok(())
    }

    pub fn into_entries(self) -> Vec<Hypothesis> {
        self.entries
    }
}

/// A classification task: its label vocabulary plus the named text fields
/// every example carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    #[serde(default)]
    pub description: String,
    pub label_set: Vec<String>,
    pub field_schema: Vec<String>,
    /// Whether answers may be phrased positionally ("the first ..." /
    /// "the second ...") and map to `label_set[0]` / `label_set[1]`.
    #[serde(default)]
    pub positional_answers: bool,
}

impl TaskSpec {
    /// Check structural invariants: nonempty id, at least two labels that
    /// are distinct case-insensitively, a nonempty field schema without
    /// duplicates, and a two-label set when positional answers are enabled.
    pub fn validate(&self) -> Result<()> {
        if self.task_id.trim().is_empty() {
            return Err(Error::Config("task_id must not be empty".into()));
        }
        if self.label_set.len() < 2 {
            return Err(Error::Config(format!(
                "task `{}` needs at least two labels",
                self.task_id
            )));
        }
        let mut seen = BTreeSet::new();
        for label in &self.label_set {
            let folded = label.trim().to_lowercase();
            if folded.is_empty() {
                return Err(Error::Config(format!(
                    "task `{}` has an empty label",
                    self.task_id
                )));
            }
            if !seen.insert(folded) {
                return Err(Error::Config(format!(
                    "task `{}` has labels that collide case-insensitively: `{}`",
                    self.task_id, label
                )));
            }
        }
        if self.field_schema.is_empty() {
            return Err(Error::Config(format!(
                "task `{}` declares no example fields",
                self.task_id
            )));
        }
        let mut fields = BTreeSet::new();
        for f in &self.field_schema {
            if !fields.insert(f.as_str()) {
                return Err(Error::Config(format!(
                    "task `{}` declares field `{}` twice",
                    self.task_id, f
                )));
            }
        }
        if self.positional_answers && self.label_set.len() != 2 {
            return Err(Error::Config(format!(
                "task `{}` enables positional answers but has {} labels (need exactly 2)",
                self.task_id,
                self.label_set.len()
            )));
        }
        Ok(())
    }

    /// Map a raw label to its canonical spelling: labels compare
    /// case-insensitively after trimming, and the task's spelling wins.
    pub fn canonical_label(&self, raw: &str) -> Option<&str> {
        let folded = raw.trim().to_lowercase();
        self.label_set
            .iter()
            .find(|l| l.trim().to_lowercase() == folded)
            .map(|l| l.as_str())
    }
}

/// Which split a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitTag {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "validation")]
    Validation,
    #[serde(rename = "test-IND")]
    TestInd,
    #[serde(rename = "test-OOD")]
    TestOod,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::TestInd => "test-IND",
            SplitTag::TestOod => "test-OOD",
        })
    }
}

/// A validated, split-tagged list of examples for one task.
///
/// Validation canonicalizes labels to the task's spelling, so downstream
/// code can compare labels with `==`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    split: SplitTag,
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(split: SplitTag, examples: Vec<Example>, task: &TaskSpec) -> Result<Self> {
        let mut ids = BTreeSet::new();
        let mut canonical = Vec::with_capacity(examples.len());
        for mut ex in examples {
            if ex.id.trim().is_empty() {
                return Err(Error::InvalidData("example with empty id".into()));
            }
            if !ids.insert(ex.id.clone()) {
                return Err(Error::DuplicateExampleId(ex.id));
            }
            match task.canonical_label(&ex.label) {
                Some(l) => ex.label = l.to_string(),
                None => {
                    return Err(Error::UnknownLabel {
                        example_id: ex.id,
                        label: ex.label,
                    })
                }
            }
            for field in &task.field_schema {
                if !ex.fields.contains_key(field) {
                    return Err(Error::InvalidData(format!(
                        "example `{}` is missing field `{}`",
                        ex.id, field
                    )));
                }
            }
            for key in ex.fields.keys() {
                if !task.field_schema.iter().any(|f| f == key) {
                    return Err(Error::InvalidData(format!(
                        "example `{}` has field `{}` not in the task schema",
                        ex.id, key
                    )));
                }
            }
            canonical.push(ex);
        }
        Ok(Dataset {
            split,
            examples: canonical,
        })
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Deterministically shuffle `examples` under `seed` and cut contiguous
/// train / validation / test partitions of the given sizes, in that order.
/// Leftover examples beyond the three sizes are dropped.
pub fn split_dataset(
    mut examples: Vec<Example>,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<(Vec<Example>, Vec<Example>, Vec<Example>)> {
    let needed = sizes.0 + sizes.1 + sizes.2;
    if needed > examples.len() {
        return Err(Error::InsufficientExamples {
            needed,
            available: examples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    examples.shuffle(&mut rng);
    let mut train = examples;
    let mut validation = train.split_off(sizes.0);
    let mut test = validation.split_off(sizes.1);
    test.truncate(sizes.2);
    Ok((train, validation, test))
}

/// Which context kind a refinement round uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefineContextKind {
    /// The accumulated wrong-example pool.
    Data,
    /// Literature summaries.
    Literature,
}

/// All tunable knobs of the generation/update engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Exploration weight in the reward bonus term.
    pub alpha: f64,
    /// How many top-reward hypotheses vote on each new training example.
    pub k: usize,
    /// Wrong-pool size that triggers a regeneration event.
    pub w_max: usize,
    /// How many of the `k` voters must be wrong before an example joins
    /// the wrong pool. `None` means a majority: `ceil(k / 2)`.
    pub w_hyp: Option<usize>,
    /// Number of training examples used for initial generation.
    pub num_init: usize,
    /// Maximum bank size.
    pub capacity: usize,
    /// Hypotheses requested per regeneration event.
    pub num_per_update: usize,
    /// Refinement rounds applied to each regenerated batch (0 = none).
    pub refine_rounds: usize,
    /// Sampling temperature for every completion request.
    pub temperature: f64,
    /// Completion token cap for every request.
    pub max_tokens: u32,
    /// Seed for every deterministic draw (splits, union sampling, shots).
    pub seed: u64,
    /// Whether the initial examples count toward the step clock `t`.
    pub count_init_in_time: bool,
    /// Context kind of the first refinement round; rounds alternate from it.
    pub first_round: RefineContextKind,
    /// Character budget for long document text sent to the summarizer.
    /// `None` means `4 * max_tokens`.
    pub char_budget: Option<usize>,
    /// Demonstrations used by the few-shot baseline.
    pub few_shot_k: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            alpha: 0.5,
            k: 10,
            w_max: 10,
            w_hyp: None,
            num_init: 10,
            capacity: 20,
            num_per_update: 10,
            refine_rounds: 6,
            temperature: 1e-5,
            max_tokens: 4000,
            seed: 11376,
            count_init_in_time: true,
            first_round: RefineContextKind::Data,
            char_budget: None,
            few_shot_k: 3,
        }
    }
}

impl EngineConfig {
    /// Wrong-vote threshold for pooling an example: explicit `w_hyp`, or a
    /// majority of the `k` voters.
    pub fn wrong_threshold(&self) -> usize {
        self.w_hyp.unwrap_or_else(|| self.k.div_ceil(2))
    }

    /// Character budget applied to summarizer inputs.
    pub fn effective_char_budget(&self) -> usize {
        self.char_budget.unwrap_or(4 * self.max_tokens as usize)
    }

    /// Check cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if self.capacity == 0 {
            return Err(Error::Config("capacity must be at least 1".into()));
        }
        if self.k == 0 || self.k > self.capacity {
            return Err(Error::Config(format!(
                "k must satisfy 1 <= k <= capacity ({}), got {}",
                self.capacity, self.k
            )));
        }
        let w_hyp = self.wrong_threshold();
        if w_hyp == 0 || w_hyp > self.k {
            return Err(Error::Config(format!(
                "w_hyp must satisfy 1 <= w_hyp <= k ({}), got {}",
                self.k, w_hyp
            )));
        }
        if self.w_max == 0 {
            return Err(Error::Config("w_max must be at least 1".into()));
        }
        if self.num_init == 0 {
            return Err(Error::Config("num_init must be at least 1".into()));
        }
        if self.num_per_update == 0 {
            return Err(Error::Config("num_per_update must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}
