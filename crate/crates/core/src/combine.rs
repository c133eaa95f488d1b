//! Redundancy judging, deduplication, and the union of two banks.
//!
//! Data-driven and literature-driven banks are merged into a single bank
//! in three stages:
//!
//! 1. an LLM judge marks each unordered pair of hypotheses within a bank
//!    as redundant or not, yielding a symmetric boolean matrix;
//! 2. each bank is greedily deduplicated: hypotheses are scanned in
//!    training-accuracy order and one is kept only if it is not redundant
//!    with anything already kept;
//! 3. the union takes the better half of the data-driven bank by
//!    accuracy, adds literature hypotheses by seeded random draw, and
//!    backfills from the data-driven remainder.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::AgentRole;
use crate::model::{Hypothesis, HypothesisBank};
use crate::ops::{make_request, PipelineContext};
use crate::parse::parse_yes_no;
use crate::template::RenderContext;

/// Symmetric boolean matrix of pairwise redundancy verdicts.
///
/// The diagonal is always true (every hypothesis is redundant with
/// itself); `ids` fixes the row/column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundancyMatrix {
    ids: Vec<String>,
    /// Row-major `ids.len() x ids.len()` cells.
    cells: Vec<bool>,
}

/// One judge call made while building a matrix, for the audit trail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckerCall {
    pub a: String,
    pub b: String,
    pub redundant: bool,
    /// False when the verdict could not be parsed and defaulted to
    /// "not redundant".
    pub parse_ok: bool,
}

impl RedundancyMatrix {
    /// The identity matrix: nothing is redundant with anything else.
    pub fn identity(ids: Vec<String>) -> Self {
        Self::from_fn(ids, |i, j| i == j)
    }

    /// Build from a pairwise predicate, forcing symmetry and a true
    /// diagonal: cell `(i, j)` with `i < j` is `pred(i, j)`.
    pub fn from_fn(ids: Vec<String>, pred: impl Fn(usize, usize) -> bool) -> Self {
        let n = ids.len();
        let mut cells = vec![false; n * n];
        for i in 0..n {
            cells[i * n + i] = true;
            for j in (i + 1)..n {
                let v = pred(i, j);
                cells[i * n + j] = v;
                cells[j * n + i] = v;
            }
        }
        RedundancyMatrix { ids, cells }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Whether the hypotheses at positions `i` and `j` are redundant.
    pub fn redundant(&self, i: usize, j: usize) -> bool {
        assert!(i < self.len() && j < self.len(), "index out of range");
        self.cells[i * self.len() + j]
    }

    /// Position of `id` in the matrix order.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

/// Judge every unordered pair in `bank` with the LLM and assemble the
/// matrix. Unparseable verdicts default to "not redundant" (keeping both
/// hypotheses) and are flagged in the returned call log.
pub fn build_redundancy_matrix(
    ctx: &PipelineContext<'_>,
    config: &crate::model::EngineConfig,
    bank: &HypothesisBank,
) -> Result<(RedundancyMatrix, Vec<CheckerCall>)> {
    let entries = bank.entries();
    let ids: Vec<String> = entries.iter().map(|h| h.id.clone()).collect();
    let n = ids.len();
    let mut verdicts = vec![false; n * n];
    let mut calls = Vec::with_capacity(n.saturating_sub(1) * n / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let context = RenderContext::new()
                .bind("hypothesis_a", &entries[i].text)
                .bind("hypothesis_b", &entries[j].text);
            let prompt = ctx.registry.render("redundancy-checker", &context)?;
            let request = make_request(ctx.model_id, &prompt, config);
            let response = ctx.gateway.complete(AgentRole::RedundancyChecker, &request)?;
            let (redundant, parse_ok) = match parse_yes_no(&response.text) {
                Some(v) => (v, true),
                None => {
                    log::warn!(
                        "unparseable redundancy verdict for ({}, {}); keeping both",
                        ids[i],
                        ids[j]
                    );
                    (false, false)
                }
            };
            verdicts[i * n + j] = redundant;
            calls.push(CheckerCall {
                a: ids[i].clone(),
                b: ids[j].clone(),
                redundant,
                parse_ok,
            });
        }
    }
    let matrix = RedundancyMatrix::from_fn(ids, |i, j| verdicts[i * n + j]);
    Ok((matrix, calls))
}

/// Scan order for deduplication and the union prefix: training accuracy
/// descending, with never-scored hypotheses last; ties broken by more
/// trials first, then id.
fn accuracy_rank(entries: &[&Hypothesis]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        let ha = entries[a];
        let hb = entries[b];
        let acc_a = ha.training_accuracy().unwrap_or(f64::NEG_INFINITY);
        let acc_b = hb.training_accuracy().unwrap_or(f64::NEG_INFINITY);
        acc_b
            .partial_cmp(&acc_a)
            .expect("accuracies are never NaN")
            .then_with(|| hb.n_seen.cmp(&ha.n_seen))
            .then_with(|| ha.id.cmp(&hb.id))
    });
    order
}

/// Greedily drop redundant hypotheses.
///
/// Hypotheses are scanned in accuracy order (see [`accuracy_rank`]); each
/// is kept only if the matrix marks it non-redundant with every
/// already-kept hypothesis, so the best exemplar of each redundancy
/// group survives. The result preserves the input bank's entry order.
pub fn deduplicate(bank: &HypothesisBank, matrix: &RedundancyMatrix) -> Result<HypothesisBank> {
    let entries: Vec<&Hypothesis> = bank.entries().iter().collect();
    if entries.len() != matrix.len()
        || entries.iter().any(|h| matrix.position(&h.id).is_none())
    {
        return Err(Error::InvalidData(
            "redundancy matrix does not cover exactly the bank's hypotheses".into(),
        ));
    }
    let mut kept_positions: Vec<usize> = Vec::new();
    for &idx in &accuracy_rank(&entries) {
        let pos = matrix
            .position(&entries[idx].id)
            .expect("coverage checked above");
        if kept_positions.iter().all(|&k| !matrix.redundant(pos, k)) {
            kept_positions.push(pos);
        }
    }
    let kept_ids: Vec<&str> = kept_positions
        .iter()
        .map(|&p| matrix.ids()[p].as_str())
        .collect();
    let survivors: Vec<Hypothesis> = bank
        .entries()
        .iter()
        .filter(|h| kept_ids.contains(&h.id.as_str()))
        .cloned()
        .collect();
    HypothesisBank::from_entries(bank.capacity(), survivors)
}

/// Union a data-driven bank with a literature bank.
///
/// The result takes the top `capacity / 2` (rounded down) data-driven
/// hypotheses by training accuracy, then draws literature hypotheses
/// uniformly without replacement using a seeded generator, and finally
/// backfills with the remaining data-driven hypotheses in accuracy
/// order, up to `min(capacity, |main| + |literature|)` total.
pub fn union_banks(
    main: &HypothesisBank,
    literature: &HypothesisBank,
    capacity: usize,
    seed: u64,
) -> Result<HypothesisBank> {
    assert!(capacity >= 1, "union capacity must be positive");
    let main_entries: Vec<&Hypothesis> = main.entries().iter().collect();
    let lit_entries: Vec<&Hypothesis> = literature.entries().iter().collect();
    if main_entries
        .iter()
        .any(|h| lit_entries.iter().any(|l| l.id == h.id))
    {
        return Err(Error::InvalidData(
            "the two banks share hypothesis ids; regenerate with distinct id prefixes".into(),
        ));
    }

    let target = capacity.min(main_entries.len() + lit_entries.len());
    let main_order = accuracy_rank(&main_entries);
    let prefix_len = (capacity / 2).min(main_entries.len());

    let mut chosen: Vec<&Hypothesis> = main_order[..prefix_len]
        .iter()
        .map(|&i| main_entries[i])
        .collect();

    // Seeded without-replacement draws from the literature bank, in draw
    // order.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lit_pool: Vec<&Hypothesis> = lit_entries.clone();
    while chosen.len() < target && !lit_pool.is_empty() {
        let pick = rng.gen_range(0..lit_pool.len());
        chosen.push(lit_pool.swap_remove(pick));
    }

    // Backfill from the data-driven remainder in accuracy order.
    let mut main_rest = main_order[prefix_len..].iter();
    while chosen.len() < target {
        let &i = main_rest
            .next()
            .expect("target is bounded by the combined size");
        chosen.push(main_entries[i]);
    }

    HypothesisBank::from_entries(capacity, chosen.into_iter().cloned().collect())
}
