//! On-disk formats: datasets, task configs, banks, summaries, reports,
//! and refinement traces.
//!
//! Datasets are JSON Lines (one example per line). Everything else is a
//! single JSON document, except task configs, which are TOML and point at
//! a prompt-template file resolved relative to the config's directory.
//! Every loader validates what it reads; a bank or dataset that violates
//! an invariant is rejected with the offending id or line number.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{MetricsReport, SeedPredictions};
use crate::gateway::BackendConfig;
use crate::literature::{PaperDoc, PaperSummary};
use crate::model::{Dataset, EngineConfig, Example, Hypothesis, HypothesisBank, SplitTag, TaskSpec};
use crate::refine::RefinementTrace;
use crate::template::TemplateRegistry;

/// Load a JSONL dataset and validate it against the task (known labels,
/// exact field schema, unique ids). The split is supplied by the caller:
/// dataset files do not carry one.
pub fn load_dataset(path: &Path, split: SplitTag, task: &TaskSpec) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let example: Example = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        examples.push(example);
    }
    if examples.is_empty() {
        return Err(Error::InvalidData(format!(
            "dataset {} holds no examples",
            path.display()
        )));
    }
    Dataset::new(split, examples, task)
}

/// Write a dataset as JSONL, one example per line.
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = Vec::new();
    for example in dataset.examples() {
        serde_json::to_writer(&mut out, example).expect("examples serialize");
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// A hypothesis bank on disk, with enough context to interpret it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankFile {
    pub task_id: String,
    /// Model that generated and scored the hypotheses.
    pub model_id: String,
    /// Which pipeline produced the bank: "hypogenic", "hyporefine",
    /// "literature", "zero-shot", or "union".
    pub method: String,
    /// Step-counter value when training stopped; 0 for unscored banks.
    pub final_step: u64,
    pub capacity: usize,
    pub engine: EngineConfig,
    /// Entries in stored rank order (best first for trained banks).
    pub entries: Vec<Hypothesis>,
}

impl BankFile {
    pub fn new(
        task_id: impl Into<String>,
        model_id: impl Into<String>,
        method: impl Into<String>,
        final_step: u64,
        engine: EngineConfig,
        bank: &HypothesisBank,
    ) -> Self {
        BankFile {
            task_id: task_id.into(),
            model_id: model_id.into(),
            method: method.into(),
            final_step,
            capacity: bank.capacity(),
            engine,
            entries: bank.entries().to_vec(),
        }
    }

    /// Rebuild the bank, re-checking capacity, id uniqueness, and trial
    /// counts. Entry order is preserved.
    pub fn bank(&self) -> Result<HypothesisBank> {
        HypothesisBank::from_entries(self.capacity, self.entries.clone())
    }
}

pub fn save_bank(path: &Path, file: &BankFile) -> Result<()> {
    write_json(path, file)
}

/// Load and validate a bank file. Returns the file; call
/// [`BankFile::bank`] for the validated in-memory bank.
pub fn load_bank(path: &Path) -> Result<BankFile> {
    let file: BankFile = read_json(path)?;
    file.bank()
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?;
    Ok(file)
}

pub fn save_corpus(path: &Path, docs: &[PaperDoc]) -> Result<()> {
    write_json(path, &docs)
}

pub fn load_corpus_file(path: &Path) -> Result<Vec<PaperDoc>> {
    let docs: Vec<PaperDoc> = read_json(path)?;
    if docs.is_empty() {
        return Err(Error::InvalidData(format!(
            "{} holds no documents",
            path.display()
        )));
    }
    Ok(docs)
}

pub fn save_summaries(path: &Path, summaries: &[PaperSummary]) -> Result<()> {
    write_json(path, &summaries)
}

pub fn load_summaries(path: &Path) -> Result<Vec<PaperSummary>> {
    let summaries: Vec<PaperSummary> = read_json(path)?;
    if summaries.is_empty() {
        return Err(Error::InvalidData(format!(
            "{} holds no summaries",
            path.display()
        )));
    }
    Ok(summaries)
}

/// An evaluation report: aggregate metrics plus per-seed predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub task_id: String,
    /// Model that ran inference.
    pub model_id: String,
    /// What was evaluated: a bank file path or a baseline name.
    pub subject: String,
    pub metrics: MetricsReport,
    pub predictions: Vec<SeedPredictions>,
}

pub fn save_report(path: &Path, report: &ReportFile) -> Result<()> {
    write_json(path, report)
}

pub fn load_report(path: &Path) -> Result<ReportFile> {
    read_json(path)
}

/// Refinement audit for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFile {
    pub task_id: String,
    pub model_id: String,
    pub traces: Vec<RefinementTrace>,
}

pub fn save_traces(path: &Path, traces: &TraceFile) -> Result<()> {
    write_json(path, traces)
}

pub fn load_traces(path: &Path) -> Result<TraceFile> {
    read_json(path)
}

/// The TOML task-config schema.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    /// Path of the prompt-template TOML, relative to this file.
    templates: String,
    task: TaskSpec,
    #[serde(default)]
    engine: EngineConfig,
    #[serde(default)]
    backend: Option<BackendConfig>,
}

/// A fully loaded and validated task configuration.
#[derive(Debug)]
pub struct LoadedTask {
    pub task: TaskSpec,
    pub engine: EngineConfig,
    /// Live-backend settings; absent for replay-only configs.
    pub backend: Option<BackendConfig>,
    pub registry: TemplateRegistry,
    /// Directory the config lives in; relative paths resolve against it.
    pub dir: PathBuf,
}

/// Load a task config, its engine settings, and its prompt templates.
pub fn load_task_file(path: &Path) -> Result<LoadedTask> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TaskFile = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    file.task.validate()?;
    file.engine.validate()?;
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let registry = TemplateRegistry::load(&dir.join(&file.templates))?;
    Ok(LoadedTask {
        task: file.task,
        engine: file.engine,
        backend: file.backend,
        registry,
        dir,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?;
    writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))
}
