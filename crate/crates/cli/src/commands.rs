//! Command implementations.
//!
//! Every command follows the same shape: load and merge configuration,
//! open the gateway in the requested mode, read input artifacts, run the
//! corresponding library operation, write output artifacts, and finish
//! with a run manifest beside the primary output.

use std::path::{Path, PathBuf};

use hypogen_core::combine::{build_redundancy_matrix, deduplicate, union_banks, CheckerCall};
use hypogen_core::engine::{run_training, generate_zero_shot_bank, TrainMode};
use hypogen_core::error::{Error, Result};
use hypogen_core::eval::{evaluate_bank, evaluate_baseline, BaselineKind, EvalRun, DEFAULT_SEEDS};
use hypogen_core::gateway::{BackendConfig, Gateway, LiveBackend};
use hypogen_core::literature::{
    boost_specificity, generate_literature_bank, load_corpus, summarize_corpus,
};
use hypogen_core::model::{Dataset, EngineConfig, HypothesisBank, SplitTag};
use hypogen_core::ops::PipelineContext;
use hypogen_core::store::{
    load_bank, load_corpus_file, load_dataset, load_summaries, load_task_file, save_bank,
    save_corpus, save_report, save_summaries, save_traces, BankFile, LoadedTask, ReportFile,
    TraceFile,
};

use crate::args::{
    BaselineArg, CommonOpts, EvaluateArgs, GenerateArgs, InferArgs, IngestLiteratureArgs,
    MethodArg, ModeArg, SummarizeArgs, UnionArgs,
};
use crate::manifest::RunManifest;

/// Loaded config plus an opened gateway: the working state of a command.
struct Session {
    loaded: LoadedTask,
    engine: EngineConfig,
    gateway: Gateway,
    model_id: String,
    seed: u64,
}

impl Session {
    fn open(common: &CommonOpts, overrides: Option<&crate::args::EngineOverrides>) -> Result<Self> {
        let loaded = load_task_file(&common.task_config)?;
        let mut engine = loaded.engine.clone();
        if let Some(overrides) = overrides {
            overrides.apply(&mut engine);
            engine.validate()?;
        }
        let model_id = common
            .backend
            .clone()
            .or_else(|| loaded.backend.as_ref().map(|b| b.model_id.clone()))
            .ok_or_else(|| {
                Error::Config(
                    "no backend model id: add a [backend] section to the task config or pass --backend"
                        .into(),
                )
            })?;
        let gateway = match common.mode {
            ModeArg::Replay => Gateway::replay(require_fixtures(common)?)?,
            ModeArg::Record => {
                let backend = live_backend(&loaded, &model_id)?;
                Gateway::record(require_fixtures(common)?, backend)?
            }
            ModeArg::Live => Gateway::live(live_backend(&loaded, &model_id)?),
        };
        let seed = common.seed.unwrap_or(engine.seed);
        Ok(Session {
            loaded,
            engine,
            gateway,
            model_id,
            seed,
        })
    }

    fn ctx(&self) -> PipelineContext<'_> {
        PipelineContext {
            task: &self.loaded.task,
            registry: &self.loaded.registry,
            gateway: &self.gateway,
            model_id: &self.model_id,
        }
    }

    /// Start a manifest carrying this session's settings.
    fn manifest(&self, command: &str, common: &CommonOpts) -> Result<RunManifest> {
        let mut m = RunManifest::new(command);
        m.task_id = Some(self.loaded.task.task_id.clone());
        m.task_config = Some(common.task_config.display().to_string());
        m.mode = Some(mode_name(common.mode).to_string());
        m.fixtures = common.fixtures.as_ref().map(|p| p.display().to_string());
        m.backend_model = Some(self.model_id.clone());
        m.seed = Some(self.seed);
        m.engine = Some(self.engine.clone());
        m.add_input(&common.task_config)?;
        if common.mode == ModeArg::Replay {
            m.add_input(require_fixtures(common)?)?;
        }
        Ok(m)
    }

    /// Record the tallies and, in record mode, the fixture file produced.
    fn finish_manifest(&self, m: &mut RunManifest, common: &CommonOpts) -> Result<()> {
        m.record_gateway(&self.gateway);
        if common.mode == ModeArg::Record {
            m.add_output(require_fixtures(common)?)?;
        }
        Ok(())
    }
}

fn require_fixtures(common: &CommonOpts) -> Result<&Path> {
    common.fixtures.as_deref().ok_or_else(|| {
        Error::Config(format!(
            "{} mode needs --fixtures",
            mode_name(common.mode)
        ))
    })
}

fn mode_name(mode: ModeArg) -> &'static str {
    match mode {
        ModeArg::Live => "live",
        ModeArg::Record => "record",
        ModeArg::Replay => "replay",
    }
}

fn live_backend(loaded: &LoadedTask, model_id: &str) -> Result<LiveBackend> {
    let base = loaded.backend.as_ref().ok_or_else(|| {
        Error::Config("live and record modes need a [backend] section in the task config".into())
    })?;
    let config = BackendConfig {
        model_id: model_id.to_string(),
        ..base.clone()
    };
    LiveBackend::http(&config)
}

pub fn ingest_literature(args: &IngestLiteratureArgs) -> Result<()> {
    let docs = load_corpus(&args.corpus)?;
    save_corpus(&args.out, &docs)?;
    let mut m = RunManifest::new("ingest-literature");
    let mut sources: Vec<PathBuf> = docs
        .iter()
        .map(|d| args.corpus.join(format!("{}.json", d.paper_id)))
        .filter(|p| p.is_file())
        .collect();
    sources.sort();
    for source in &sources {
        m.add_input(source)?;
    }
    m.add_output(&args.out)?;
    m.write(&args.out)?;
    println!(
        "ingested {} documents from {} -> {}",
        docs.len(),
        args.corpus.display(),
        args.out.display()
    );
    Ok(())
}

pub fn summarize(args: &SummarizeArgs) -> Result<()> {
    let session = Session::open(&args.common, None)?;
    let docs = if args.corpus.is_dir() {
        load_corpus(&args.corpus)?
    } else {
        load_corpus_file(&args.corpus)?
    };
    let summaries = summarize_corpus(&session.ctx(), &session.engine, &docs)?;
    save_summaries(&args.out, &summaries)?;

    let mut m = session.manifest("summarize", &args.common)?;
    if args.corpus.is_file() {
        m.add_input(&args.corpus)?;
    }
    m.add_output(&args.out)?;
    session.finish_manifest(&mut m, &args.common)?;
    m.write(&args.out)?;
    println!(
        "summarized {} documents -> {}",
        summaries.len(),
        args.out.display()
    );
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let session = Session::open(&args.common, Some(&args.overrides))?;
    let ctx = session.ctx();
    let engine = &session.engine;

    if args.boost && args.method != MethodArg::Literature {
        return Err(Error::Config(
            "--boost applies only to --method literature".into(),
        ));
    }
    let needs_data = matches!(args.method, MethodArg::Hypogenic | MethodArg::Hyporefine);
    if args.data.is_some() != needs_data {
        return Err(Error::Config(match args.method {
            MethodArg::Hypogenic | MethodArg::Hyporefine => {
                "this method trains on examples: pass --data".into()
            }
            _ => "--data is not used by this method".into(),
        }));
    }
    let needs_summaries = matches!(args.method, MethodArg::Hyporefine | MethodArg::Literature);
    if args.summaries.is_some() != needs_summaries {
        return Err(Error::Config(match args.method {
            MethodArg::Hyporefine | MethodArg::Literature => {
                "this method reads paper summaries: pass --summaries".into()
            }
            _ => "--summaries is not used by this method".into(),
        }));
    }
    if args.count.is_some() && needs_data {
        return Err(Error::Config(
            "--count applies only to literature and zero-shot generation".into(),
        ));
    }

    let mut m = session.manifest("generate", &args.common)?;
    let summaries = match &args.summaries {
        Some(path) => {
            m.add_input(path)?;
            load_summaries(path)?
        }
        None => Vec::new(),
    };
    let train = match &args.data {
        Some(path) => {
            m.add_input(path)?;
            Some(load_dataset(path, SplitTag::Train, &session.loaded.task)?)
        }
        None => None,
    };

    let (bank, method_name, final_step, extra) = match args.method {
        MethodArg::Hypogenic | MethodArg::Hyporefine => {
            let train = train.as_ref().expect("checked above");
            let mode = match args.method {
                MethodArg::Hypogenic => TrainMode::Hypogenic,
                _ => TrainMode::Hyporefine {
                    summaries: &summaries,
                },
            };
            let outcome = run_training(&ctx, engine, train.examples(), mode)?;
            let regenerations = outcome.steps.iter().filter(|s| s.regenerated).count();
            let extra = serde_json::json!({
                "training_examples": train.len(),
                "update_steps": outcome.steps.len(),
                "regenerations": regenerations,
            });
            if args.method == MethodArg::Hyporefine {
                let traces = TraceFile {
                    task_id: session.loaded.task.task_id.clone(),
                    model_id: session.model_id.clone(),
                    traces: outcome
                        .refinement_traces()
                        .into_iter()
                        .cloned()
                        .collect(),
                };
                let trace_path = sibling(&args.out, ".trace.json");
                save_traces(&trace_path, &traces)?;
                m.add_output(&trace_path)?;
            }
            let name = if args.method == MethodArg::Hypogenic {
                "hypogenic"
            } else {
                "hyporefine"
            };
            (outcome.state.bank, name, outcome.state.step, extra)
        }
        MethodArg::Literature => {
            let count = args.count.unwrap_or(engine.capacity);
            let mut bank = generate_literature_bank(&ctx, engine, &summaries, count)?;
            if args.boost {
                boost_specificity(&ctx, engine, &mut bank)?;
            }
            let extra = serde_json::json!({ "count": bank.len(), "boosted": args.boost });
            (bank, "literature", 0, extra)
        }
        MethodArg::ZeroShot => {
            let count = args.count.unwrap_or(engine.capacity);
            let bank = generate_zero_shot_bank(&ctx, engine, count)?;
            let extra = serde_json::json!({ "count": bank.len() });
            (bank, "zero-shot", 0, extra)
        }
    };

    let file = BankFile::new(
        &session.loaded.task.task_id,
        &session.model_id,
        method_name,
        final_step,
        engine.clone(),
        &bank,
    );
    save_bank(&args.out, &file)?;
    m.add_output(&args.out)?;
    m.extra = extra;
    session.finish_manifest(&mut m, &args.common)?;
    m.write(&args.out)?;
    println!(
        "generated {} hypotheses ({}) -> {}",
        bank.len(),
        method_name,
        args.out.display()
    );
    Ok(())
}

pub fn union(args: &UnionArgs) -> Result<()> {
    let session = Session::open(&args.common, Some(&args.overrides))?;
    let ctx = session.ctx();
    let engine = &session.engine;

    let main_file = load_bank(&args.main)?;
    let lit_file = load_bank(&args.literature)?;
    for (path, file) in [(&args.main, &main_file), (&args.literature, &lit_file)] {
        if file.task_id != session.loaded.task.task_id {
            return Err(Error::InvalidData(format!(
                "{} belongs to task `{}`, not `{}`",
                path.display(),
                file.task_id,
                session.loaded.task.task_id
            )));
        }
    }

    let (main_bank, main_calls) = dedup_stage(&ctx, engine, &main_file.bank()?)?;
    let (lit_bank, lit_calls) = dedup_stage(&ctx, engine, &lit_file.bank()?)?;
    let merged = union_banks(&main_bank, &lit_bank, engine.capacity, session.seed)?;

    let chosen_literature: Vec<&str> = merged
        .entries()
        .iter()
        .filter(|h| lit_bank.get(&h.id).is_some())
        .map(|h| h.id.as_str())
        .collect();

    let file = BankFile::new(
        &session.loaded.task.task_id,
        &session.model_id,
        "union",
        main_file.final_step,
        engine.clone(),
        &merged,
    );
    save_bank(&args.out, &file)?;

    let mut m = session.manifest("union", &args.common)?;
    m.add_input(&args.main)?;
    m.add_input(&args.literature)?;
    m.add_output(&args.out)?;
    m.extra = serde_json::json!({
        "main_kept": main_bank.len(),
        "literature_kept": lit_bank.len(),
        "chosen_literature_ids": chosen_literature,
        "checker_calls": checker_log(&main_calls, &lit_calls),
    });
    session.finish_manifest(&mut m, &args.common)?;
    m.write(&args.out)?;
    println!(
        "union of {} + {} -> {} hypotheses -> {}",
        main_bank.len(),
        lit_bank.len(),
        merged.len(),
        args.out.display()
    );
    Ok(())
}

/// Judge redundancy within one bank and drop the redundant entries.
fn dedup_stage(
    ctx: &PipelineContext<'_>,
    engine: &EngineConfig,
    bank: &HypothesisBank,
) -> Result<(HypothesisBank, Vec<CheckerCall>)> {
    let (matrix, calls) = build_redundancy_matrix(ctx, engine, bank)?;
    let deduped = deduplicate(bank, &matrix)?;
    Ok((deduped, calls))
}

fn checker_log(main: &[CheckerCall], literature: &[CheckerCall]) -> serde_json::Value {
    serde_json::json!({
        "main": main,
        "literature": literature,
    })
}

pub fn infer(args: &InferArgs) -> Result<()> {
    let session = Session::open(&args.common, None)?;
    let bank_file = load_bank(&args.bank)?;
    let dataset = load_dataset(&args.data, args.split.into(), &session.loaded.task)?;
    let run = evaluate_bank(
        &session.ctx(),
        &session.engine,
        &bank_file.bank()?,
        &dataset,
        &[session.seed],
    )?;
    write_report(
        &session,
        &args.common,
        "infer",
        &args.out,
        &[&args.bank, &args.data],
        args.bank.display().to_string(),
        run,
        serde_json::Value::Null,
    )
}

pub fn evaluate(args: &EvaluateArgs, cross: bool) -> Result<()> {
    let session = Session::open(&args.common, Some(&args.overrides))?;
    let command = if cross { "cross-eval" } else { "evaluate" };
    if cross && args.common.backend.is_none() {
        return Err(Error::Config(
            "cross-eval needs --backend to name the inference model".into(),
        ));
    }
    let seeds = args
        .seeds
        .clone()
        .unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
    let dataset = load_dataset(&args.data, args.split.into(), &session.loaded.task)?;

    let mut inputs: Vec<&PathBuf> = vec![&args.data];
    let (run, subject, extra) = match (&args.bank, args.baseline) {
        (Some(bank_path), None) => {
            let bank_file = load_bank(bank_path)?;
            if bank_file.task_id != session.loaded.task.task_id {
                return Err(Error::InvalidData(format!(
                    "{} belongs to task `{}`, not `{}`",
                    bank_path.display(),
                    bank_file.task_id,
                    session.loaded.task.task_id
                )));
            }
            inputs.push(bank_path);
            let run = evaluate_bank(
                &session.ctx(),
                &session.engine,
                &bank_file.bank()?,
                &dataset,
                &seeds,
            )?;
            let extra = if cross {
                serde_json::json!({
                    "generation_model": bank_file.model_id,
                    "inference_model": session.model_id,
                })
            } else {
                serde_json::Value::Null
            };
            (run, bank_path.display().to_string(), extra)
        }
        (None, Some(baseline)) => {
            if cross {
                return Err(Error::Config(
                    "cross-eval compares generation and inference backends; baselines have no generation backend"
                        .into(),
                ));
            }
            let kind = match baseline {
                BaselineArg::ZeroShot => BaselineKind::ZeroShot,
                BaselineArg::FewShot => BaselineKind::FewShot,
            };
            let train: Dataset;
            let train_examples = match (&args.train, baseline) {
                (Some(path), _) => {
                    inputs.push(path);
                    train = load_dataset(path, SplitTag::Train, &session.loaded.task)?;
                    train.examples()
                }
                (None, BaselineArg::FewShot) => {
                    return Err(Error::Config(
                        "the few-shot baseline draws demonstrations: pass --train".into(),
                    ));
                }
                (None, BaselineArg::ZeroShot) => &[],
            };
            let run = evaluate_baseline(
                &session.ctx(),
                &session.engine,
                kind,
                train_examples,
                &dataset,
                &seeds,
            )?;
            let name = match baseline {
                BaselineArg::ZeroShot => "baseline:zero-shot",
                BaselineArg::FewShot => "baseline:few-shot",
            };
            (run, name.to_string(), serde_json::Value::Null)
        }
        (None, None) => {
            return Err(Error::Config("pass --bank or --baseline".into()));
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };

    let input_paths: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    write_report_with_seeds(
        &session,
        &args.common,
        command,
        &args.out,
        &input_paths,
        subject,
        run,
        extra,
        &seeds,
    )
}

#[allow(clippy::too_many_arguments)]
fn write_report(
    session: &Session,
    common: &CommonOpts,
    command: &str,
    out: &Path,
    inputs: &[&PathBuf],
    subject: String,
    run: EvalRun,
    extra: serde_json::Value,
) -> Result<()> {
    let input_paths: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let seeds: Vec<u64> = run.metrics.per_seed.iter().map(|s| s.seed).collect();
    write_report_with_seeds(
        session,
        common,
        command,
        out,
        &input_paths,
        subject,
        run,
        extra,
        &seeds,
    )
}

#[allow(clippy::too_many_arguments)]
fn write_report_with_seeds(
    session: &Session,
    common: &CommonOpts,
    command: &str,
    out: &Path,
    inputs: &[&Path],
    subject: String,
    run: EvalRun,
    extra: serde_json::Value,
    seeds: &[u64],
) -> Result<()> {
    let report = ReportFile {
        task_id: session.loaded.task.task_id.clone(),
        model_id: session.model_id.clone(),
        subject: subject.clone(),
        metrics: run.metrics,
        predictions: run.predictions,
    };
    save_report(out, &report)?;

    let mut m = session.manifest(command, common)?;
    for input in inputs {
        m.add_input(input)?;
    }
    m.add_output(out)?;
    m.seeds = seeds.to_vec();
    m.extra = extra;
    session.finish_manifest(&mut m, common)?;
    m.write(out)?;
    println!(
        "{} of {}: accuracy {:.4}, macro-F1 {:.4} over {} seed(s) -> {}",
        command,
        subject,
        report.metrics.mean_accuracy,
        report.metrics.mean_macro_f1,
        report.metrics.per_seed.len(),
        out.display()
    );
    Ok(())
}

/// `path` with `suffix` appended to its file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_stem()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}
