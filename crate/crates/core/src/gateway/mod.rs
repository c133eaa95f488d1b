//! Completion gateway with live, record, and replay modes.
//!
//! Every completion request is reduced to a stable fingerprint (a SHA-256
//! digest of its canonicalized content). In record mode each live response
//! is appended to a session fixture file keyed by `(fingerprint,
//! sequence_index)`, where the sequence index counts repeats of the same
//! fingerprint within the session. In replay mode the gateway serves
//! responses from such a file and holds a per-fingerprint cursor, so a
//! request repeated n times replays the n recorded responses in order; a
//! request with no remaining recording is an error, never a silent
//! fallthrough to the network. Replay gateways hold no transport at all, so
//! they cannot touch the network by construction.

mod fixtures;
mod live;

pub use fixtures::{FixtureRecord, FixtureStore};
pub use live::{BackendConfig, HttpTransport, LiveBackend, RetryPolicy, Transport, TransportError};

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which pipeline agent issued a request. Used for call accounting in run
/// manifests and instrumented tests; the gateway treats all roles alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentRole {
    /// Condenses one document into key findings.
    Summarizer,
    /// Proposes hypotheses from labeled examples.
    Generator,
    /// Proposes hypotheses from literature summaries alone.
    GeneratorLiterature,
    /// Proposes hypotheses from summaries and examples together.
    GeneratorJoint,
    /// Proposes hypotheses from task instructions alone.
    GeneratorZeroShot,
    /// Rewrites a hypothesis batch against the wrong-example pool.
    RefinerData,
    /// Rewrites a hypothesis batch against literature summaries.
    RefinerLiterature,
    /// Classifies one instance under a hypothesis list.
    Inference,
    /// Classifies one instance directly (zero/few-shot baseline).
    Baseline,
    /// Rewrites one hypothesis to be more specific.
    Booster,
    /// Judges whether two hypotheses say the same thing.
    RedundancyChecker,
}

impl AgentRole {
    pub const ALL: [AgentRole; 11] = [
        AgentRole::Summarizer,
        AgentRole::Generator,
        AgentRole::GeneratorLiterature,
        AgentRole::GeneratorJoint,
        AgentRole::GeneratorZeroShot,
        AgentRole::RefinerData,
        AgentRole::RefinerLiterature,
        AgentRole::Inference,
        AgentRole::Baseline,
        AgentRole::Booster,
        AgentRole::RedundancyChecker,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentRole::Summarizer => "summarizer",
            AgentRole::Generator => "generator",
            AgentRole::GeneratorLiterature => "generator-literature",
            AgentRole::GeneratorJoint => "generator-joint",
            AgentRole::GeneratorZeroShot => "generator-zero-shot",
            AgentRole::RefinerData => "refiner-data",
            AgentRole::RefinerLiterature => "refiner-literature",
            AgentRole::Inference => "inference",
            AgentRole::Baseline => "baseline",
            AgentRole::Booster => "booster",
            AgentRole::RedundancyChecker => "redundancy-checker",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One chat completion request: a system prompt, a user prompt, and the
/// sampling knobs that affect the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    /// Stable content digest. Prompt text is canonicalized first (CR/LF
    /// variants collapse to `\n`, trailing spaces and tabs are stripped from
    /// every line) so that cosmetic whitespace differences replay cleanly,
    /// while any change to model, wording, temperature, or token cap yields
    /// a different fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for part in [
            canonicalize_prompt_text(&self.model_id),
            canonicalize_prompt_text(&self.system),
            canonicalize_prompt_text(&self.user),
            format!("{:?}", self.temperature),
            self.max_tokens.to_string(),
        ] {
            hasher.update(part.len().to_string().as_bytes());
            hasher.update(b":");
            hasher.update(part.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Normalize newlines to `\n` and strip trailing spaces/tabs per line.
/// `split('\n')` keeps a trailing empty segment when the text ends in a
/// newline, so "a\n" and "a" stay distinguishable.
fn canonicalize_prompt_text(text: &str) -> String {
    text.replace("\r\n", "\n")
        .replace('\r', "\n")
        .split('\n')
        .map(|l| l.trim_end_matches([' ', '\t']))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Why the backend stopped generating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinishReason {
    /// Natural stop; the text is complete.
    Stop,
    /// Token cap hit; the text may be truncated mid-thought.
    Length,
    /// Anything else the backend reported.
    Unknown,
}

/// One completion response. `text` may be empty only when the backend
/// reported truncation; token counts are absent for replayed responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

impl CompletionResponse {
    /// A replayed or scripted response: plain text, natural stop.
    pub fn of_text(text: impl Into<String>) -> Self {
        CompletionResponse {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            prompt_tokens: None,
            completion_tokens: None,
        }
    }
}

/// How the gateway services requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayMode {
    /// Forward to the backend; nothing is persisted.
    Live,
    /// Forward to the backend and append each exchange to a fixture file.
    Record,
    /// Serve exclusively from a fixture file; misses are errors.
    Replay,
}

impl fmt::Display for GatewayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GatewayMode::Live => "live",
            GatewayMode::Record => "record",
            GatewayMode::Replay => "replay",
        })
    }
}

impl FromStr for GatewayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(GatewayMode::Live),
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(Error::Config(format!(
                "unknown gateway mode `{other}` (expected live, record, or replay)"
            ))),
        }
    }
}

/// Anything that can service a completion request. Engines depend on this
/// trait so they can be driven by the production gateway or by scripted
/// stand-ins in tests.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, role: AgentRole, request: &CompletionRequest) -> Result<CompletionResponse>;
}

/// The production completion client; see the module docs for mode semantics.
pub struct Gateway {
    mode: GatewayMode,
    store: Mutex<FixtureStore>,
    /// Next sequence index to serve or record, per fingerprint.
    cursor: Mutex<BTreeMap<String, u32>>,
    /// Successful completions per role.
    tally: Mutex<BTreeMap<AgentRole, u64>>,
    backend: Option<LiveBackend>,
    recorder: Option<Mutex<BufWriter<File>>>,
    session_path: Option<PathBuf>,
}

impl Gateway {
    /// Replay strictly from the fixture file at `path`.
    pub fn replay(path: &Path) -> Result<Gateway> {
        Ok(Gateway::replay_from_store(FixtureStore::load(path)?))
    }

    /// Replay strictly from an in-memory store.
    pub fn replay_from_store(store: FixtureStore) -> Gateway {
        Gateway {
            mode: GatewayMode::Replay,
            store: Mutex::new(store),
            cursor: Mutex::new(BTreeMap::new()),
            tally: Mutex::new(BTreeMap::new()),
            backend: None,
            recorder: None,
            session_path: None,
        }
    }

    /// Forward to `backend` and append every exchange to a fresh session
    /// file at `path` (truncating anything already there).
    pub fn record(path: &Path, backend: LiveBackend) -> Result<Gateway> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Gateway {
            mode: GatewayMode::Record,
            store: Mutex::new(FixtureStore::new()),
            cursor: Mutex::new(BTreeMap::new()),
            tally: Mutex::new(BTreeMap::new()),
            backend: Some(backend),
            recorder: Some(Mutex::new(BufWriter::new(file))),
            session_path: Some(path.to_path_buf()),
        })
    }

    /// Forward to `backend`; nothing is persisted.
    pub fn live(backend: LiveBackend) -> Gateway {
        Gateway {
            mode: GatewayMode::Live,
            store: Mutex::new(FixtureStore::new()),
            cursor: Mutex::new(BTreeMap::new()),
            tally: Mutex::new(BTreeMap::new()),
            backend: Some(backend),
            recorder: None,
            session_path: None,
        }
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    /// Path of the session file being written, if recording.
    pub fn session_path(&self) -> Option<&Path> {
        self.session_path.as_deref()
    }

    /// Successful completions per role so far.
    pub fn call_tallies(&self) -> BTreeMap<AgentRole, u64> {
        self.tally.lock().expect("tally lock").clone()
    }

    /// Number of fixture records currently held (loaded or recorded).
    pub fn fixture_count(&self) -> usize {
        self.store.lock().expect("store lock").len()
    }

    fn bump(&self, role: AgentRole, fingerprint: &str) {
        *self
            .cursor
            .lock()
            .expect("cursor lock")
            .entry(fingerprint.to_string())
            .or_insert(0) += 1;
        *self.tally.lock().expect("tally lock").entry(role).or_insert(0) += 1;
    }

    fn next_index(&self, fingerprint: &str) -> u32 {
        *self
            .cursor
            .lock()
            .expect("cursor lock")
            .get(fingerprint)
            .unwrap_or(&0)
    }
}

impl CompletionClient for Gateway {
    fn complete(&self, role: AgentRole, request: &CompletionRequest) -> Result<CompletionResponse> {
        let fingerprint = request.fingerprint();
        let sequence_index = self.next_index(&fingerprint);
        match self.mode {
            GatewayMode::Replay => {
                let text = self
                    .store
                    .lock()
                    .expect("store lock")
                    .lookup(&fingerprint, sequence_index)
                    .map(str::to_string);
                match text {
                    Some(text) => {
                        self.bump(role, &fingerprint);
                        Ok(CompletionResponse::of_text(text))
                    }
                    None => Err(Error::ReplayMiss {
                        fingerprint,
                        sequence_index,
                    }),
                }
            }
            GatewayMode::Record | GatewayMode::Live => {
                let backend = self
                    .backend
                    .as_ref()
                    .expect("live and record gateways hold a backend");
                let response = backend.send_with_retry(request)?;
                if let Some(recorder) = &self.recorder {
                    let record = FixtureRecord {
                        fingerprint: fingerprint.clone(),
                        sequence_index,
                        response_text: response.text.clone(),
                    };
                    self.store
                        .lock()
                        .expect("store lock")
                        .insert(&record.fingerprint, record.sequence_index, &record.response_text)?;
                    let mut w = recorder.lock().expect("recorder lock");
                    let line = serde_json::to_string(&record)
                        .expect("fixture records always serialize");
                    let path = self.session_path.as_deref().unwrap_or(Path::new("<session>"));
                    w.write_all(line.as_bytes())
                        .and_then(|_| w.write_all(b"\n"))
                        .and_then(|_| w.flush())
                        .map_err(|e| Error::io(path, e))?;
                }
                self.bump(role, &fingerprint);
                Ok(response)
            }
        }
    }
}
