//! Shared helpers for the CLI integration tests: paths into the bundled
//! synthetic task, a deterministic scripted backend that stands in for a
//! live model, and a runner for the compiled binary.
//!
//! The scripted backend answers every prompt as a pure function of the
//! prompt text (dispatching on marker phrases the bundled templates open
//! with), so recorded fixture sessions can be regenerated at any time and
//! replays are stable across machines.

// Each test target pulls in a different subset of these helpers.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hypogen_core::gateway::{
    CompletionRequest, CompletionResponse, Gateway, LiveBackend, RetryPolicy, Transport,
    TransportError,
};
use sha2::{Digest, Sha256};

/// Model id the fixture sessions were recorded under.
pub const SCRIPTED_MODEL: &str = "scripted-tiny";
/// Second model id, for exercising cross-model evaluation.
pub const ALT_MODEL: &str = "scripted-alt";

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/synthetic")
}

pub fn task_config() -> PathBuf {
    data_dir().join("task.toml")
}

pub fn fixture(name: &str) -> PathBuf {
    data_dir().join("fixtures").join(name)
}

/// Run the compiled binary with `args` and wait for it.
pub fn hypogen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypogen"))
        .args(args)
        .output()
        .expect("binary launches")
}

pub fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

/// A gateway recording a fresh fixture session served by the scripted
/// backend.
pub fn record_gateway(path: &Path) -> Gateway {
    let backend = LiveBackend::new(Box::new(ScriptedTransport), RetryPolicy::no_delay());
    Gateway::record(path, backend).expect("fixture session file opens")
}

/// Deterministic stand-in for a live backend.
pub struct ScriptedTransport;

impl Transport for ScriptedTransport {
    fn send(&self, request: &CompletionRequest) -> Result<CompletionResponse, TransportError> {
        Ok(CompletionResponse::of_text(respond(&request.user)))
    }
}

/// Answer one prompt. Dispatches on the marker phrases the bundled
/// templates open with; anything unrecognized is a test bug.
pub fn respond(user: &str) -> String {
    if user.contains("Summarize the following document") {
        summary_response(user)
    } else if user.contains("Compare two rules") {
        redundancy_response(user)
    } else if user.contains("Rewrite the rule below") {
        booster_response(user)
    } else if user.contains("Revise the numbered rules") {
        refine_response(user)
    } else if user.contains("Decide whether the snippet") || user.contains("Label the snippet") {
        classify_response(user)
    } else if user.contains("Propose exactly") {
        generate_response(user)
    } else {
        panic!("scripted backend got an unrecognized prompt:\n{user}");
    }
}

/// First byte of the SHA-256 of `text`: the backend's source of stable
/// pseudo-randomness.
fn digest0(text: &str) -> u8 {
    Sha256::digest(text.as_bytes())[0]
}

/// Eight hex characters derived from `text`, used to keep generated rule
/// texts distinct across batches.
fn short_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..4])
}

/// The number in the "exactly N" phrase every list-requesting template
/// carries.
fn requested_count(user: &str) -> usize {
    let at = user.find("exactly ").expect("prompt asks for an exact count") + "exactly ".len();
    user[at..]
        .chars()
        .take_while(char::is_ascii_digit)
        .collect::<String>()
        .parse()
        .expect("a number follows `exactly`")
}

/// Bodies of all `N. ...` / `N) ...` lines in the prompt. Only rule lists
/// are numbered in the bundled templates.
fn numbered_items(user: &str) -> Vec<String> {
    let mut items = Vec::new();
    for line in user.lines() {
        let t = line.trim_start();
        let digits = t.chars().take_while(char::is_ascii_digit).count();
        if digits == 0 {
            continue;
        }
        if let Some(rest) = t[digits..].strip_prefix(['.', ')']) {
            let body = rest.trim();
            if !body.is_empty() {
                items.push(body.to_string());
            }
        }
    }
    items
}

/// The rest of the line following the first occurrence of `marker`.
fn line_after<'a>(user: &'a str, marker: &str) -> &'a str {
    let at = user
        .find(marker)
        .unwrap_or_else(|| panic!("prompt lacks `{marker}`:\n{user}"))
        + marker.len();
    user[at..].lines().next().unwrap_or("").trim()
}

/// The `xxxx-N` token inside a generated rule's `(cue xxxx-N)` suffix.
/// Refinement and boosting both preserve it, so it identifies a lineage.
fn cue_token(text: &str) -> Option<&str> {
    let at = text.find("(cue ")? + "(cue ".len();
    let end = text[at..].find(')')?;
    Some(&text[at..at + end])
}

fn summary_response(user: &str) -> String {
    let title = line_after(user, "Title: ");
    let finding = match digest0(user) % 3 {
        0 => "snippets that close on a settled outcome read as upbeat regardless of stakes",
        1 => "another person acting for the writer is the strongest single upbeat cue",
        _ => "repetition words like again and still mark recurring annoyances as downbeat",
    };
    format!(
        "The document titled {title} argues that surface word counts are weak evidence. \
         Its key finding is that {finding}, and it recommends checking named actors and \
         the closing clause before anything else."
    )
}

fn generate_response(user: &str) -> String {
    const THEMES: [(&str, &str); 8] = [
        ("name another person doing something for the writer", "positive"),
        ("mention a small task finished or fixed", "positive"),
        ("tie a sensory detail to a good outcome", "positive"),
        ("show an institution failing or delaying", "negative"),
        ("repeat words like again or still about a chore", "negative"),
        ("end on a clause that settles the situation", "positive"),
        ("leave the writer waiting with no resolution", "negative"),
        ("mention a plan that worked out in time", "positive"),
    ];
    let n = requested_count(user);
    let seed = short_hash(user);
    let base = digest0(user) as usize;
    let mut lines = Vec::with_capacity(n);
    for i in 1..=n {
        let (theme, polarity) = THEMES[(base + i) % THEMES.len()];
        lines.push(format!(
            "{i}. Snippets that {theme} lean {polarity} (cue {seed}-{i})."
        ));
    }
    lines.join("\n")
}

fn refine_response(user: &str) -> String {
    let items = numbered_items(user);
    assert!(!items.is_empty(), "refinement prompt carries no rules:\n{user}");
    items
        .iter()
        .enumerate()
        .map(|(i, item)| format!("{}. {item} (sharpened)", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn booster_response(user: &str) -> String {
    let rule = line_after(user, "Rule: ");
    format!("{rule} The cue must be stated explicitly in the snippet.")
}

fn redundancy_response(user: &str) -> String {
    let a = line_after(user, "A: ");
    let b = line_after(user, "B: ");
    let redundant = match (cue_token(a), cue_token(b)) {
        (Some(x), Some(y)) => {
            // Same lineage is always redundant; unrelated rules rarely are.
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            x == y || digest0(&format!("{lo}|{hi}")) < 24
        }
        _ => a == b,
    };
    if redundant {
        "Both target the same cue.\nFinal answer: yes".to_string()
    } else {
        "They watch different cues.\nFinal answer: no".to_string()
    }
}

fn classify_response(user: &str) -> String {
    let label = if digest0(user) % 2 == 0 {
        "positive"
    } else {
        "negative"
    };
    format!("Weighing the rules against the snippet, the {label} reading fits best.\nFinal answer: {label}")
}
