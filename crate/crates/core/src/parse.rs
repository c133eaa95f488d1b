//! Extraction of structure from model responses.
//!
//! Responses are free text, so parsing is defensive but never inventive:
//! a hypothesis list requires explicitly numbered items, and an answer is
//! accepted only when it resolves to exactly one task label. Anything
//! ambiguous is an error the caller scores as a parse failure rather than
//! a guess.

use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::model::{normalize_hypothesis_text, TaskSpec};

/// `"N. "` / `"N) "` item prefix, compiled once.
fn item_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(\d{1,3})[.)]\s+(.*)$").expect("item pattern compiles")
    })
}

/// Case-insensitive `final answer:` marker, compiled once.
fn marker_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)final\s+answer\s*:").expect("marker pattern compiles")
    })
}

/// Parse a numbered hypothesis list ("1. ...", "2) ...") from a response.
///
/// Prose before the first item is ignored. A line numbered one more than
/// the previous item starts the next item; any other line (including lines
/// with out-of-sequence numbers, which models use for sublists) continues
/// the current item and is joined with a space. At most `expected` items
/// are returned; extra trailing items are dropped. Zero items is an error.
pub fn parse_hypothesis_list(text: &str, expected: usize) -> Result<Vec<String>> {
    let item_re = item_pattern();
    let mut items: Vec<Vec<String>> = Vec::new();
    let mut next_number: u64 = 1;
    for line in text.lines() {
        if let Some(caps) = item_re.captures(line) {
            let number: u64 = caps[1].parse().expect("1-3 digits fit in u64");
            if number == next_number {
                items.push(vec![caps[2].trim().to_string()]);
                next_number += 1;
                continue;
            }
        }
        if let Some(current) = items.last_mut() {
            let extra = line.trim();
            if !extra.is_empty() {
                current.push(extra.to_string());
            }
        }
    }
    let mut texts: Vec<String> = items
        .into_iter()
        .map(|parts| normalize_hypothesis_text(&parts.join(" ")))
        .filter(|t| !t.is_empty())
        .collect();
    if texts.is_empty() {
        return Err(Error::NoHypotheses);
    }
    texts.truncate(expected);
    Ok(texts)
}

/// Extract the final answer from a response and resolve it to a canonical
/// task label.
///
/// The marker is the **last** case-insensitive `final answer` in the text,
/// optionally wrapped in braces; the answer runs to the closing brace or
/// end of line. Resolution tries, in order:
///
/// 1. exact label match after trimming and case folding;
/// 2. for tasks with positional answers, the words "first"/"second"
///    selecting `label_set[0]`/`label_set[1]` (ambiguous if both appear);
/// 3. a unique label occurring as a word-bounded substring of the answer.
///
/// Anything else is an error; a label is never invented.
pub fn parse_final_answer(text: &str, task: &TaskSpec) -> Result<String> {
    let last = marker_pattern()
        .find_iter(text)
        .last()
        .ok_or(Error::MissingAnswerMarker)?;
    let tail = &text[last.end()..];
    let end = tail
        .find(['}', '\n'])
        .unwrap_or(tail.len());
    let raw = tail[..end]
        .trim()
        .trim_matches(['"', '\'', '`', '*', '_', '.', ',', '!', ';'])
        .trim();
    if raw.is_empty() {
        return Err(Error::UnmatchedAnswer(String::new()));
    }

    if let Some(label) = task.canonical_label(raw) {
        return Ok(label.to_string());
    }

    let folded = raw.to_lowercase();
    if task.positional_answers && task.label_set.len() == 2 {
        let first = word_occurs(&folded, "first");
        let second = word_occurs(&folded, "second");
        match (first, second) {
            (true, false) => return Ok(task.label_set[0].clone()),
            (false, true) => return Ok(task.label_set[1].clone()),
            (true, true) => return Err(Error::UnmatchedAnswer(truncate_for_error(raw))),
            (false, false) => {} // no positional cue: fall through to substring matching
        }
    }

    let mut matched: Option<&str> = None;
    for label in &task.label_set {
        if word_occurs(&folded, &label.trim().to_lowercase()) {
            if matched.is_some() {
                return Err(Error::UnmatchedAnswer(truncate_for_error(raw)));
            }
            matched = Some(label);
        }
    }
    match matched {
        Some(label) => Ok(label.to_string()),
        None => Err(Error::UnmatchedAnswer(truncate_for_error(raw))),
    }
}

/// Parse a yes/no verdict. Looks after the last final-answer marker when
/// one exists, otherwise at the whole text; exactly one of yes/no must
/// occur as a word. Returns `None` when the verdict is unclear.
pub fn parse_yes_no(text: &str) -> Option<bool> {
    let scope = match marker_pattern().find_iter(text).last() {
        Some(m) => &text[m.end()..],
        None => text,
    };
    let folded = scope.to_lowercase();
    let yes = word_occurs(&folded, "yes");
    let no = word_occurs(&folded, "no");
    match (yes, no) {
        (true, false) => Some(true),
        (false, true) => Some(false),
        _ => None,
    }
}

/// Does `needle` occur in `haystack` bounded by non-alphanumeric characters?
/// Both inputs are expected to be lowercase already.
fn word_occurs(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let bytes = haystack.as_bytes();
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let left_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
        let right_ok = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if left_ok && right_ok {
            return true;
        }
        from = start + 1;
    }
    false
}

fn truncate_for_error(raw: &str) -> String {
    const LIMIT: usize = 80;
    if raw.chars().count() <= LIMIT {
        raw.to_string()
    } else {
        let cut: String = raw.chars().take(LIMIT).collect();
        format!("{cut}...")
    }
}
