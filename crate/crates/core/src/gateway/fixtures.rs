//! Fixture sessions: recorded completion exchanges on disk.
//!
//! A session is a JSON-lines file, one object per exchange:
//! `{"fingerprint": ..., "sequence_index": ..., "response_text": ...}`.
//! The sequence index is a 0-based counter of repeats of the same
//! fingerprint within the session, so loading validates that each
//! fingerprint's indexes form a contiguous `0..n` run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub fingerprint: String,
    pub sequence_index: u32,
    pub response_text: String,
}

/// In-memory index of a fixture session.
#[derive(Debug, Default, Clone)]
pub struct FixtureStore {
    map: BTreeMap<(String, u32), String>,
}

impl FixtureStore {
    pub fn new() -> Self {
        FixtureStore::default()
    }

    /// Load and validate a session file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut store = FixtureStore::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord =
                serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    reason: format!("bad fixture record: {e}"),
                })?;
            store
                .insert(&record.fingerprint, record.sequence_index, &record.response_text)
                .map_err(|e| Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
        }
        store.check_contiguous().map_err(|e| match e {
            Error::InvalidData(reason) => Error::MalformedRecord {
                path: path.to_path_buf(),
                line: 0,
                reason,
            },
            other => other,
        })?;
        Ok(store)
    }

    /// Insert one exchange; duplicate `(fingerprint, sequence_index)` pairs
    /// are rejected.
    pub fn insert(&mut self, fingerprint: &str, sequence_index: u32, text: &str) -> Result<()> {
        let key = (fingerprint.to_string(), sequence_index);
        if self.map.contains_key(&key) {
            return Err(Error::InvalidData(format!(
                "duplicate fixture for fingerprint {fingerprint} at sequence index {sequence_index}"
            )));
        }
        self.map.insert(key, text.to_string());
        Ok(())
    }

    pub fn lookup(&self, fingerprint: &str, sequence_index: u32) -> Option<&str> {
        self.map
            .get(&(fingerprint.to_string(), sequence_index))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// All records in `(fingerprint, sequence_index)` order.
    pub fn records(&self) -> impl Iterator<Item = FixtureRecord> + '_ {
        self.map.iter().map(|((fp, seq), text)| FixtureRecord {
            fingerprint: fp.clone(),
            sequence_index: *seq,
            response_text: text.clone(),
        })
    }

    /// Write the store as a session file in sorted order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for record in self.records() {
            out.push_str(&serde_json::to_string(&record).expect("fixture records serialize"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Each fingerprint's sequence indexes must form a contiguous 0..n run.
    fn check_contiguous(&self) -> Result<()> {
        let mut counts: BTreeMap<&str, (u32, u32)> = BTreeMap::new(); // fp -> (count, max)
        for ((fp, seq), _) in &self.map {
            let entry = counts.entry(fp.as_str()).or_insert((0, 0));
            entry.0 += 1;
            entry.1 = entry.1.max(*seq);
        }
        for (fp, (count, max)) in counts {
            if count != max + 1 {
                return Err(Error::InvalidData(format!(
                    "fingerprint {fp} has {count} fixture(s) but max sequence index {max}; \
                     sequence indexes must be contiguous from 0"
                )));
            }
        }
        Ok(())
    }
}
