//! Prompt templates and serialization of data into prompt blocks.
//!
//! Templates are loaded from a TOML file with one `[templates.<id>]` table
//! per template, each carrying a `system` text, a `user` text, and the list
//! of placeholders it uses. Placeholders appear in the texts as
//! `<lower_snake_case>` tokens. Loading cross-checks the declaration
//! against the texts in both directions, so a typo in either place is a
//! load-time error rather than a silently unresolved token at render time.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use regex::Regex;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{Example, TaskSpec};

/// One named prompt template.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: String,
    pub system: String,
    pub user: String,
    pub placeholders: BTreeSet<String>,
}

/// A rendered system/user prompt pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

/// Values to substitute into a template.
#[derive(Debug, Clone, Default)]
pub struct RenderContext {
    bindings: BTreeMap<String, String>,
}

impl RenderContext {
    pub fn new() -> Self {
        RenderContext::default()
    }

    pub fn bind(mut self, name: &str, value: impl Into<String>) -> Self {
        self.bindings.insert(name.to_string(), value.into());
        self
    }

    pub fn bind_count(self, name: &str, count: usize) -> Self {
        self.bind(name, count.to_string())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.bindings.get(name).map(String::as_str)
    }
}

fn placeholder_regex() -> Regex {
    Regex::new(r"<([a-z][a-z0-9_]*)>").expect("placeholder pattern compiles")
}

/// All `<name>` tokens occurring in `text`.
fn scan_placeholders(text: &str) -> BTreeSet<String> {
    placeholder_regex()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .collect()
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    templates: BTreeMap<String, TemplateEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateEntry {
    system: String,
    user: String,
    placeholders: Vec<String>,
}

/// A validated set of templates, looked up by id.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    map: BTreeMap<String, PromptTemplate>,
}

impl TemplateRegistry {
    /// Parse and validate a template file.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: TemplateFile = toml::from_str(text)
            .map_err(|e| Error::Config(format!("bad template file: {e}")))?;
        let mut map = BTreeMap::new();
        for (id, entry) in file.templates {
            let declared: BTreeSet<String> = entry.placeholders.iter().cloned().collect();
            if declared.len() != entry.placeholders.len() {
                return Err(Error::Config(format!(
                    "template `{id}` declares a placeholder twice"
                )));
            }
            let mut used = scan_placeholders(&entry.system);
            used.extend(scan_placeholders(&entry.user));
            if let Some(p) = used.difference(&declared).next() {
                return Err(Error::UndeclaredPlaceholder {
                    template_id: id,
                    placeholder: p.clone(),
                });
            }
            if let Some(p) = declared.difference(&used).next() {
                return Err(Error::UnusedPlaceholder {
                    template_id: id,
                    placeholder: p.clone(),
                });
            }
            map.insert(
                id.clone(),
                PromptTemplate {
                    id,
                    system: entry.system,
                    user: entry.user,
                    placeholders: declared,
                },
            );
        }
        Ok(TemplateRegistry { map })
    }

    /// Load and validate a template file from disk.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TemplateRegistry::from_toml_str(&text)
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate> {
        self.map
            .get(id)
            .ok_or_else(|| Error::UnknownTemplate(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// Ensure every id in `required` exists; names the first one missing.
    pub fn require(&self, required: &[&str]) -> Result<()> {
        for id in required {
            self.get(id)?;
        }
        Ok(())
    }

    /// Substitute bindings into the template's texts. Every declared
    /// placeholder must be bound. Substitution is a single pass over the
    /// original text, so placeholder-like tokens inside bound values are
    /// left untouched.
    pub fn render(&self, id: &str, context: &RenderContext) -> Result<RenderedPrompt> {
        let template = self.get(id)?;
        for name in &template.placeholders {
            if context.get(name).is_none() {
                return Err(Error::MissingBinding {
                    template_id: template.id.clone(),
                    placeholder: name.clone(),
                });
            }
        }
        let re = placeholder_regex();
        let substitute = |text: &str| -> String {
            re.replace_all(text, |caps: &regex::Captures<'_>| {
                context
                    .get(&caps[1])
                    .expect("all declared placeholders are bound")
                    .to_string()
            })
            .into_owned()
        };
        Ok(RenderedPrompt {
            system: substitute(&template.system),
            user: substitute(&template.user),
        })
    }
}

/// Serialize labeled examples as numbered blocks, one per example in input
/// order, fields in schema order:
///
/// ```text
/// Example 1:
/// review: <text>
/// Label: truthful
/// ```
pub fn format_examples(task: &TaskSpec, examples: &[Example]) -> String {
    let mut blocks = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let mut block = format!("Example {}:\n", i + 1);
        for field in &task.field_schema {
            let value = ex.fields.get(field).map(String::as_str).unwrap_or("");
            block.push_str(&format!("{field}: {value}\n"));
        }
        block.push_str(&format!("Label: {}\n", ex.label));
        blocks.push(block);
    }
    blocks.join("\n")
}

/// Serialize few-shot demonstrations. Same block format as
/// [`format_examples`]; an empty slice renders as an empty string so
/// zero-shot prompts carry no demonstration residue.
pub fn format_shots(task: &TaskSpec, shots: &[Example]) -> String {
    if shots.is_empty() {
        String::new()
    } else {
        format_examples(task, shots)
    }
}

/// Serialize hypothesis texts as a numbered list, one per line, 1-based,
/// in input order.
pub fn format_hypothesis_list<S: AsRef<str>>(texts: &[S]) -> String {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}
