//! Prompt templates with `{slot}` markers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

/// Slot names a template may use.
pub const KNOWN_SLOTS: [&str; 5] = ["text", "previous_text", "full_text", "global_theme", "instruction"];

static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").expect("valid marker regex"));

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("missing slot `{0}`")]
    MissingSlot(String),
    #[error("template `{template}` uses unknown slot `{slot}`")]
    UnknownSlot { template: String, slot: String },
    #[error("reading templates from {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub body: String,
    pub required_slots: BTreeSet<String>,
}

impl PromptTemplate {
    /// Parses `body`; every marker it contains becomes a required slot.
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Result<Self, TemplateError> {
        let id = id.into();
        let body = body.into();
        let mut required_slots = BTreeSet::new();
        for cap in MARKER.captures_iter(&body) {
            let slot = &cap[1];
            if !KNOWN_SLOTS.contains(&slot) {
                return Err(TemplateError::UnknownSlot { template: id, slot: slot.to_owned() });
            }
            required_slots.insert(slot.to_owned());
        }
        Ok(Self { id, body, required_slots })
    }

    /// Single-pass substitution: values are inserted verbatim and never
    /// re-expanded, even if they contain marker-like text.
    pub fn render(&self, slots: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        if let Some(missing) = self.required_slots.iter().find(|s| !slots.contains_key(*s)) {
            return Err(TemplateError::MissingSlot(missing.clone()));
        }
        Ok(MARKER.replace_all(&self.body, |cap: &regex::Captures<'_>| slots[&cap[1]].clone()).into_owned())
    }
}

const BUILTIN: [(&str, &str); 7] = [
    ("exact_craft", include_str!("../../templates/exact_craft.txt")),
    ("creative_spark", include_str!("../../templates/creative_spark.txt")),
    ("lasso", include_str!("../../templates/lasso.txt")),
    ("collage", include_str!("../../templates/collage.txt")),
    ("filter", include_str!("../../templates/filter.txt")),
    ("perspective_shift", include_str!("../../templates/perspective_shift.txt")),
    ("summarize", include_str!("../../templates/summarize.txt")),
];

/// Versioned set of templates keyed by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateLibrary {
    pub version: String,
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for TemplateLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateLibrary {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(id, body)| {
                let t = PromptTemplate::new(*id, *body).expect("built-in templates are valid");
                (t.id.clone(), t)
            })
            .collect();
        Self { version: include_str!("../../templates/VERSION").trim().to_owned(), templates }
    }

    /// Loads `*.txt` files from `dir` (id = file stem) over the built-ins.
    /// An optional `VERSION` file names the set.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let io = |e: std::io::Error| TemplateError::Io { path: dir.display().to_string(), message: e.to_string() };
        let mut lib = Self::builtin();
        let mut entries: Vec<_> = std::fs::read_dir(dir).map_err(io)?.collect::<Result<_, _>>().map_err(io)?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            if path.file_name().and_then(|n| n.to_str()) == Some("VERSION") {
                lib.version = std::fs::read_to_string(&path).map_err(io)?.trim().to_owned();
                continue;
            }
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            let body = std::fs::read_to_string(&path).map_err(io)?;
            lib.insert(PromptTemplate::new(id, body)?);
        }
        Ok(lib)
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.id.clone(), template);
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn assemble_prompt(
        &self,
        template_id: &str,
        slots: &BTreeMap<String, String>,
    ) -> Result<String, TemplateError> {
        self.get(template_id).ok_or_else(|| TemplateError::UnknownTemplate(template_id.to_owned()))?.render(slots)
    }
}

/// True if `text` still contains a `{slot}` marker for a known slot.
pub fn has_marker(text: &str) -> bool {
    MARKER.captures_iter(text).any(|c| KNOWN_SLOTS.contains(&&c[1]))
}
