//! Object-centered index over writer highlights.
//!
//! Each highlight bound to a narrative object contributes its anchored
//! snapshot (and comment, if any) to that object's entry. Entries are keyed
//! by the trimmed, case-folded `(name, kind)` pair. The index stores
//! contributions per highlight id, so the resulting view does not depend on
//! registration order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::card::{CardId, Highlight, HighlightId, NarrativeObject, ObjectKey, ObjectKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("unknown card `{0}`")]
    UnknownCard(CardId),
    #[error("highlight `{0}` needs an object or a comment")]
    InvalidHighlight(HighlightId),
    #[error("no cluster for {0}")]
    UnknownObject(ObjectKey),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub highlight_id: HighlightId,
    pub card_id: CardId,
    pub snapshot: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterComment {
    pub highlight_id: HighlightId,
    pub card_id: CardId,
    pub text: String,
}

/// Materialized view of one object's cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub object: NarrativeObject,
    pub card_refs: BTreeSet<CardId>,
    pub segments: Vec<Segment>,
    pub comments: Vec<ClusterComment>,
}

impl ClusterEntry {
    pub fn highlight_ids(&self) -> Vec<HighlightId> {
        self.segments.iter().map(|s| s.highlight_id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Contribution {
    card_id: CardId,
    /// Name as the writer typed it (trimmed).
    name: String,
    snapshot: String,
    comment: Option<String>,
}

/// What `register_highlight` did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Registration {
    Added(ObjectKey),
    /// The id was already registered; nothing changed.
    Duplicate,
    /// Comment-only highlight: it stays with its card and does not enter the index.
    CardLocal,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterIndex {
    entries: BTreeMap<ObjectKey, BTreeMap<HighlightId, Contribution>>,
    owners: BTreeMap<HighlightId, ObjectKey>,
}

impl ClusterIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds `highlights` into a fresh index. Highlights whose card fails
    /// `card_exists` are skipped.
    pub fn rebuild<'a>(
        highlights: impl IntoIterator<Item = &'a Highlight>,
        card_exists: impl Fn(&CardId) -> bool,
    ) -> Self {
        let mut index = Self::new();
        for h in highlights {
            let _ = index.register_highlight(h, &card_exists);
        }
        index
    }

    pub fn register_highlight(
        &mut self,
        highlight: &Highlight,
        card_exists: impl Fn(&CardId) -> bool,
    ) -> Result<Registration, ClusterError> {
        if !highlight.is_valid() {
            return Err(ClusterError::InvalidHighlight(highlight.id.clone()));
        }
        if !card_exists(highlight.card_id()) {
            return Err(ClusterError::UnknownCard(highlight.card_id().clone()));
        }
        if self.owners.contains_key(&highlight.id) {
            return Ok(Registration::Duplicate);
        }
        let Some(object) = highlight.object.as_ref().filter(|o| !o.name.trim().is_empty()) else {
            return Ok(Registration::CardLocal);
        };
        let key = object.key();
        let contribution = Contribution {
            card_id: highlight.card_id().clone(),
            name: object.name.trim().to_owned(),
            snapshot: highlight.anchor.snapshot.clone(),
            comment: highlight.comment.clone().filter(|c| !c.trim().is_empty()),
        };
        self.entries.entry(key.clone()).or_default().insert(highlight.id.clone(), contribution);
        self.owners.insert(highlight.id.clone(), key.clone());
        Ok(Registration::Added(key))
    }

    /// Returns whether the highlight was indexed.
    pub fn remove_highlight(&mut self, id: &HighlightId) -> bool {
        let Some(key) = self.owners.remove(id) else { return false };
        if let Some(entry) = self.entries.get_mut(&key) {
            entry.remove(id);
            if entry.is_empty() {
                self.entries.remove(&key);
            }
        }
        true
    }

    /// Prunes every contribution from `card`; entries left empty disappear.
    pub fn remove_card(&mut self, card: &CardId) -> Vec<HighlightId> {
        let doomed: Vec<HighlightId> = self
            .entries
            .values()
            .flat_map(|e| e.iter().filter(|(_, c)| &c.card_id == card).map(|(id, _)| id.clone()))
            .collect();
        for id in &doomed {
            self.remove_highlight(id);
        }
        doomed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_highlight(&self, id: &HighlightId) -> bool {
        self.owners.contains_key(id)
    }

    pub fn keys(&self) -> impl Iterator<Item = &ObjectKey> {
        self.entries.keys()
    }

    pub fn materials(&self, name: &str, kind: ObjectKind) -> Result<ClusterEntry, ClusterError> {
        let key = ObjectKey::new(name, kind);
        self.entries.get(&key).map(|e| view(&key, e)).ok_or(ClusterError::UnknownObject(key))
    }

    pub fn entries(&self) -> impl Iterator<Item = ClusterEntry> + '_ {
        self.entries.iter().map(|(k, e)| view(k, e))
    }

    /// `{kind: {name: entry}}`, names in their normalized form.
    pub fn export(&self) -> BTreeMap<String, BTreeMap<String, ClusterEntry>> {
        let mut out: BTreeMap<String, BTreeMap<String, ClusterEntry>> = BTreeMap::new();
        for (key, e) in &self.entries {
            out.entry(key.kind.as_str().to_owned()).or_default().insert(key.name.clone(), view(key, e));
        }
        out
    }

    pub fn summary_request(
        &self,
        name: &str,
        kind: ObjectKind,
        global_theme: &str,
    ) -> Result<SummaryRequest, ClusterError> {
        let entry = self.materials(name, kind)?;
        Ok(SummaryRequest {
            object: entry.object,
            segments: entry.segments,
            comments: entry.comments,
            global_theme: global_theme.to_owned(),
        })
    }
}

fn view(key: &ObjectKey, contributions: &BTreeMap<HighlightId, Contribution>) -> ClusterEntry {
    // display name from the lowest highlight id keeps the view order-independent
    let name = contributions.values().next().map_or_else(|| key.name.clone(), |c| c.name.clone());
    let mut entry = ClusterEntry {
        object: NarrativeObject::new(name, key.kind),
        card_refs: BTreeSet::new(),
        segments: Vec::with_capacity(contributions.len()),
        comments: Vec::new(),
    };
    for (id, c) in contributions {
        entry.card_refs.insert(c.card_id.clone());
        entry.segments.push(Segment {
            highlight_id: id.clone(),
            card_id: c.card_id.clone(),
            snapshot: c.snapshot.clone(),
        });
        if let Some(text) = &c.comment {
            entry.comments.push(ClusterComment {
                highlight_id: id.clone(),
                card_id: c.card_id.clone(),
                text: text.clone(),
            });
        }
    }
    entry
}

/// Material handed to the text agent for a structured summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRequest {
    pub object: NarrativeObject,
    pub segments: Vec<Segment>,
    pub comments: Vec<ClusterComment>,
    #[serde(default)]
    pub global_theme: String,
}

impl SummaryRequest {
    pub fn source_highlight_ids(&self) -> Vec<HighlightId> {
        let ids: BTreeSet<HighlightId> = self
            .segments
            .iter()
            .map(|s| s.highlight_id.clone())
            .chain(self.comments.iter().map(|c| c.highlight_id.clone()))
            .collect();
        ids.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredSummary {
    pub object: NarrativeObject,
    pub settings: String,
    pub description: String,
    pub plot: String,
    pub source_highlight_ids: Vec<HighlightId>,
}
