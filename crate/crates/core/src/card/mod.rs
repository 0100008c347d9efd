//! Cards, narrative objects, highlights and the provenance graph.
//!
//! Everything here is plain data plus graph logic. Nothing in this module
//! performs I/O or talks to a provider.

mod anchor;
mod provenance;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::instruments::FilterKind;

pub use anchor::{char_len, char_slice, rebase_anchor, rebase_through, AnchorError, Rebase, TextAnchor, TextEdit};
pub use provenance::{GraphError, ProvenanceEdge, ProvenanceGraph};

/// Soft upper bound on story length, in whitespace-separated words.
pub const STORY_WORD_CAP: usize = 100;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Session-scoped card identifier.
    CardId
);
string_id!(
    /// Content address of a stored image (lowercase hex SHA-256 of the PNG bytes).
    AssetId
);
string_id!(HighlightId);

/// Narrative voice (focalization) of a story fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Voice {
    First,
    Second,
    Third,
}

impl Voice {
    pub const ALL: [Voice; 3] = [Voice::First, Voice::Second, Voice::Third];

    pub fn as_str(self) -> &'static str {
        match self {
            Voice::First => "first",
            Voice::Second => "second",
            Voice::Third => "third",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Character,
    Object,
    Scene,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 3] = [ObjectKind::Character, ObjectKind::Object, ObjectKind::Scene];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::Character => "character",
            ObjectKind::Object => "object",
            ObjectKind::Scene => "scene",
        }
    }
}

impl std::str::FromStr for ObjectKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "character" => Ok(ObjectKind::Character),
            "object" => Ok(ObjectKind::Object),
            "scene" => Ok(ObjectKind::Scene),
            other => Err(format!("unknown object kind `{other}`")),
        }
    }
}

/// A keyword naming a character, object or scene that a card is about.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NarrativeObject {
    pub name: String,
    pub kind: ObjectKind,
}

impl NarrativeObject {
    pub fn new(name: impl Into<String>, kind: ObjectKind) -> Self {
        Self { name: name.into(), kind }
    }

    pub fn character(name: impl Into<String>) -> Self {
        Self::new(name, ObjectKind::Character)
    }

    pub fn object(name: impl Into<String>) -> Self {
        Self::new(name, ObjectKind::Object)
    }

    pub fn scene(name: impl Into<String>) -> Self {
        Self::new(name, ObjectKind::Scene)
    }

    /// Identity key: trimmed, case-folded name plus kind.
    pub fn key(&self) -> ObjectKey {
        ObjectKey::new(&self.name, self.kind)
    }
}

/// Normalized `(name, kind)` identity used for deduplication and clustering.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectKey {
    pub name: String,
    pub kind: ObjectKind,
}

impl ObjectKey {
    pub fn new(name: &str, kind: ObjectKind) -> Self {
        Self { name: name.trim().to_lowercase(), kind }
    }
}

impl fmt::Display for ObjectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageAssetRef {
    pub asset_id: AssetId,
    pub format: ImageFormat,
    pub width: u32,
    pub height: u32,
}

/// Which generation mode or instrument produced a card (or a provenance edge).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentKind {
    ExactCraft,
    CreativeSpark,
    Lasso,
    Collage,
    Filter,
    PerspectiveShift,
}

impl InstrumentKind {
    pub const ALL: [InstrumentKind; 6] = [
        InstrumentKind::ExactCraft,
        InstrumentKind::CreativeSpark,
        InstrumentKind::Lasso,
        InstrumentKind::Collage,
        InstrumentKind::Filter,
        InstrumentKind::PerspectiveShift,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InstrumentKind::ExactCraft => "exact_craft",
            InstrumentKind::CreativeSpark => "creative_spark",
            InstrumentKind::Lasso => "lasso",
            InstrumentKind::Collage => "collage",
            InstrumentKind::Filter => "filter",
            InstrumentKind::PerspectiveShift => "perspective_shift",
        }
    }

    /// Only collage merges several source cards into one child.
    pub fn allows_multiple_parents(self) -> bool {
        self == InstrumentKind::Collage
    }
}

/// Axis a Creative Spark sibling varies along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariationAxis {
    Character,
    Setting,
    Object,
}

impl VariationAxis {
    /// Sibling order: card 1 varies character, card 2 setting, card 3 object.
    pub const ORDER: [VariationAxis; 3] = [VariationAxis::Character, VariationAxis::Setting, VariationAxis::Object];

    pub fn as_str(self) -> &'static str {
        match self {
            VariationAxis::Character => "character",
            VariationAxis::Setting => "setting",
            VariationAxis::Object => "object",
        }
    }
}

/// The atomic narrative unit: an image, a story fragment and the objects it is about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Card {
    pub id: CardId,
    pub story: String,
    pub image: ImageAssetRef,
    pub objects: Vec<NarrativeObject>,
    pub voice: Voice,
    #[serde(default)]
    pub filter: Option<FilterKind>,
    /// Milliseconds since the Unix epoch; non-decreasing within a session.
    pub created_at: u64,
    pub origin: InstrumentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variation: Option<VariationAxis>,
    /// Hash of the intent a generation-mode card came from. Creative Spark
    /// siblings share it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_hash: Option<String>,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    EmptyStory,
    EmptyImage,
    ZeroDimension,
    EmptyObjectName,
    DuplicateObject,
    StoryTooLong,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub message: String,
}

impl Issue {
    fn new(code: IssueCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStatus {
    Ok,
    Warnings,
    Errors,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn status(&self) -> ReportStatus {
        if !self.errors.is_empty() {
            ReportStatus::Errors
        } else if !self.warnings.is_empty() {
            ReportStatus::Warnings
        } else {
            ReportStatus::Ok
        }
    }

    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks card invariants. Over-long stories are a warning, not an error:
/// the word cap constrains generation, not the writer's own edits.
pub fn validate_card(card: &Card) -> ValidationReport {
    let mut report = ValidationReport::default();

    if card.story.trim().is_empty() {
        report.errors.push(Issue::new(IssueCode::EmptyStory, "empty story"));
    }
    if card.image.asset_id.as_str().is_empty() {
        report.errors.push(Issue::new(IssueCode::EmptyImage, "empty image reference"));
    }
    if card.image.width == 0 || card.image.height == 0 {
        report.errors.push(Issue::new(
            IssueCode::ZeroDimension,
            format!("image dimensions must be positive, got {}x{}", card.image.width, card.image.height),
        ));
    }

    let mut seen = BTreeSet::new();
    for object in &card.objects {
        if object.name.trim().is_empty() {
            report.errors.push(Issue::new(IssueCode::EmptyObjectName, "empty object name"));
            continue;
        }
        if !seen.insert(object.key()) {
            report.errors.push(Issue::new(
                IssueCode::DuplicateObject,
                format!("duplicate object `{}` ({})", object.name.trim(), object.kind.as_str()),
            ));
        }
    }

    let words = word_count(&card.story);
    if words > STORY_WORD_CAP {
        report.warnings.push(Issue::new(
            IssueCode::StoryTooLong,
            format!("exceeds {STORY_WORD_CAP}-word story cap ({words} words)"),
        ));
    }

    report
}

/// Removes blank and duplicate objects, keeping first occurrences in order.
pub fn dedup_objects<'a>(objects: impl IntoIterator<Item = &'a NarrativeObject>) -> Vec<NarrativeObject> {
    let mut seen = BTreeSet::new();
    objects
        .into_iter()
        .filter(|o| !o.name.trim().is_empty())
        .filter(|o| seen.insert(o.key()))
        .map(|o| NarrativeObject::new(o.name.trim(), o.kind))
        .collect()
}

/// A writer highlight on a card's story: an object binding, a comment, or both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Highlight {
    pub id: HighlightId,
    pub anchor: TextAnchor,
    #[serde(default)]
    pub object: Option<NarrativeObject>,
    #[serde(default)]
    pub comment: Option<String>,
}

impl Highlight {
    pub fn card_id(&self) -> &CardId {
        &self.anchor.card_id
    }

    pub fn is_valid(&self) -> bool {
        let has_object = self.object.as_ref().is_some_and(|o| !o.name.trim().is_empty());
        let has_comment = self.comment.as_ref().is_some_and(|c| !c.trim().is_empty());
        has_object || has_comment
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sample_card(id: &str, story: &str) -> Card {
        Card {
            id: CardId::new(id),
            story: story.to_owned(),
            image: ImageAssetRef {
                asset_id: AssetId::new("ab".repeat(32)),
                format: ImageFormat::Png,
                width: 64,
                height: 64,
            },
            objects: vec![NarrativeObject::character("Claire"), NarrativeObject::object("brass clasp")],
            voice: Voice::Third,
            filter: None,
            created_at: 0,
            origin: InstrumentKind::ExactCraft,
            variation: None,
            intent_hash: None,
        }
    }

    fn words(n: usize) -> String {
        vec!["word"; n].join(" ")
    }

    #[test]
    fn well_formed_card_is_ok() {
        let card = sample_card("c1", &words(80));
        assert_eq!(validate_card(&card).status(), ReportStatus::Ok);
    }

    #[test]
    fn empty_story_is_an_error() {
        let card = sample_card("c1", "   ");
        let report = validate_card(&card);
        assert_eq!(report.status(), ReportStatus::Errors);
        assert_eq!(report.errors[0].message, "empty story");
    }

    #[test]
    fn long_story_only_warns() {
        let card = sample_card("c1", &words(120));
        let report = validate_card(&card);
        assert_eq!(report.status(), ReportStatus::Warnings);
        assert!(report.warnings[0].message.starts_with("exceeds 100-word story cap"));
    }

    #[test]
    fn exactly_one_hundred_words_is_fine() {
        let card = sample_card("c1", &words(100));
        assert_eq!(validate_card(&card).status(), ReportStatus::Ok);
    }

    #[test]
    fn duplicate_objects_compare_case_insensitively() {
        let mut card = sample_card("c1", "Claire opens the box.");
        card.objects.push(NarrativeObject::character("  claire "));
        let report = validate_card(&card);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, IssueCode::DuplicateObject);

        // same name, different kind is a different object
        card.objects.pop();
        card.objects.push(NarrativeObject::scene("Claire"));
        assert!(validate_card(&card).is_valid());
    }

    #[test]
    fn empty_image_and_zero_dimensions() {
        let mut card = sample_card("c1", "story");
        card.image.asset_id = AssetId::new("");
        card.image.width = 0;
        let codes: Vec<_> = validate_card(&card).errors.iter().map(|i| i.code).collect();
        assert_eq!(codes, vec![IssueCode::EmptyImage, IssueCode::ZeroDimension]);
    }

    #[test]
    fn validation_is_pure() {
        let card = sample_card("c1", &words(130));
        assert_eq!(validate_card(&card), validate_card(&card));
    }

    #[test]
    fn card_json_uses_lowercase_enums() {
        let mut card = sample_card("c1", "story");
        card.filter = Some(FilterKind::Warm);
        card.origin = InstrumentKind::PerspectiveShift;
        let json = serde_json::to_value(&card).unwrap();
        assert_eq!(json["voice"], "third");
        assert_eq!(json["filter"], "warm");
        assert_eq!(json["origin"], "perspective_shift");
        assert_eq!(json["image"]["format"], "png");
        assert_eq!(json["objects"][0]["kind"], "character");
        let back: Card = serde_json::from_value(json).unwrap();
        assert_eq!(back, card);
    }

    #[test]
    fn dedup_objects_keeps_first_spelling() {
        let objs = [
            NarrativeObject::character("Maya"),
            NarrativeObject::character("maya"),
            NarrativeObject::scene(" "),
            NarrativeObject::scene("park"),
        ];
        assert_eq!(dedup_objects(&objs), vec![NarrativeObject::character("Maya"), NarrativeObject::scene("park")]);
    }
}
