//! Event-sourced session state.
//!
//! Every mutation is a [`Command`]. Applying one runs in three steps:
//! [`Session::prepare`] builds generation plans from the current state
//! without touching it, the orchestrator produces replies for those plans
//! (possibly slowly, with no lock held by the caller), and
//! [`Session::commit`] applies the results and appends exactly one
//! [`Event`]. A commit against a session that changed since `prepare`
//! returns [`SessionError::Stale`]; the caller prepares again.
//!
//! Because each event records its command and wall-clock time, replaying the
//! log against deterministic providers rebuilds the same state.

mod export;
mod metrics;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::card::{
    char_len, rebase_anchor, validate_card, AnchorError, AssetId, Card, CardId, GraphError, Highlight, HighlightId,
    Issue, NarrativeObject, ObjectKind, ProvenanceGraph, Rebase, TextAnchor, TextEdit, Voice,
};
use crate::cluster::{ClusterEntry, ClusterError, ClusterIndex, StructuredSummary};
use crate::instruments::{
    self, imaging, CollageFrame, EncodedImage, FilterKind, GenerationContext, GenerationPlan, InstrumentError,
    MultimodalIntent, Point, Workspace,
};
use crate::orchestrator::{Generated, Orchestrator, OrchestratorError};

pub use export::{export_session, import_session, ExportDocument, ExportError, EXPORT_VERSION};
pub use metrics::{compute_metrics, ExplorationMetrics, MetricsError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Anchor(#[from] AnchorError),
    #[error("unknown card `{0}`")]
    UnknownCard(CardId),
    #[error("unknown highlight `{0}`")]
    UnknownHighlight(HighlightId),
    #[error("story must not be empty")]
    EmptyStory,
    #[error("generated card `{card_id}` is invalid")]
    InvalidCard { card_id: CardId, issues: Vec<Issue> },
    #[error("invalid object keyword: {0}")]
    InvalidObject(String),
    #[error("session changed while the request was in flight")]
    Stale,
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Instrument(e) => match e {
                InstrumentError::EmptyIntent => "EmptyIntent",
                InstrumentError::MultipleReferences(_) => "MultipleReferences",
                InstrumentError::UnknownCard(_) => "UnknownCard",
                InstrumentError::MissingAsset(_) => "MissingAsset",
                InstrumentError::EmptyRange { .. } => "EmptyRange",
                InstrumentError::OutOfBounds { .. } => "OutOfBounds",
                InstrumentError::DegeneratePolygon => "DegeneratePolygon",
                InstrumentError::PolygonOutOfBounds { .. } => "OutOfBounds",
                InstrumentError::EmptyFrame => "EmptyFrame",
                InstrumentError::BadCropRect { .. } => "BadCropRect",
                InstrumentError::BadPlacement { .. } => "BadPlacement",
                InstrumentError::SameVoice(_) => "SameVoice",
                InstrumentError::Imaging(_) => "ImagingError",
            },
            SessionError::Graph(e) => match e {
                GraphError::UnknownCard(_) => "UnknownCard",
                GraphError::DuplicateCard(_) => "DuplicateCard",
                GraphError::Cycle { .. } => "CycleError",
                GraphError::MultiParent { .. } => "MultiParentError",
                GraphError::DuplicateEdge { .. } => "DuplicateEdge",
            },
            SessionError::Orchestrator(e) => e.code(),
            SessionError::Cluster(e) => match e {
                ClusterError::UnknownCard(_) => "UnknownCard",
                ClusterError::InvalidHighlight(_) => "InvalidHighlight",
                ClusterError::UnknownObject(_) => "UnknownObject",
            },
            SessionError::Anchor(e) => match e {
                AnchorError::EmptyRange { .. } => "EmptyRange",
                AnchorError::OutOfBounds { .. } => "OutOfBounds",
            },
            SessionError::UnknownCard(_) => "UnknownCard",
            SessionError::UnknownHighlight(_) => "UnknownHighlight",
            SessionError::EmptyStory => "EmptyStory",
            SessionError::InvalidCard { .. } => "InvalidCard",
            SessionError::InvalidObject(_) => "InvalidObject",
            SessionError::Stale => "Stale",
        }
    }
}

/// Writer-maintained context shared by every generation in the session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalContext {
    #[serde(default)]
    pub theme: String,
    #[serde(default)]
    pub outline: String,
    #[serde(default)]
    pub draft_text: String,
}

impl GlobalContext {
    pub fn generation_context(&self) -> GenerationContext {
        let prior = [self.outline.trim(), self.draft_text.trim()]
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n");
        GenerationContext { global_theme: self.theme.clone(), prior_text: prior }
    }
}

/// Card placement on the canvas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanvasNode {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

const NODE_W: f64 = 240.0;
const NODE_H: f64 = 300.0;
const GAP: f64 = 40.0;
const GRID_COLUMNS: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    ExactCraft,
    CreativeSpark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum LassoSelection {
    /// Character range `[start, end)` of the story.
    Text { start: usize, end: usize },
    /// Polygon in image pixel coordinates.
    Image { polygon: Vec<Point> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StoryEdit {
    /// Replace the whole story; the edit is recovered by prefix/suffix diff.
    Replace { story: String },
    /// Replace `deleted_len` characters at `position` with `text`.
    Splice { position: usize, deleted_len: usize, text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    Open {
        #[serde(default)]
        context: GlobalContext,
    },
    Generate {
        mode: GenerationMode,
        intent: MultimodalIntent,
    },
    Lasso {
        card_id: CardId,
        selection: LassoSelection,
    },
    Collage {
        frame: CollageFrame,
        #[serde(default)]
        intent_text: Option<String>,
    },
    Filter {
        card_id: CardId,
        kind: FilterKind,
    },
    Perspective {
        card_id: CardId,
        voice: Voice,
    },
    EditStory {
        card_id: CardId,
        edit: StoryEdit,
    },
    SetObjects {
        card_id: CardId,
        objects: Vec<NarrativeObject>,
    },
    AddHighlight {
        card_id: CardId,
        start: usize,
        end: usize,
        #[serde(default)]
        object: Option<NarrativeObject>,
        #[serde(default)]
        comment: Option<String>,
    },
    RemoveHighlight {
        highlight_id: HighlightId,
    },
    DeleteCard {
        card_id: CardId,
    },
    MoveCard {
        card_id: CardId,
        node: CanvasNode,
    },
    SetContext {
        context: GlobalContext,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Open { .. } => "open",
            Command::Generate { .. } => "generate",
            Command::Lasso { .. } => "lasso",
            Command::Collage { .. } => "collage",
            Command::Filter { .. } => "filter",
            Command::Perspective { .. } => "perspective",
            Command::EditStory { .. } => "edit_story",
            Command::SetObjects { .. } => "set_objects",
            Command::AddHighlight { .. } => "add_highlight",
            Command::RemoveHighlight { .. } => "remove_highlight",
            Command::DeleteCard { .. } => "delete_card",
            Command::MoveCard { .. } => "move_card",
            Command::SetContext { .. } => "set_context",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Milliseconds since the Unix epoch; never decreases along the log.
    pub at: u64,
    pub command: Command,
}

/// Content-addressed PNG storage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssetStore {
    blobs: BTreeMap<AssetId, Vec<u8>>,
}

impl AssetStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image: EncodedImage) -> AssetId {
        let id = image.asset.asset_id.clone();
        self.blobs.entry(id.clone()).or_insert(image.bytes);
        id
    }

    /// Stores raw PNG bytes, checking that they decode.
    pub fn insert_png(&mut self, bytes: Vec<u8>) -> Result<crate::card::ImageAssetRef, imaging::ImagingError> {
        let asset = imaging::describe_png(&bytes)?;
        self.insert(EncodedImage { asset: asset.clone(), bytes });
        Ok(asset)
    }

    pub fn get(&self, id: &AssetId) -> Option<&[u8]> {
        self.blobs.get(id).map(Vec::as_slice)
    }

    pub fn contains(&self, id: &AssetId) -> bool {
        self.blobs.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AssetId, &[u8])> {
        self.blobs.iter().map(|(k, v)| (k, v.as_slice()))
    }
}

/// Output of [`Session::prepare`]: the plans to send to the orchestrator and
/// the revision they were computed against.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub revision: u64,
    pub plans: Vec<GenerationPlan>,
}

/// What a committed command changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Applied {
    pub seq: u64,
    pub created: Vec<CardId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub highlight: Option<HighlightId>,
    /// Highlights dropped because an edit overlapped them or their card was deleted.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub removed_highlights: Vec<HighlightId>,
    /// Children of a deleted card that became roots.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub orphaned: Vec<CardId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub cards: BTreeMap<CardId, Card>,
    pub graph: ProvenanceGraph,
    pub canvas: BTreeMap<CardId, CanvasNode>,
    pub highlights: BTreeMap<HighlightId, Highlight>,
    pub context: GlobalContext,
    pub event_log: Vec<Event>,
    next_card: u64,
    next_highlight: u64,
    #[serde(skip)]
    pub clusters: ClusterIndex,
    #[serde(skip)]
    pub assets: AssetStore,
}

impl Workspace for Session {
    fn card(&self, id: &CardId) -> Option<&Card> {
        self.cards.get(id)
    }

    fn asset(&self, id: &AssetId) -> Option<&[u8]> {
        self.assets.get(id)
    }
}

/// The session's workspace plus images uploaded with the current request.
struct Overlay<'a> {
    session: &'a Session,
    uploads: &'a [EncodedImage],
}

impl Workspace for Overlay<'_> {
    fn card(&self, id: &CardId) -> Option<&Card> {
        self.session.cards.get(id)
    }

    fn asset(&self, id: &AssetId) -> Option<&[u8]> {
        self.session
            .assets
            .get(id)
            .or_else(|| self.uploads.iter().find(|u| &u.asset.asset_id == id).map(|u| u.bytes.as_slice()))
    }
}

impl Session {
    /// An empty session with no events. Use [`Command::Open`] as the first
    /// event to record the initial context.
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            cards: BTreeMap::new(),
            graph: ProvenanceGraph::new(),
            canvas: BTreeMap::new(),
            highlights: BTreeMap::new(),
            context: GlobalContext::default(),
            event_log: Vec::new(),
            next_card: 1,
            next_highlight: 1,
            clusters: ClusterIndex::new(),
            assets: AssetStore::new(),
        }
    }

    /// Number of committed events.
    pub fn revision(&self) -> u64 {
        self.event_log.len() as u64
    }

    /// Clamps a wall-clock reading so the log stays non-decreasing.
    pub fn timestamp(&self, now_ms: u64) -> u64 {
        self.event_log.last().map_or(now_ms, |e| e.at.max(now_ms))
    }

    fn card_ref(&self, id: &CardId) -> Result<&Card, SessionError> {
        self.cards.get(id).ok_or_else(|| SessionError::UnknownCard(id.clone()))
    }

    fn generation_context(&self) -> GenerationContext {
        self.context.generation_context()
    }

    /// Builds generation plans for `command` without changing the session.
    /// Also runs every validation a commit would, so a command that will
    /// fail is rejected before any provider call.
    pub fn prepare(&self, command: &Command, uploads: &[EncodedImage]) -> Result<Prepared, SessionError> {
        let ws = Overlay { session: self, uploads };
        let ctx = self.generation_context();
        let plans = match command {
            Command::Generate { mode, intent } => {
                let mut intent = intent.clone();
                if intent.global_theme.trim().is_empty() {
                    intent.global_theme = ctx.global_theme.clone();
                }
                if intent.prior_text.trim().is_empty() {
                    intent.prior_text = ctx.prior_text.clone();
                }
                match mode {
                    GenerationMode::ExactCraft => vec![instruments::exact_craft(&ws, &intent)?],
                    GenerationMode::CreativeSpark => instruments::creative_spark(&ws, &intent)?.into(),
                }
            }
            Command::Lasso { card_id, selection } => {
                let source = self.card_ref(card_id)?;
                vec![match selection {
                    LassoSelection::Text { start, end } => instruments::lasso_text(&ws, source, *start, *end, &ctx)?,
                    LassoSelection::Image { polygon } => instruments::lasso_image(&ws, source, polygon, &ctx)?,
                }]
            }
            Command::Collage { frame, intent_text } => {
                vec![instruments::collage(&ws, frame, intent_text.as_deref(), &ctx)?]
            }
            Command::Filter { card_id, kind } => {
                vec![instruments::apply_filter(&ws, self.card_ref(card_id)?, *kind, &ctx)?]
            }
            Command::Perspective { card_id, voice } => {
                vec![instruments::shift_perspective(&ws, self.card_ref(card_id)?, *voice, &ctx)?]
            }
            other => {
                self.check_direct(other)?;
                Vec::new()
            }
        };
        Ok(Prepared { revision: self.revision(), plans })
    }

    /// Validation for commands that need no generation.
    fn check_direct(&self, command: &Command) -> Result<(), SessionError> {
        match command {
            Command::EditStory { card_id, edit } => {
                let card = self.card_ref(card_id)?;
                resolve_edit(&card.story, edit)?;
            }
            Command::SetObjects { card_id, objects } => {
                self.card_ref(card_id)?;
                check_objects(objects)?;
            }
            Command::AddHighlight { card_id, start, end, object, comment } => {
                let card = self.card_ref(card_id)?;
                let highlight = Highlight {
                    id: HighlightId::new("pending"),
                    anchor: TextAnchor::new(card_id.clone(), &card.story, *start, *end)?,
                    object: object.clone(),
                    comment: comment.clone(),
                };
                if !highlight.is_valid() {
                    return Err(ClusterError::InvalidHighlight(highlight.id).into());
                }
            }
            Command::RemoveHighlight { highlight_id } => {
                if !self.highlights.contains_key(highlight_id) {
                    return Err(SessionError::UnknownHighlight(highlight_id.clone()));
                }
            }
            Command::DeleteCard { card_id } | Command::MoveCard { card_id, .. } => {
                self.card_ref(card_id)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Applies a prepared command and appends its event. Fails with
    /// [`SessionError::Stale`] if any event was committed after `prepare`.
    pub fn commit(
        &mut self,
        command: Command,
        prepared: Prepared,
        generated: Vec<Generated>,
        uploads: Vec<EncodedImage>,
        at: u64,
    ) -> Result<Applied, SessionError> {
        if prepared.revision != self.revision() {
            return Err(SessionError::Stale);
        }
        let at = self.timestamp(at);
        let mut applied = Applied { seq: self.revision() + 1, ..Applied::default() };

        if !prepared.plans.is_empty() {
            assert_eq!(prepared.plans.len(), generated.len(), "one generation result per plan");
            self.commit_generated(&prepared.plans, generated, at, &mut applied)?;
            for upload in uploads {
                self.assets.insert(upload);
            }
        } else {
            self.apply_direct(&command, &mut applied)?;
        }
        self.event_log.push(Event { seq: applied.seq, at, command });
        Ok(applied)
    }

    fn commit_generated(
        &mut self,
        plans: &[GenerationPlan],
        generated: Vec<Generated>,
        at: u64,
        applied: &mut Applied,
    ) -> Result<(), SessionError> {
        // Build everything fallible first so a failure leaves the session untouched.
        let mut graph = self.graph.clone();
        let mut derived = Vec::with_capacity(plans.len());
        for (offset, (plan, gen)) in plans.iter().zip(&generated).enumerate() {
            let id = card_id(self.next_card + offset as u64);
            let d = plan.complete(&gen.reply, gen.image.asset.clone(), id.clone(), at);
            let report = validate_card(&d.card);
            if !report.is_valid() {
                return Err(SessionError::InvalidCard { card_id: id, issues: report.errors });
            }
            graph.add_node(id)?;
            for edge in &d.edges {
                graph.add_edge(edge.clone())?;
            }
            derived.push(d);
        }

        self.graph = graph;
        self.next_card += plans.len() as u64;
        for (batch_index, ((plan, gen), d)) in plans.iter().zip(generated).zip(derived).enumerate() {
            for asset in &plan.new_assets {
                self.assets.insert(asset.clone());
            }
            self.assets.insert(gen.image);
            let node = self.place(&plan.parents, batch_index);
            self.canvas.insert(d.card.id.clone(), node);
            applied.created.push(d.card.id.clone());
            self.cards.insert(d.card.id.clone(), d.card);
        }
        Ok(())
    }

    /// Default layout: children to the right of their first parent, stacked
    /// per batch; roots on a grid.
    fn place(&self, parents: &[CardId], batch_index: usize) -> CanvasNode {
        let stacked = batch_index as f64 * (NODE_H + GAP);
        if let Some(parent) = parents.first().and_then(|p| self.canvas.get(p)) {
            return CanvasNode { x: parent.x + parent.w + GAP, y: parent.y + stacked, w: NODE_W, h: NODE_H };
        }
        let n = self.cards.len() as u64;
        CanvasNode {
            x: GAP + (n % GRID_COLUMNS) as f64 * (NODE_W + GAP),
            y: GAP + (n / GRID_COLUMNS) as f64 * (NODE_H + GAP) + stacked,
            w: NODE_W,
            h: NODE_H,
        }
    }

    fn apply_direct(&mut self, command: &Command, applied: &mut Applied) -> Result<(), SessionError> {
        self.check_direct(command)?;
        match command {
            Command::Open { context } | Command::SetContext { context } => {
                self.context = context.clone();
            }
            Command::EditStory { card_id, edit } => {
                let old = self.cards[card_id].story.clone();
                let (new_story, text_edit) = resolve_edit(&old, edit)?;
                applied.removed_highlights = self.rebase_highlights(card_id, text_edit, char_len(&old))?;
                self.cards.get_mut(card_id).expect("checked").story = new_story;
            }
            Command::SetObjects { card_id, objects } => {
                self.cards.get_mut(card_id).expect("checked").objects = crate::card::dedup_objects(objects);
            }
            Command::AddHighlight { card_id, start, end, object, comment } => {
                let story = &self.cards[card_id].story;
                let id = HighlightId::new(format!("hl-{:04}", self.next_highlight));
                let highlight = Highlight {
                    id: id.clone(),
                    anchor: TextAnchor::new(card_id.clone(), story, *start, *end)?,
                    object: object.clone().map(|o| NarrativeObject::new(o.name.trim(), o.kind)),
                    comment: comment.clone().filter(|c| !c.trim().is_empty()),
                };
                let cards = &self.cards;
                self.clusters.register_highlight(&highlight, |c| cards.contains_key(c))?;
                self.next_highlight += 1;
                self.highlights.insert(id.clone(), highlight);
                applied.highlight = Some(id);
            }
            Command::RemoveHighlight { highlight_id } => {
                self.highlights.remove(highlight_id);
                self.clusters.remove_highlight(highlight_id);
            }
            Command::DeleteCard { card_id } => {
                let removed = self.graph.remove_node(card_id)?;
                applied.orphaned = removed
                    .iter()
                    .filter(|e| &e.parent == card_id)
                    .map(|e| e.child.clone())
                    .filter(|c| self.graph.parents(c).next().is_none())
                    .collect();
                self.cards.remove(card_id);
                self.canvas.remove(card_id);
                self.clusters.remove_card(card_id);
                let doomed: Vec<HighlightId> =
                    self.highlights.values().filter(|h| h.card_id() == card_id).map(|h| h.id.clone()).collect();
                for id in &doomed {
                    self.highlights.remove(id);
                }
                applied.removed_highlights = doomed;
            }
            Command::MoveCard { card_id, node } => {
                self.canvas.insert(card_id.clone(), *node);
            }
            Command::Generate { .. }
            | Command::Lasso { .. }
            | Command::Collage { .. }
            | Command::Filter { .. }
            | Command::Perspective { .. } => unreachable!("generative commands always produce plans"),
        }
        Ok(())
    }

    /// Moves every highlight on `card_id` through `edit`; drops the ones it overlaps.
    fn rebase_highlights(
        &mut self,
        card_id: &CardId,
        edit: Option<TextEdit>,
        story_len: usize,
    ) -> Result<Vec<HighlightId>, SessionError> {
        let Some(edit) = edit else { return Ok(Vec::new()) };
        let mut outcomes = Vec::new();
        for h in self.highlights.values().filter(|h| h.card_id() == card_id) {
            outcomes.push((h.id.clone(), rebase_anchor(&h.anchor, edit, story_len)?));
        }
        let mut dropped = Vec::new();
        for (id, outcome) in outcomes {
            match outcome {
                Rebase::Kept(anchor) => self.highlights.get_mut(&id).expect("present").anchor = anchor,
                Rebase::Invalidated => {
                    self.highlights.remove(&id);
                    self.clusters.remove_highlight(&id);
                    dropped.push(id);
                }
            }
        }
        Ok(dropped)
    }

    /// Prepare, generate and commit in one go. Convenient when nothing else
    /// touches the session concurrently (tests, replay, the CLI).
    pub async fn execute(
        &mut self,
        command: Command,
        orchestrator: &Orchestrator,
        uploads: Vec<EncodedImage>,
        at: u64,
    ) -> Result<Applied, SessionError> {
        let prepared = self.prepare(&command, &uploads)?;
        let generated = orchestrator.generate_all(&prepared.plans).await?;
        self.commit(command, prepared, generated, uploads, at)
    }

    /// Rebuilds a session by re-running `events` from an empty state whose
    /// asset store is preloaded with `assets`.
    pub async fn replay(
        id: impl Into<String>,
        events: &[Event],
        assets: AssetStore,
        orchestrator: &Orchestrator,
    ) -> Result<Session, ReplayError> {
        let mut session = Session::new(id);
        session.assets = assets;
        for event in events {
            let applied = session
                .execute(event.command.clone(), orchestrator, Vec::new(), event.at)
                .await
                .map_err(|source| ReplayError::Failed { seq: event.seq, source })?;
            if applied.seq != event.seq {
                return Err(ReplayError::SequenceGap { expected: event.seq, found: applied.seq });
            }
        }
        Ok(session)
    }

    pub fn materials(&self, name: &str, kind: ObjectKind) -> Result<ClusterEntry, SessionError> {
        Ok(self.clusters.materials(name, kind)?)
    }

    /// Asks the text agent for a structured summary of one object's cluster.
    pub async fn summarize(
        &self,
        name: &str,
        kind: ObjectKind,
        orchestrator: &Orchestrator,
    ) -> Result<StructuredSummary, SessionError> {
        let request = self.clusters.summary_request(name, kind, &self.context.theme)?;
        let reply = orchestrator.summarize(&request).await?;
        Ok(StructuredSummary {
            source_highlight_ids: request.source_highlight_ids(),
            object: request.object,
            settings: reply.settings,
            description: reply.description,
            plot: reply.plot,
        })
    }

    pub fn metrics(&self) -> Result<ExplorationMetrics, MetricsError> {
        compute_metrics(&self.graph)
    }

    /// Checks cross-structure invariants. Used after import.
    pub fn check_invariants(&self) -> Result<(), String> {
        let card_ids: Vec<&CardId> = self.cards.keys().collect();
        let node_ids: Vec<&CardId> = self.graph.nodes().iter().collect();
        if card_ids != node_ids {
            return Err("graph nodes differ from card set".into());
        }
        self.graph.validate().map_err(|e| e.to_string())?;
        for (id, card) in &self.cards {
            if &card.id != id {
                return Err(format!("card stored under `{id}` has id `{}`", card.id));
            }
            if !self.assets.contains(&card.image.asset_id) {
                return Err(format!("card `{id}` image asset is missing"));
            }
        }
        for (id, h) in &self.highlights {
            if &h.id != id {
                return Err(format!("highlight stored under `{id}` has id `{}`", h.id));
            }
            let Some(card) = self.cards.get(h.card_id()) else {
                return Err(format!("highlight `{id}` points at a missing card"));
            };
            if crate::card::char_slice(&card.story, h.anchor.start, h.anchor.end) != Some(h.anchor.snapshot.as_str()) {
                return Err(format!("highlight `{id}` anchor does not match its card story"));
            }
        }
        if self.event_log.windows(2).any(|w| w[1].at < w[0].at || w[1].seq != w[0].seq + 1) {
            return Err("event log is out of order".into());
        }
        if self.event_log.first().is_some_and(|e| e.seq != 1) {
            return Err("event log must start at seq 1".into());
        }
        Ok(())
    }

    /// Derived state (cluster index) recomputed from the highlights.
    pub(crate) fn rebuild_derived(&mut self) {
        let cards = &self.cards;
        self.clusters = ClusterIndex::rebuild(self.highlights.values(), |c| cards.contains_key(c));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("event {seq} failed on replay: {source}")]
    Failed { seq: u64, source: SessionError },
    #[error("replay produced seq {found}, log says {expected}")]
    SequenceGap { expected: u64, found: u64 },
}

pub fn card_id(n: u64) -> CardId {
    CardId::new(format!("card-{n:04}"))
}

fn check_objects(objects: &[NarrativeObject]) -> Result<(), SessionError> {
    match objects.iter().find(|o| o.name.trim().is_empty()) {
        Some(_) => Err(SessionError::InvalidObject("object names must not be blank".into())),
        None => Ok(()),
    }
}

/// New story text plus the single edit that produced it (`None` when unchanged).
fn resolve_edit(old: &str, edit: &StoryEdit) -> Result<(String, Option<TextEdit>), SessionError> {
    let (story, text_edit) = match edit {
        StoryEdit::Replace { story } => (story.clone(), TextEdit::between(old, story)),
        StoryEdit::Splice { position, deleted_len, text } => {
            let len = char_len(old);
            let end = position + deleted_len;
            if end > len {
                return Err(AnchorError::OutOfBounds { start: *position, end, len }.into());
            }
            let chars: Vec<char> = old.chars().collect();
            let story: String =
                chars[..*position].iter().chain(text.chars().collect::<Vec<_>>().iter()).chain(&chars[end..]).collect();
            let te = TextEdit::replace(*position, *deleted_len, char_len(text));
            (story, (!te.is_noop()).then_some(te))
        }
    };
    if story.trim().is_empty() {
        return Err(SessionError::EmptyStory);
    }
    Ok((story, text_edit))
}
