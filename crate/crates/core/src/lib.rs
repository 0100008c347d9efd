//! Engine for multimodal story cards.
//!
//! Cards pair a short story with an image. Instruments derive new cards from
//! existing ones, a provenance graph records which card came from which, and
//! an object-centered index groups writer highlights. Generation goes through
//! a text agent and an image agent behind swappable providers.

pub mod card;
pub mod cluster;
pub mod instruments;
pub mod orchestrator;
pub mod session;

pub use card::{
    AssetId, Card, CardId, Highlight, HighlightId, ImageAssetRef, InstrumentKind, NarrativeObject, ObjectKey,
    ObjectKind, ProvenanceEdge, ProvenanceGraph, TextAnchor, TextEdit, VariationAxis, Voice,
};
pub use cluster::{ClusterEntry, ClusterIndex, StructuredSummary};
pub use instruments::{FilterKind, GenerationPlan, GenerationRequest, MultimodalIntent};
pub use orchestrator::{Orchestrator, OrchestratorError, ProviderConfig};
pub use session::{Command, Event, ExplorationMetrics, Session, SessionError};
