//! Generation modes and editing instruments.
//!
//! Every operation here is pure: it reads source cards and assets through a
//! [`Workspace`], validates its inputs and returns one [`GenerationPlan`] per
//! card to be generated. A plan holds the serialized generation request, the
//! prompt slots, the image-agent inputs and a card draft. Once the
//! orchestrator has replies, [`GenerationPlan::complete`] turns them into a
//! card and its provenance edges.

mod filter;
pub mod imaging;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::card::{
    char_len, char_slice, dedup_objects, AssetId, Card, CardId, ImageAssetRef, InstrumentKind, NarrativeObject,
    ProvenanceEdge, VariationAxis, Voice,
};
use crate::orchestrator::TextAgentReply;

pub use filter::FilterKind;
pub use imaging::{EncodedImage, ImagingError, PixelRect, Point, Stroke};

/// Read access to the cards and image bytes an operation may consume.
pub trait Workspace {
    fn card(&self, id: &CardId) -> Option<&Card>;
    fn asset(&self, id: &AssetId) -> Option<&[u8]>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstrumentError {
    #[error("intent carries no text, screenshot, sketch or reference card")]
    EmptyIntent,
    #[error("generation accepts at most one reference card, got {0}; use collage to combine cards")]
    MultipleReferences(usize),
    #[error("unknown card `{0}`")]
    UnknownCard(CardId),
    #[error("asset `{0}` is not in the session store")]
    MissingAsset(AssetId),
    #[error("empty range [{start}, {end})")]
    EmptyRange { start: usize, end: usize },
    #[error("range [{start}, {end}) out of bounds for story of length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("polygon needs at least 3 non-collinear vertices")]
    DegeneratePolygon,
    #[error("polygon lies outside the {width}x{height} image")]
    PolygonOutOfBounds { width: u32, height: u32 },
    #[error("collage frame has no placements")]
    EmptyFrame,
    #[error("crop {rect:?} does not fit card `{card_id}` image ({width}x{height})")]
    BadCropRect { card_id: CardId, rect: PixelRect, width: u32, height: u32 },
    #[error("placement {index}: {reason}")]
    BadPlacement { index: usize, reason: String },
    #[error("card is already narrated in the {} person", .0.as_str())]
    SameVoice(Voice),
    #[error(transparent)]
    Imaging(ImagingError),
}

impl From<ImagingError> for InstrumentError {
    fn from(e: ImagingError) -> Self {
        match e {
            ImagingError::DegeneratePolygon => InstrumentError::DegeneratePolygon,
            ImagingError::OutOfBounds { width, height } => InstrumentError::PolygonOutOfBounds { width, height },
            other => InstrumentError::Imaging(other),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationContext {
    pub global_theme: String,
    pub prior_text: String,
}

/// What the writer expressed on the canvas for a new generation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultimodalIntent {
    #[serde(default)]
    pub typed_text: Option<String>,
    #[serde(default)]
    pub screenshot: Option<ImageAssetRef>,
    #[serde(default)]
    pub sketch_strokes: Option<Vec<Stroke>>,
    #[serde(default)]
    pub reference_cards: Vec<CardId>,
    #[serde(default)]
    pub global_theme: String,
    #[serde(default)]
    pub prior_text: String,
}

impl MultimodalIntent {
    pub fn text(text: impl Into<String>) -> Self {
        Self { typed_text: Some(text.into()), ..Self::default() }
    }

    fn typed(&self) -> Option<&str> {
        self.typed_text.as_deref().filter(|t| !t.trim().is_empty())
    }

    fn strokes(&self) -> Option<&[Stroke]> {
        self.sketch_strokes.as_deref().filter(|s| s.iter().any(|stroke| !stroke.is_empty()))
    }

    pub fn is_empty(&self) -> bool {
        self.typed().is_none()
            && self.screenshot.is_none()
            && self.strokes().is_none()
            && self.reference_cards.is_empty()
    }

    pub fn context(&self) -> GenerationContext {
        GenerationContext { global_theme: self.global_theme.clone(), prior_text: self.prior_text.clone() }
    }

    fn payload(&self) -> IntentPayload {
        IntentPayload {
            typed_text: self.typed().map(str::to_owned),
            screenshot: self.screenshot.clone(),
            sketch_strokes: self.strokes().map(<[Stroke]>::to_vec),
            reference_cards: self.reference_cards.clone(),
        }
    }

    /// Stable hash over the intent and its context.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&(self.payload(), self.context())).expect("intent serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// The intent section of a serialized generation request.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntentPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typed_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screenshot: Option<ImageAssetRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch_strokes: Option<Vec<Stroke>>,
    #[serde(default)]
    pub reference_cards: Vec<CardId>,
}

/// A card as it appears inside a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCard {
    pub card_id: CardId,
    pub story: String,
    pub objects: Vec<NarrativeObject>,
    pub voice: Voice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterKind>,
    pub image: ImageAssetRef,
}

impl From<&Card> for SourceCard {
    fn from(card: &Card) -> Self {
        Self {
            card_id: card.id.clone(),
            story: card.story.clone(),
            objects: card.objects.clone(),
            voice: card.voice,
            filter: card.filter,
            image: card.image.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub source_card: CardId,
    pub bbox: PixelRect,
    pub polygon: Vec<Point>,
    pub asset: ImageAssetRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlacementSource {
    SketchFragment { strokes: Vec<Stroke> },
    ImageCrop { card_id: CardId, rect: PixelRect },
    TextNote { text: String },
}

/// Normalized `[0, 1]` canvas-frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSize {
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub source: PlacementSource,
    pub position: FramePoint,
    pub size: FrameSize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollageFrame {
    pub placements: Vec<Placement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDelta {
    pub kind: FilterKind,
    pub image_style: String,
    pub text_tone: String,
}

impl FilterDelta {
    pub fn for_kind(kind: FilterKind) -> Self {
        Self {
            kind,
            image_style: kind.image_style_directive().to_owned(),
            text_tone: kind.text_tone_directive().to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoiceDelta {
    pub from: Voice,
    pub to: Voice,
    pub image_viewpoint: String,
    pub text_voice: String,
}

impl VoiceDelta {
    pub fn new(from: Voice, to: Voice) -> Self {
        let (image_viewpoint, text_voice) = match to {
            Voice::First => (
                "Move the camera to the narrator's own eyes: an eye-level, point-of-view shot of what they see",
                "Re-narrate in the first person (I, me, my) from the main character's point of view",
            ),
            Voice::Second => (
                "Place the viewer inside the scene as a participant, facing the action at close range",
                "Re-narrate in the second person (you, your), addressing the reader as the protagonist",
            ),
            Voice::Third => (
                "Pull the camera back to an outside observer's wide shot that shows the characters in their setting",
                "Re-narrate in the third person (he, she, they) from an observing narrator",
            ),
        };
        Self { from, to, image_viewpoint: image_viewpoint.to_owned(), text_voice: text_voice.to_owned() }
    }
}

/// Serialized request handed to the text agent. Field order is the wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub mode: InstrumentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placements: Option<Vec<Placement>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_delta: Option<FilterDelta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voice_target: Option<VoiceDelta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variation: Option<VariationAxis>,
    pub intent: IntentPayload,
    pub context: GenerationContext,
    pub sources: Vec<SourceCard>,
}

impl GenerationRequest {
    fn new(mode: InstrumentKind, intent: IntentPayload, context: GenerationContext, sources: Vec<SourceCard>) -> Self {
        Self {
            mode,
            focal_text: None,
            crop: None,
            placements: None,
            filter_delta: None,
            voice_target: None,
            variation: None,
            intent,
            context,
            sources,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("generation request serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("generation request serializes")
    }

    pub fn objects(&self) -> Vec<NarrativeObject> {
        dedup_objects(self.sources.iter().flat_map(|s| &s.objects))
    }
}

/// Everything about the card to be created that does not come from a reply.
#[derive(Debug, Clone, PartialEq)]
pub struct CardDraft {
    pub origin: InstrumentKind,
    pub objects: Vec<NarrativeObject>,
    pub voice: Voice,
    pub filter: Option<FilterKind>,
    pub variation: Option<VariationAxis>,
    pub intent_hash: Option<String>,
}

/// Inputs for the image agent that the instrument decides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageInputs {
    pub scaffold: Option<Vec<u8>>,
    pub references: Vec<Vec<u8>>,
    pub style_controls: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationPlan {
    pub request: GenerationRequest,
    /// Prompt-library template for the text agent.
    pub template_id: String,
    pub slots: BTreeMap<String, String>,
    /// Images shown to the text agent (screenshot or lasso crop).
    pub text_images: Vec<Vec<u8>>,
    pub image: ImageInputs,
    pub parents: Vec<CardId>,
    pub draft: CardDraft,
    /// Assets produced while planning (crops, scaffolds) that must be stored
    /// with the resulting card.
    pub new_assets: Vec<EncodedImage>,
}

/// A finished card plus one edge per consumed source card.
#[derive(Debug, Clone, PartialEq)]
pub struct Derived {
    pub card: Card,
    pub edges: Vec<ProvenanceEdge>,
}

impl GenerationPlan {
    pub fn complete(&self, reply: &TextAgentReply, image: ImageAssetRef, id: CardId, created_at: u64) -> Derived {
        let edges =
            self.parents.iter().map(|p| ProvenanceEdge::new(p.clone(), id.clone(), self.draft.origin)).collect();
        let card = Card {
            id,
            story: reply.story.clone(),
            image,
            objects: self.draft.objects.clone(),
            voice: self.draft.voice,
            filter: self.draft.filter,
            created_at,
            origin: self.draft.origin,
            variation: self.draft.variation,
            intent_hash: self.draft.intent_hash.clone(),
        };
        Derived { card, edges }
    }
}

fn slots(text: &str, sources: &[SourceCard], ctx: &GenerationContext, instruction: &str) -> BTreeMap<String, String> {
    let previous = sources.iter().map(|s| s.story.as_str()).collect::<Vec<_>>().join("\n\n");
    [
        ("text", text.to_owned()),
        ("previous_text", previous),
        ("full_text", ctx.prior_text.clone()),
        ("global_theme", ctx.global_theme.clone()),
        ("instruction", instruction.to_owned()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect()
}

fn lookup_card<'a, W: Workspace + ?Sized>(ws: &'a W, id: &CardId) -> Result<&'a Card, InstrumentError> {
    ws.card(id).ok_or_else(|| InstrumentError::UnknownCard(id.clone()))
}

fn image_bytes<W: Workspace + ?Sized>(ws: &W, image: &ImageAssetRef) -> Result<Vec<u8>, InstrumentError> {
    ws.asset(&image.asset_id).map(<[u8]>::to_vec).ok_or_else(|| InstrumentError::MissingAsset(image.asset_id.clone()))
}

const EXACT_INSTRUCTION: &str =
    "Stay close to what the writer expressed. Make it concrete; do not introduce characters, places or objects the intent does not imply.";

fn variation_instruction(axis: VariationAxis) -> &'static str {
    match axis {
        VariationAxis::Character => {
            "Keep the setting and key objects, but vary the characters: who is present, how they look, what they want."
        }
        VariationAxis::Setting => {
            "Keep the characters and key objects, but move the moment to a different setting, time or atmosphere."
        }
        VariationAxis::Object => {
            "Keep the characters and setting, but change the central object or prop the moment turns on."
        }
    }
}

struct IntentPlanParts {
    request: GenerationRequest,
    sources: Vec<SourceCard>,
    text_images: Vec<Vec<u8>>,
    scaffold: Option<EncodedImage>,
    references: Vec<Vec<u8>>,
    voice: Voice,
    hash: String,
}

fn intent_parts<W: Workspace + ?Sized>(
    ws: &W,
    intent: &MultimodalIntent,
    mode: InstrumentKind,
) -> Result<IntentPlanParts, InstrumentError> {
    if intent.is_empty() {
        return Err(InstrumentError::EmptyIntent);
    }
    if intent.reference_cards.len() > 1 {
        return Err(InstrumentError::MultipleReferences(intent.reference_cards.len()));
    }
    let cards = intent.reference_cards.iter().map(|id| lookup_card(ws, id)).collect::<Result<Vec<_>, _>>()?;
    let references = cards.iter().map(|c| image_bytes(ws, &c.image)).collect::<Result<Vec<_>, _>>()?;
    let text_images = match &intent.screenshot {
        Some(shot) => vec![image_bytes(ws, shot)?],
        None => Vec::new(),
    };
    let scaffold = match intent.strokes() {
        Some(strokes) => imaging::rasterize_strokes(strokes)?,
        None => None,
    };
    let sources: Vec<SourceCard> = cards.iter().map(|c| SourceCard::from(*c)).collect();
    let voice = cards.first().map_or(Voice::Third, |c| c.voice);
    let request = GenerationRequest::new(mode, intent.payload(), intent.context(), sources.clone());
    Ok(IntentPlanParts { request, sources, text_images, scaffold, references, voice, hash: intent.hash() })
}

fn intent_plan(parts: &IntentPlanParts, intent: &MultimodalIntent, variation: Option<VariationAxis>) -> GenerationPlan {
    let mode = parts.request.mode;
    let mut request = parts.request.clone();
    request.variation = variation;
    let instruction = variation.map_or(EXACT_INSTRUCTION, variation_instruction);
    let text = intent.typed().unwrap_or_default();
    GenerationPlan {
        template_id: mode.as_str().to_owned(),
        slots: slots(text, &parts.sources, &intent.context(), instruction),
        text_images: parts.text_images.clone(),
        image: ImageInputs {
            scaffold: parts.scaffold.as_ref().map(|s| s.bytes.clone()),
            references: parts.references.clone(),
            style_controls: variation.map(variation_instruction).unwrap_or_default().to_owned(),
        },
        parents: intent.reference_cards.clone(),
        draft: CardDraft {
            origin: mode,
            objects: request.objects(),
            voice: parts.voice,
            filter: None,
            variation,
            intent_hash: Some(parts.hash.clone()),
        },
        new_assets: parts.scaffold.iter().cloned().collect(),
        request,
    }
}

/// One card that follows the intent closely.
pub fn exact_craft<W: Workspace + ?Sized>(
    ws: &W,
    intent: &MultimodalIntent,
) -> Result<GenerationPlan, InstrumentError> {
    let parts = intent_parts(ws, intent, InstrumentKind::ExactCraft)?;
    Ok(intent_plan(&parts, intent, None))
}

/// Three sibling cards varying character, setting and object respectively.
pub fn creative_spark<W: Workspace + ?Sized>(
    ws: &W,
    intent: &MultimodalIntent,
) -> Result<[GenerationPlan; 3], InstrumentError> {
    let parts = intent_parts(ws, intent, InstrumentKind::CreativeSpark)?;
    Ok(VariationAxis::ORDER.map(|axis| intent_plan(&parts, intent, Some(axis))))
}

fn single_source_plan(
    source: &Card,
    request: GenerationRequest,
    instruction: &str,
    text: &str,
    image: ImageInputs,
    draft: CardDraft,
) -> GenerationPlan {
    GenerationPlan {
        template_id: request.mode.as_str().to_owned(),
        slots: slots(text, &request.sources, &request.context, instruction),
        text_images: Vec::new(),
        image,
        parents: vec![source.id.clone()],
        draft,
        new_assets: Vec::new(),
        request,
    }
}

fn source_intent(source: &Card) -> IntentPayload {
    IntentPayload { reference_cards: vec![source.id.clone()], ..IntentPayload::default() }
}

const LASSO_TEXT_INSTRUCTION: &str =
    "Focus only on the selected passage. Expand it into its own scene with richer narrative and visual detail.";
const LASSO_IMAGE_INSTRUCTION: &str =
    "Focus only on the selected image region. Describe it as its own scene, using the source story only as background.";

/// New card elaborating a character range `[start, end)` of the source story.
pub fn lasso_text<W: Workspace + ?Sized>(
    ws: &W,
    source: &Card,
    start: usize,
    end: usize,
    ctx: &GenerationContext,
) -> Result<GenerationPlan, InstrumentError> {
    if start >= end {
        return Err(InstrumentError::EmptyRange { start, end });
    }
    let len = char_len(&source.story);
    let focal = char_slice(&source.story, start, end).ok_or(InstrumentError::OutOfBounds { start, end, len })?;

    let mut request =
        GenerationRequest::new(InstrumentKind::Lasso, source_intent(source), ctx.clone(), vec![source.into()]);
    request.focal_text = Some(focal.to_owned());

    let focal_lower = focal.to_lowercase();
    let objects =
        source.objects.iter().filter(|o| focal_lower.contains(&o.name.trim().to_lowercase())).cloned().collect();
    let image = ImageInputs {
        scaffold: None,
        references: vec![image_bytes(ws, &source.image)?],
        style_controls: String::new(),
    };
    let draft = CardDraft {
        origin: InstrumentKind::Lasso,
        objects,
        voice: source.voice,
        filter: source.filter,
        variation: None,
        intent_hash: None,
    };
    Ok(single_source_plan(source, request, LASSO_TEXT_INSTRUCTION, focal, image, draft))
}

/// New card focused on a polygonal region of the source image.
pub fn lasso_image<W: Workspace + ?Sized>(
    ws: &W,
    source: &Card,
    polygon: &[Point],
    ctx: &GenerationContext,
) -> Result<GenerationPlan, InstrumentError> {
    if polygon.len() < 3 {
        return Err(InstrumentError::DegeneratePolygon);
    }
    let png = image_bytes(ws, &source.image)?;
    let crop = imaging::crop_polygon(&png, polygon)?;

    let mut request =
        GenerationRequest::new(InstrumentKind::Lasso, source_intent(source), ctx.clone(), vec![source.into()]);
    request.crop = Some(CropSpec {
        source_card: source.id.clone(),
        bbox: crop.bbox,
        polygon: polygon.to_vec(),
        asset: crop.image.asset.clone(),
    });

    let image =
        ImageInputs { scaffold: None, references: vec![crop.image.bytes.clone()], style_controls: String::new() };
    let draft = CardDraft {
        origin: InstrumentKind::Lasso,
        objects: source.objects.clone(),
        voice: source.voice,
        filter: source.filter,
        variation: None,
        intent_hash: None,
    };
    let mut plan = single_source_plan(source, request, LASSO_IMAGE_INSTRUCTION, &source.story, image, draft);
    plan.text_images = vec![crop.image.bytes.clone()];
    plan.new_assets = vec![crop.image];
    Ok(plan)
}

fn check_unit(v: f64) -> bool {
    v.is_finite() && (0.0..=1.0).contains(&v)
}

fn describe_layout(placements: &[Placement]) -> String {
    placements
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let what = match &p.source {
                PlacementSource::SketchFragment { strokes } => format!("sketch fragment ({} strokes)", strokes.len()),
                PlacementSource::ImageCrop { card_id, .. } => format!("image crop from {card_id}"),
                PlacementSource::TextNote { text } => format!("text note \"{text}\""),
            };
            format!(
                "[{}] {what} at ({:.2}, {:.2}) size {:.2}x{:.2}",
                i + 1,
                p.position.x,
                p.position.y,
                p.size.w,
                p.size.h
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// One card composed from a frame of sketches, image crops and text notes.
/// Placements are serialized top-to-bottom, then left-to-right.
pub fn collage<W: Workspace + ?Sized>(
    ws: &W,
    frame: &CollageFrame,
    intent_text: Option<&str>,
    ctx: &GenerationContext,
) -> Result<GenerationPlan, InstrumentError> {
    if frame.placements.is_empty() {
        return Err(InstrumentError::EmptyFrame);
    }

    let mut contributing: Vec<&Card> = Vec::new();
    let mut crops: Vec<(usize, Vec<u8>)> = Vec::new();
    let mut sketches: Vec<Stroke> = Vec::new();
    for (index, p) in frame.placements.iter().enumerate() {
        let bad = |reason: &str| InstrumentError::BadPlacement { index, reason: reason.to_owned() };
        if !(check_unit(p.position.x) && check_unit(p.position.y)) {
            return Err(bad("position must lie in [0, 1]"));
        }
        if !(check_unit(p.size.w) && check_unit(p.size.h)) || p.size.w == 0.0 || p.size.h == 0.0 {
            return Err(bad("size must lie in (0, 1]"));
        }
        match &p.source {
            PlacementSource::SketchFragment { strokes } => {
                if strokes.iter().all(Vec::is_empty) {
                    return Err(bad("empty sketch fragment"));
                }
                sketches.extend(strokes.iter().cloned());
            }
            PlacementSource::TextNote { text } => {
                if text.trim().is_empty() {
                    return Err(bad("empty text note"));
                }
            }
            PlacementSource::ImageCrop { card_id, rect } => {
                let card = lookup_card(ws, card_id)?;
                if !rect.fits_within(card.image.width, card.image.height) {
                    return Err(InstrumentError::BadCropRect {
                        card_id: card_id.clone(),
                        rect: *rect,
                        width: card.image.width,
                        height: card.image.height,
                    });
                }
                let png = image_bytes(ws, &card.image)?;
                crops.push((index, imaging::crop_rect(&png, *rect)?.bytes));
                if !contributing.iter().any(|c| c.id == card.id) {
                    contributing.push(card);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..frame.placements.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&frame.placements[a].position, &frame.placements[b].position);
        pa.y.total_cmp(&pb.y).then(pa.x.total_cmp(&pb.x))
    });
    let placements: Vec<Placement> = order.iter().map(|&i| frame.placements[i].clone()).collect();
    // parents and crop references follow layout order as well
    contributing.sort_by_key(|c| {
        order.iter().position(
            |&i| matches!(&frame.placements[i].source, PlacementSource::ImageCrop { card_id, .. } if *card_id == c.id),
        )
    });
    crops.sort_by_key(|(i, _)| order.iter().position(|o| o == i));

    let sources: Vec<SourceCard> = contributing.iter().map(|c| SourceCard::from(*c)).collect();
    let intent = IntentPayload {
        typed_text: intent_text.filter(|t| !t.trim().is_empty()).map(str::to_owned),
        reference_cards: contributing.iter().map(|c| c.id.clone()).collect(),
        ..IntentPayload::default()
    };
    let layout = describe_layout(&placements);
    let mut request = GenerationRequest::new(InstrumentKind::Collage, intent, ctx.clone(), sources);
    request.placements = Some(placements);

    let scaffold = imaging::rasterize_strokes(&sketches)?;
    let notes: Vec<&str> = request
        .placements
        .iter()
        .flatten()
        .filter_map(|p| match &p.source {
            PlacementSource::TextNote { text } => Some(text.as_str()),
            _ => None,
        })
        .collect();
    let text = std::iter::once(intent_text.unwrap_or_default())
        .chain(notes)
        .filter(|t| !t.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    let instruction =
        format!("Read the spatial arrangement as narrative intent and situate the pieces together: {layout}");

    Ok(GenerationPlan {
        template_id: InstrumentKind::Collage.as_str().to_owned(),
        slots: slots(&text, &request.sources, ctx, &instruction),
        text_images: Vec::new(),
        image: ImageInputs {
            scaffold: scaffold.as_ref().map(|s| s.bytes.clone()),
            references: crops.into_iter().map(|(_, b)| b).collect(),
            style_controls: format!("layout: {layout}"),
        },
        parents: contributing.iter().map(|c| c.id.clone()).collect(),
        draft: CardDraft {
            origin: InstrumentKind::Collage,
            objects: request.objects(),
            voice: Voice::Third,
            filter: None,
            variation: None,
            intent_hash: None,
        },
        new_assets: scaffold.into_iter().collect(),
        request,
    })
}

/// Restyles image and prose together. Replaces any previous filter; object
/// keywords carry over unchanged.
pub fn apply_filter<W: Workspace + ?Sized>(
    ws: &W,
    source: &Card,
    kind: FilterKind,
    ctx: &GenerationContext,
) -> Result<GenerationPlan, InstrumentError> {
    let delta = FilterDelta::for_kind(kind);
    let mut request =
        GenerationRequest::new(InstrumentKind::Filter, source_intent(source), ctx.clone(), vec![source.into()]);
    let instruction =
        format!("Rewrite the story keeping its events; adjust the tone so it {}.", lowercase_first(&delta.text_tone));
    let image = ImageInputs {
        scaffold: None,
        references: vec![image_bytes(ws, &source.image)?],
        style_controls: delta.image_style.clone(),
    };
    request.filter_delta = Some(delta);
    let draft = CardDraft {
        origin: InstrumentKind::Filter,
        objects: source.objects.clone(),
        voice: source.voice,
        filter: Some(kind),
        variation: None,
        intent_hash: None,
    };
    Ok(single_source_plan(source, request, &instruction, &source.story, image, draft))
}

fn lowercase_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Re-voices the story and moves the image viewpoint to match.
pub fn shift_perspective<W: Workspace + ?Sized>(
    ws: &W,
    source: &Card,
    target: Voice,
    ctx: &GenerationContext,
) -> Result<GenerationPlan, InstrumentError> {
    if target == source.voice {
        return Err(InstrumentError::SameVoice(target));
    }
    let delta = VoiceDelta::new(source.voice, target);
    let mut request = GenerationRequest::new(
        InstrumentKind::PerspectiveShift,
        source_intent(source),
        ctx.clone(),
        vec![source.into()],
    );
    let instruction = format!("{}. Keep the events and objects unchanged.", delta.text_voice);
    let image = ImageInputs {
        scaffold: None,
        references: vec![image_bytes(ws, &source.image)?],
        style_controls: delta.image_viewpoint.clone(),
    };
    request.voice_target = Some(delta);
    let draft = CardDraft {
        origin: InstrumentKind::PerspectiveShift,
        objects: source.objects.clone(),
        voice: target,
        filter: source.filter,
        variation: None,
        intent_hash: None,
    };
    Ok(single_source_plan(source, request, &instruction, &source.story, image, draft))
}
