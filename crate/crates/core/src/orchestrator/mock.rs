//! Deterministic providers for tests and `MOCK_MODE=1`.
//!
//! Replies depend only on the request contents: the text mock echoes the
//! focal text and object names, the image mock paints a solid color derived
//! from the consolidated prompt.

use std::collections::VecDeque;
use std::sync::Mutex;

use async_trait::async_trait;
use sha2::{Digest, Sha256};

use super::provider::{CallPayload, ImageAgentRequest, ImageProvider, ProviderError, TextCall, TextProvider};
use super::reply::{SummaryReply, TextAgentReply, INSUFFICIENT_MATERIAL};
use crate::card::{word_count, STORY_WORD_CAP};
use crate::cluster::SummaryRequest;
use crate::instruments::{imaging, GenerationRequest, PlacementSource};

fn focal_text(request: &GenerationRequest) -> String {
    if let Some(focal) = request.focal_text.as_deref().filter(|t| !t.trim().is_empty()) {
        return focal.to_owned();
    }
    if let Some(typed) = request.intent.typed_text.as_deref().filter(|t| !t.trim().is_empty()) {
        return typed.to_owned();
    }
    let notes: Vec<&str> = request
        .placements
        .iter()
        .flatten()
        .filter_map(|p| match &p.source {
            PlacementSource::TextNote { text } => Some(text.as_str()),
            _ => None,
        })
        .collect();
    if !notes.is_empty() {
        return notes.join(" ");
    }
    match request.sources.first() {
        Some(source) => source.story.clone(),
        None => "visual intent".to_owned(),
    }
}

fn stroke_count(request: &GenerationRequest) -> usize {
    let intent = request.intent.sketch_strokes.as_ref().map_or(0, Vec::len);
    let placed: usize = request
        .placements
        .iter()
        .flatten()
        .map(|p| match &p.source {
            PlacementSource::SketchFragment { strokes } => strokes.len(),
            _ => 0,
        })
        .sum();
    intent + placed
}

/// The mock text agent's answer to a generation request.
///
/// `story` is `MOCK[<focal>] objects: <names>`, kept within the word cap by
/// dropping object names first and then trailing focal words.
pub fn mock_reply(request: &GenerationRequest) -> TextAgentReply {
    let focal = focal_text(request);
    let mut names: Vec<String> = request.objects().into_iter().map(|o| o.name).collect();

    let focal_words = word_count(&focal);
    let budget = STORY_WORD_CAP - 1; // "objects:"
    while !names.is_empty() && focal_words + names.iter().map(|n| word_count(n)).sum::<usize>() > budget {
        names.pop();
    }
    let focal =
        if focal_words > budget { focal.split_whitespace().take(budget).collect::<Vec<_>>().join(" ") } else { focal };
    let story = format!("MOCK[{focal}] objects: {}", names.join(", ")).trim_end().to_owned();

    let mut intention = match request.intent.typed_text.as_deref() {
        Some(text) => text.to_owned(),
        None => {
            let refs: Vec<&str> = request.intent.reference_cards.iter().map(|c| c.as_str()).collect();
            format!("{} from [{}]", request.mode.as_str(), refs.join(", "))
        }
    };
    if let Some(axis) = request.variation {
        intention.push_str(&format!(" (vary {})", axis.as_str()));
    }

    let strokes = stroke_count(request);
    let sketch_information =
        if strokes == 0 { "none".to_owned() } else { format!("follow the layout of {strokes} sketched strokes") };

    TextAgentReply { story, intention, sketch_information }
}

/// Each section concatenates the contributing snapshots (or comments when no
/// text was highlighted).
pub fn mock_summary(request: &SummaryRequest) -> SummaryReply {
    let material: Vec<&str> = if request.segments.is_empty() {
        request.comments.iter().map(|c| c.text.as_str()).collect()
    } else {
        request.segments.iter().map(|s| s.snapshot.as_str()).collect()
    };
    if material.is_empty() {
        let none = INSUFFICIENT_MATERIAL.to_owned();
        return SummaryReply { settings: none.clone(), description: none.clone(), plot: none };
    }
    let joined = material.join(" | ");
    let name = &request.object.name;
    SummaryReply {
        settings: format!("settings of {name}: {joined}"),
        description: format!("description of {name}: {joined}"),
        plot: format!("plot of {name}: {joined}"),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockTextProvider;

#[async_trait]
impl TextProvider for MockTextProvider {
    async fn complete(&self, call: &TextCall) -> Result<String, ProviderError> {
        let json = match &call.payload {
            CallPayload::Generation(req) => serde_json::to_string(&mock_reply(req)),
            CallPayload::Summary(req) => serde_json::to_string(&mock_summary(req)),
        };
        Ok(json.expect("mock replies serialize"))
    }
}

pub const DEFAULT_MOCK_IMAGE_SIDE: u32 = 64;

#[derive(Debug, Clone, Copy)]
pub struct MockImageProvider {
    pub width: u32,
    pub height: u32,
}

impl Default for MockImageProvider {
    fn default() -> Self {
        Self { width: DEFAULT_MOCK_IMAGE_SIDE, height: DEFAULT_MOCK_IMAGE_SIDE }
    }
}

/// First three bytes of the prompt's SHA-256.
pub fn prompt_color(prompt: &str) -> [u8; 3] {
    let digest = Sha256::digest(prompt.as_bytes());
    [digest[0], digest[1], digest[2]]
}

#[async_trait]
impl ImageProvider for MockImageProvider {
    async fn render(&self, request: &ImageAgentRequest) -> Result<Vec<u8>, ProviderError> {
        imaging::solid_png(self.width, self.height, prompt_color(&request.consolidated_prompt))
            .map(|img| img.bytes)
            .map_err(|e| ProviderError::BadResponse(e.to_string()))
    }
}

/// Replays canned text replies in order, then repeats the last one.
/// Records every call it receives.
#[derive(Debug, Default)]
pub struct ScriptedTextProvider {
    script: Mutex<VecDeque<Result<String, ProviderError>>>,
    last: Mutex<Option<Result<String, ProviderError>>>,
    calls: Mutex<Vec<TextCall>>,
}

impl ScriptedTextProvider {
    pub fn new(script: impl IntoIterator<Item = Result<String, ProviderError>>) -> Self {
        Self { script: Mutex::new(script.into_iter().collect()), ..Self::default() }
    }

    pub fn calls(&self) -> Vec<TextCall> {
        self.calls.lock().expect("calls lock").clone()
    }
}

#[async_trait]
impl TextProvider for ScriptedTextProvider {
    async fn complete(&self, call: &TextCall) -> Result<String, ProviderError> {
        self.calls.lock().expect("calls lock").push(call.clone());
        let next = self.script.lock().expect("script lock").pop_front();
        let mut last = self.last.lock().expect("last lock");
        match next {
            Some(r) => {
                *last = Some(r.clone());
                r
            }
            None => last.clone().unwrap_or_else(|| Err(ProviderError::BadResponse("script exhausted".into()))),
        }
    }
}
